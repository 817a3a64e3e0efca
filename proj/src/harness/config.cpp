#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/version.hpp"

namespace layerseg::harness {
namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

const std::vector<KeyDefault>& defaults(const std::string& command) {
  static const std::map<std::string, std::vector<KeyDefault>> table = {
      {"gen",
       {{"out", ""},
        {"scenes", "90"},
        {"seed", "0"},
        {"num_views", "13"},
        {"rays_per_view", "2000"},
        {"noise_sigma", "0.002"},
        {"camera_distance", "3"},
        {"weights", "uniform"},
        {"val_fraction", "0.2"},
        {"band_positive_fraction", "0.75"},
        {"ply_format", "binary"}}},
      {"train",
       {{"dataset", ""},
        {"out", ""},
        {"resume", ""},
        {"strategy", "s2"},
        {"backbone", "pt"},
        {"feature_width", "64"},
        {"depth", "2"},
        {"k_neighbors", "16"},
        {"ball_samples", "32"},
        {"radius", "0.1"},
        {"augment", "false"},
        {"epochs", "100"},
        {"batch_size", "8"},
        {"lr_peak", "0.005"},
        {"weight_decay", "0.01"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"pct_start", "0.5"},
        {"div_factor", "25"},
        {"final_div_factor", "10000"},
        {"points", "2048"},
        {"seed", "0"},
        {"class_weighting", "none"},
        {"stop_at_val_miou", "0"}}},
      {"eval",
       {{"checkpoint", ""},
        {"dataset", ""},
        {"out", ""},
        {"strategy", ""},
        {"split", "val"},
        {"points", "2048"},
        {"seed", "0"}}},
      {"export",
       {{"checkpoint", ""},
        {"scan", ""},
        {"out", ""},
        {"strategy", ""},
        {"points", "0"},
        {"seed", "0"}}},
  };
  auto it = table.find(command);
  if (it == table.end()) throw InvalidArgument("unknown command '" + command + "'");
  return it->second;
}

const std::set<std::string>& path_keys() {
  static const std::set<std::string> keys = {"out", "dataset", "resume", "checkpoint", "scan"};
  return keys;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig(std::string command) : command_(std::move(command)) {
  for (const auto& d : defaults(command_)) values_[d.key] = d.value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config '" + path + "' line " + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) {
    throw InvalidArgument("config: unknown key '" + key + "' for command '" + command_ + "'");
  }
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("config: unknown key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string v = get(key);
  long long out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw InvalidArgument("config: '" + key + "' must be an integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw InvalidArgument("config: '" + key + "' must be a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config: '" + key + "' must be true or false, got '" + v + "'");
}

std::string RunConfig::frozen() const {
  std::ostringstream os;
  os << "# layerseg " << kVersion << " " << command_ << " config_hash " << hash_hex() << "\n";
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  std::string canon = command_ + "\n";
  for (const auto& [k, v] : values_) {
    if (!path_keys().contains(k)) canon += k + "=" + v + "\n";
  }
  return fnv1a(canon);
}

std::string RunConfig::hash_hex() const { return hex64(hash()); }

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const EmptyScan*>(&e) ||
      dynamic_cast<const UndefinedLayer*>(&e)) {
    return 4;
  }
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const OutOfDomain*>(&e) ||
      dynamic_cast<const InvalidState*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace layerseg::harness
