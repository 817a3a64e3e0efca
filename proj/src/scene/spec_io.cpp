#include <charconv>
#include <map>
#include <sstream>
#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/scene.hpp"

namespace layerseg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw InvalidArgument("scene spec: bad value for " + key + ": '" + text + "'");
  }
  return v;
}

}  // namespace

std::string write_scene_spec(const SceneSpec& spec) {
  std::ostringstream os;
  os << "# layerseg scene spec\n"
     << "outfit.upper = " << garment_name(spec.upper) << "\n"
     << "outfit.lower = " << garment_name(spec.lower) << "\n"
     << "overlap_band_m = " << shortest(spec.overlap_band_m) << "\n"
     << "pose_seed = " << spec.pose_seed << "\n"
     << "shape_seed = " << spec.shape_seed << "\n";
  return os.str();
}

SceneSpec parse_scene_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("scene spec line " + std::to_string(lineno) + ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw InvalidArgument("scene spec: missing " + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  SceneSpec spec;
  spec.upper = parse_garment(take("outfit.upper"));
  spec.lower = parse_garment(take("outfit.lower"));
  spec.overlap_band_m = parse_number<double>("overlap_band_m", take("overlap_band_m"));
  spec.pose_seed = parse_number<std::uint64_t>("pose_seed", take("pose_seed"));
  spec.shape_seed = parse_number<std::uint64_t>("shape_seed", take("shape_seed"));
  if (!kv.empty()) throw InvalidArgument("scene spec: unknown key " + kv.begin()->first);
  if (!is_upper(spec.upper)) throw InvalidArgument("scene spec: outfit.upper is not an upper garment");
  if (!is_lower(spec.lower)) throw InvalidArgument("scene spec: outfit.lower is not a lower garment");
  return spec;
}

}  // namespace layerseg
