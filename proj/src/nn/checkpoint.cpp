#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/train.hpp"
#include "layerseg/version.hpp"

namespace layerseg::nn {
namespace {

constexpr char kMagic[8] = {'L', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kFloat32 = 1;

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_str(std::string& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b += s;
}

void put_tensor(std::string& b, const std::string& name, const Mat<float>& m) {
  put_str(b, name);
  put_u32(b, kFloat32);
  put_u32(b, 2);
  put_u64(b, static_cast<std::uint64_t>(m.rows()));
  put_u64(b, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u32(b, std::bit_cast<std::uint32_t>(m.data()[i]));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : d_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string str() {
    const auto n = static_cast<std::size_t>(uint(4));
    need(n);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == d_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("checkpoint '" + path_ + "': " + what);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > d_.size()) fail("truncated");
  }
  std::string d_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string heads_string(const std::vector<HeadSpec>& heads) {
  std::string s;
  for (const auto& h : heads) {
    if (!s.empty()) s += ",";
    s += h.name + ":" + std::to_string(h.classes);
  }
  return s;
}

const std::string& need_key(const std::map<std::string, std::string>& m, const std::string& k,
                            const Reader& r) {
  auto it = m.find(k);
  if (it == m.end()) r.fail("missing metadata '" + k + "'");
  return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state, Strategy strategy,
                     const std::map<std::string, std::string>& extra) {
  const ModelConfig& c = state.model.config();
  std::map<std::string, std::string> meta = extra;
  meta["version"] = std::string(kVersion);
  meta["strategy"] = std::string(strategy_name(strategy));
  meta["backbone"] = std::string(backbone_name(c.backbone));
  meta["feature_width"] = std::to_string(c.feature_width);
  meta["depth"] = std::to_string(c.depth);
  meta["k_neighbors"] = std::to_string(c.k_neighbors);
  meta["ball_samples"] = std::to_string(c.ball_samples);
  meta["radius"] = shortest(c.radius);
  meta["augment"] = c.augment ? "1" : "0";
  meta["heads"] = heads_string(c.heads);
  meta["epoch"] = std::to_string(state.epoch);
  meta["step"] = std::to_string(state.step);
  meta["adam_t"] = std::to_string(state.opt.t);

  std::string b(kMagic, sizeof kMagic);
  put_u32(b, kFormatVersion);
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(b, k);
    put_str(b, v);
  }
  const auto& params = state.model.parameters();
  const bool moments = !state.opt.m.empty();
  put_u32(b, static_cast<std::uint32_t>(params.size() * (moments ? 3 : 1)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_tensor(b, params[i].name, params[i].value);
    if (moments) {
      put_tensor(b, "adam.m/" + params[i].name, state.opt.m[i]);
      put_tensor(b, "adam.v/" + params[i].name, state.opt.v[i]);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str(), path);
  for (char c : kMagic) {
    if (static_cast<char>(r.uint(1)) != c) r.fail("bad magic");
  }
  if (r.uint(4) != kFormatVersion) r.fail("unsupported format version");

  Checkpoint ck;
  const auto nmeta = r.uint(4);
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  ModelConfig cfg;
  try {
    ck.strategy = parse_strategy(need_key(ck.meta, "strategy", r));
    cfg.backbone = parse_backbone(need_key(ck.meta, "backbone", r));
    cfg.feature_width = std::stoul(need_key(ck.meta, "feature_width", r));
    cfg.depth = std::stoul(need_key(ck.meta, "depth", r));
    cfg.k_neighbors = std::stoul(need_key(ck.meta, "k_neighbors", r));
    cfg.ball_samples = std::stoul(need_key(ck.meta, "ball_samples", r));
    cfg.radius = std::stod(need_key(ck.meta, "radius", r));
    cfg.augment = need_key(ck.meta, "augment", r) == "1";
    std::istringstream hs(need_key(ck.meta, "heads", r));
    std::string item;
    while (std::getline(hs, item, ',')) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos) r.fail("malformed heads entry '" + item + "'");
      cfg.heads.push_back({item.substr(0, colon), std::stoul(item.substr(colon + 1))});
    }
    ck.state.epoch = std::stoi(need_key(ck.meta, "epoch", r));
    ck.state.step = std::stoull(need_key(ck.meta, "step", r));
    ck.state.opt.t = std::stoull(need_key(ck.meta, "adam_t", r));
    ck.state.model = Model<float>(cfg, 0);
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    r.fail(std::string("bad metadata: ") + e.what());
  }

  auto& params = ck.state.model.parameters();
  std::map<std::string, Mat<float>> tensors;
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    if (r.uint(4) != kFloat32) r.fail("tensor '" + name + "' has an unsupported dtype");
    if (r.uint(4) != 2) r.fail("tensor '" + name + "' is not 2-D");
    const auto rows = static_cast<Eigen::Index>(r.uint(8));
    const auto cols = static_cast<Eigen::Index>(r.uint(8));
    if (rows < 0 || cols < 0 || rows * cols > (1 << 28)) r.fail("tensor '" + name + "' is too large");
    Mat<float> m(rows, cols);
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      m.data()[j] = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    }
    tensors[name] = std::move(m);
  }
  if (!r.done()) r.fail("trailing bytes");
  auto take = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto it = tensors.find(name);
    if (it == tensors.end()) r.fail("missing tensor '" + name + "'");
    if (it->second.rows() != rows || it->second.cols() != cols) r.fail("tensor '" + name + "' has the wrong shape");
    return it->second;
  };
  const bool moments = tensors.size() == params.size() * 3;
  if (!moments && tensors.size() != params.size()) r.fail("tensor count does not match the model");
  for (auto& p : params) {
    p.value = take(p.name, p.value.rows(), p.value.cols());
    if (moments) {
      ck.state.opt.m.push_back(take("adam.m/" + p.name, p.value.rows(), p.value.cols()));
      ck.state.opt.v.push_back(take("adam.v/" + p.name, p.value.rows(), p.value.cols()));
    }
  }
  return ck;
}

}  // namespace layerseg::nn
