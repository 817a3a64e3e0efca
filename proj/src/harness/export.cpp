#include <filesystem>

#include "layerseg/errors.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/ply.hpp"
#include "layerseg/scan.hpp"
#include "layerseg/version.hpp"

namespace layerseg::harness {
namespace fs = std::filesystem;

std::array<std::uint8_t, 3> palette(std::size_t code) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 7> colors = {{
      {160, 160, 160},
      {230, 25, 75},
      {60, 180, 75},
      {0, 130, 200},
      {245, 130, 48},
      {145, 30, 180},
      {70, 240, 240},
  }};
  if (code >= colors.size()) throw InvalidArgument("palette: class code " + std::to_string(code) + " has no color");
  return colors[code];
}

namespace {

struct Columns {
  PlyData data;
  std::vector<double>* col[7];

  Columns(const std::vector<std::string>& comments, std::size_t n) {
    data.comments = comments;
    const char* names[7] = {"x", "y", "z", "red", "green", "blue", "class"};
    for (int i = 0; i < 7; ++i) {
      data.properties.push_back({names[i], i < 3 ? PlyType::Float32 : PlyType::UInt8, {}});
      data.properties.back().values.reserve(n);
    }
    for (int i = 0; i < 7; ++i) col[i] = &data.properties[static_cast<std::size_t>(i)].values;
  }

  void add(const Vec3& p, std::uint8_t code) {
    const auto rgb = palette(code);
    for (int a = 0; a < 3; ++a) col[a]->push_back(p[a]);
    for (int a = 0; a < 3; ++a) col[3 + a]->push_back(rgb[static_cast<std::size_t>(a)]);
    col[6]->push_back(code);
  }
};

}  // namespace

std::vector<std::string> export_layers(const std::string& out_dir, const std::string& stem,
                                       const PointCloud& cloud, const StrategyLabels& pred,
                                       const std::optional<StrategyLabels>& gt,
                                       const std::vector<std::string>& comments) {
  pred.validate();
  if (pred.size() != cloud.size()) {
    throw InvalidArgument("export: " + std::to_string(pred.size()) + " predictions for " +
                          std::to_string(cloud.size()) + " points");
  }
  if (gt) {
    gt->validate();
    if (gt->strategy != pred.strategy || gt->size() != cloud.size()) {
      throw InvalidArgument("export: ground truth does not match the prediction layout");
    }
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("export: cannot create '" + out_dir + "': " + ec.message());

  const auto& tables = class_tables(pred.strategy);
  const std::size_t n = cloud.size();
  // Pair files place ground truth left and prediction right of the original.
  const Box box = bounds(cloud.positions);
  const Vec3 shift(0.6 * (box.hi.x() - box.lo.x()) + 0.05, 0.0, 0.0);

  std::vector<std::string> written;
  for (std::size_t l = 0; l < tables.size(); ++l) {
    std::vector<std::string> head = comments;
    head.push_back("layerseg " + std::string(kVersion));
    head.push_back("strategy " + std::string(strategy_name(pred.strategy)) + " layer " + tables[l].name);
    for (std::size_t c = 0; c < tables[l].classes.size(); ++c) {
      const auto rgb = palette(c);
      head.push_back("class " + std::to_string(c) + " " + tables[l].classes[c] + " rgb " + std::to_string(rgb[0]) +
                     " " + std::to_string(rgb[1]) + " " + std::to_string(rgb[2]));
    }

    Columns single(head, n);
    for (std::size_t i = 0; i < n; ++i) single.add(cloud.positions[i], pred.layers[l][i]);
    const std::string path = (fs::path(out_dir) / (stem + "_" + tables[l].name + ".ply")).string();
    write_ply(path, single.data, true);
    written.push_back(path);

    if (gt) {
      auto pair_head = head;
      pair_head.push_back("pair left ground_truth right prediction");
      Columns pair(pair_head, 2 * n);
      for (std::size_t i = 0; i < n; ++i) pair.add(cloud.positions[i] - shift, gt->layers[l][i]);
      for (std::size_t i = 0; i < n; ++i) pair.add(cloud.positions[i] + shift, pred.layers[l][i]);
      const std::string pp = (fs::path(out_dir) / (stem + "_" + tables[l].name + "_pair.ply")).string();
      write_ply(pp, pair.data, true);
      written.push_back(pp);
    }
  }
  return written;
}

std::vector<std::string> run_export(const RunConfig& cfg) {
  if (!cfg.has("checkpoint") || !cfg.has("scan") || !cfg.has("out")) {
    throw InvalidArgument("export: 'checkpoint', 'scan' and 'out' are required");
  }
  nn::Checkpoint ck = nn::load_checkpoint(cfg.get("checkpoint"));
  Strategy strategy = ck.strategy;
  if (cfg.has("strategy") && parse_strategy(cfg.get("strategy")) != strategy) {
    throw InvalidArgument("export: strategy does not match the checkpoint");
  }
  LabeledScan s = load_scan_ply(cfg.get("scan"));
  const auto points = cfg.get_int("points");
  if (points < 0) throw InvalidArgument("export: points must be >= 0");
  if (points > 0 && static_cast<std::size_t>(points) != s.size()) {
    s = resample(s, static_cast<std::size_t>(points), static_cast<std::uint64_t>(cfg.get_int("seed")));
  }
  const StrategyLabels pred = nn::predict(ck.state.model, s.cloud, strategy);
  const StrategyLabels gt = encode(s.labels, strategy);
  const std::string stem = fs::path(cfg.get("scan")).stem().string();
  return export_layers(cfg.get("out"), stem, s.cloud, pred, gt,
                       {"config_hash " + cfg.hash_hex(), "seed " + cfg.get("seed")});
}

}  // namespace layerseg::harness
