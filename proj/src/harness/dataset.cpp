#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/scan.hpp"
#include "layerseg/version.hpp"

namespace layerseg::harness {
namespace fs = std::filesystem;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index, std::uint64_t tag) {
  return mix(mix(seed, index), tag);
}

enum : std::uint64_t { kTagPose = 1, kTagShape = 2, kTagScan = 3, kTagBand = 4, kTagOrder = 5 };

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

ComboWeights parse_weights(const std::string& text) {
  if (text == "uniform") {
    ComboWeights w;
    w.fill(1.0);
    return w;
  }
  if (text == "table1") return table1_weights();
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  ComboWeights w{};
  std::size_t n = 0;
  double v = 0.0;
  while (is >> v) {
    if (n == w.size()) throw InvalidArgument("weights: expected 9 values");
    w[n++] = v;
  }
  if (n != w.size() || !is.eof()) {
    throw InvalidArgument("weights: expected 'uniform', 'table1' or 9 numbers, got '" + text + "'");
  }
  return w;
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  if (!cfg.has(key)) throw InvalidArgument(cfg.command() + ": '" + key + "' is required");
  return cfg.get(key);
}

}  // namespace

std::pair<GarmentClass, GarmentClass> combination(std::size_t index) {
  static constexpr GarmentClass upper[3] = {GarmentClass::LongShirt, GarmentClass::TShirt, GarmentClass::Top};
  static constexpr GarmentClass lower[3] = {GarmentClass::LongPants, GarmentClass::Shorts, GarmentClass::Skirt};
  if (index >= 9) throw InvalidArgument("combination index out of range");
  return {upper[index / 3], lower[index % 3]};
}

ComboWeights table1_weights() { return {308, 388, 140, 504, 500, 154, 500, 502, 310}; }

std::array<std::size_t, 9> combination_counts(std::size_t n, const ComboWeights& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw InvalidArgument("weights must not all be zero");
  std::array<std::size_t, 9> counts{};
  std::array<double, 9> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 9> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; assigned < n; ++j, ++assigned) ++counts[order[j % 9]];
  return counts;
}

std::string write_manifest(const Manifest& m) {
  std::ostringstream os;
  os << "# layerseg " << kVersion << " config_hash " << m.config_hash << " seed " << m.seed << "\n";
  os << "file\tupper\tlower\toverlap_band_m\tpose_seed\tshape_seed\tscan_seed\tpoints\tsplit\n";
  for (const auto& e : m.entries) {
    os << e.file << '\t' << garment_name(e.upper) << '\t' << garment_name(e.lower) << '\t'
       << shortest(e.overlap_band_m) << '\t' << e.pose_seed << '\t' << e.shape_seed << '\t'
       << e.scan_seed << '\t' << e.points << '\t' << e.split << '\n';
  }
  return os.str();
}

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream is(text);
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string word;
      while (hs >> word) {
        if (word == "config_hash") hs >> m.config_hash;
        if (word == "seed") hs >> m.seed;
      }
      continue;
    }
    if (!header) {
      header = true;
      if (line.rfind("file\t", 0) != 0) throw IoError("manifest: missing column header");
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) f.push_back(cell);
    if (f.size() != 9) throw IoError("manifest line " + std::to_string(lineno) + ": expected 9 columns");
    try {
      ManifestEntry e;
      e.file = f[0];
      e.upper = parse_garment(f[1]);
      e.lower = parse_garment(f[2]);
      e.overlap_band_m = std::stod(f[3]);
      e.pose_seed = std::stoull(f[4]);
      e.shape_seed = std::stoull(f[5]);
      e.scan_seed = std::stoull(f[6]);
      e.points = std::stoull(f[7]);
      e.split = f[8];
      if (e.split != "train" && e.split != "val") throw InvalidArgument("bad split '" + e.split + "'");
      m.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw IoError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!header) throw IoError("manifest: empty");
  return m;
}

Manifest read_manifest(const std::string& dataset_dir) {
  const fs::path p = fs::path(dataset_dir) / "manifest.tsv";
  std::ifstream f(p);
  if (!f) throw IoError("cannot open manifest '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_manifest(ss.str());
}

void assign_splits(std::vector<ManifestEntry>& entries, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw InvalidArgument("val_fraction must be in [0, 1)");
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(entries.size())));
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = fnv1a(entries[a].file);
    const auto hb = fnv1a(entries[b].file);
    return ha != hb ? ha < hb : entries[a].file < entries[b].file;
  });
  for (std::size_t r = 0; r < order.size(); ++r) entries[order[r]].split = r < n_val ? "val" : "train";
}

std::vector<std::pair<ManifestEntry, SceneSpec>> plan_scenes(const RunConfig& cfg) {
  const long long n = cfg.get_int("scenes");
  if (n < 1) throw InvalidArgument("gen: scenes must be >= 1");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const double pos_frac = cfg.get_double("band_positive_fraction");
  if (!(pos_frac >= 0.0 && pos_frac <= 1.0)) throw InvalidArgument("gen: band_positive_fraction must be in [0, 1]");
  const auto counts = combination_counts(static_cast<std::size_t>(n), parse_weights(cfg.get("weights")));

  std::vector<std::size_t> combos;
  for (std::size_t c = 0; c < 9; ++c) combos.insert(combos.end(), counts[c], c);
  std::shuffle(combos.begin(), combos.end(), std::mt19937_64(mix(seed, kTagOrder)));

  std::vector<std::pair<ManifestEntry, SceneSpec>> out;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    std::mt19937_64 rng(scene_seed(seed, i, kTagBand));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool positive = u(rng) < pos_frac;
    const double band = positive ? 0.04 + 0.08 * u(rng) : -0.12 + 0.09 * u(rng);

    SceneSpec spec;
    std::tie(spec.upper, spec.lower) = combination(combos[i]);
    spec.overlap_band_m = band;
    spec.pose_seed = scene_seed(seed, i, kTagPose);
    spec.shape_seed = scene_seed(seed, i, kTagShape);

    ManifestEntry e;
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu.ply", i);
    e.file = name;
    e.upper = spec.upper;
    e.lower = spec.lower;
    e.overlap_band_m = band;
    e.pose_seed = spec.pose_seed;
    e.shape_seed = spec.shape_seed;
    e.scan_seed = scene_seed(seed, i, kTagScan);
    out.emplace_back(std::move(e), spec);
  }
  return out;
}

Manifest run_gen(const RunConfig& cfg) {
  const fs::path dir = require_path(cfg, "out");
  const std::string format = cfg.get("ply_format");
  if (format != "binary" && format != "ascii") throw InvalidArgument("gen: ply_format must be binary or ascii");
  ScanConfig sc;
  sc.num_views = static_cast<int>(cfg.get_int("num_views"));
  sc.rays_per_view = static_cast<int>(cfg.get_int("rays_per_view"));
  sc.noise_sigma = cfg.get_double("noise_sigma");
  sc.camera_distance = cfg.get_double("camera_distance");
  sc.validate();

  auto plan = plan_scenes(cfg);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("gen: cannot create '" + dir.string() + "': " + ec.message());

  Manifest m;
  m.config_hash = cfg.hash_hex();
  m.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  for (auto& [entry, spec] : plan) {
    // A pose that cannot be made intersection free is redrawn.
    std::optional<Scene> scene;
    for (int attempt = 0; attempt < 8 && !scene; ++attempt) {
      try {
        scene = sample_scene(spec);
      } catch (const InvalidArgument&) {
        spec.pose_seed = mix(spec.pose_seed, kTagPose);
      }
    }
    if (!scene) throw InvalidArgument("gen: no valid pose for " + entry.file);
    entry.pose_seed = spec.pose_seed;
    sc.seed = entry.scan_seed;
    const LabeledScan s = scan(*scene, sc);
    entry.points = s.size();
    save_scan_ply((dir / entry.file).string(), s, format == "binary",
                  {"config_hash " + m.config_hash, "dataset_seed " + std::to_string(m.seed),
                   "scene upper " + std::string(garment_name(spec.upper)) + " lower " +
                       std::string(garment_name(spec.lower)) + " overlap_band_m " +
                       shortest(spec.overlap_band_m) + " pose_seed " + std::to_string(spec.pose_seed) +
                       " shape_seed " + std::to_string(spec.shape_seed)});
    m.entries.push_back(entry);
  }
  assign_splits(m.entries, cfg.get_double("val_fraction"));

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("gen: cannot write '" + (dir / name).string() + "'");
    f << text;
    if (!f) throw IoError("gen: write to '" + (dir / name).string() + "' failed");
  };
  write("manifest.tsv", write_manifest(m));
  write("config.txt", cfg.frozen());
  return m;
}

std::vector<nn::Sample> load_split(const std::string& dataset_dir, const Manifest& manifest,
                                   const std::string& split, Strategy strategy, std::size_t points) {
  if (split != "train" && split != "val" && split != "all") {
    throw InvalidArgument("split must be train, val or all");
  }
  std::vector<nn::Sample> out;
  for (const auto& e : manifest.entries) {
    if (split != "all" && e.split != split) continue;
    LabeledScan s = load_scan_ply((fs::path(dataset_dir) / e.file).string());
    if (points > 0 && points != s.size()) s = resample(s, points, fnv1a(e.file));
    out.push_back({e.file, std::move(s.cloud), encode(s.labels, strategy)});
  }
  return out;
}

nn::ModelConfig model_config(const RunConfig& cfg) {
  nn::ModelConfig c;
  c.backbone = nn::parse_backbone(cfg.get("backbone"));
  c.feature_width = static_cast<std::size_t>(cfg.get_int("feature_width"));
  c.depth = static_cast<std::size_t>(cfg.get_int("depth"));
  c.k_neighbors = static_cast<std::size_t>(cfg.get_int("k_neighbors"));
  c.ball_samples = static_cast<std::size_t>(cfg.get_int("ball_samples"));
  c.radius = cfg.get_double("radius");
  c.augment = cfg.get_bool("augment");
  c.heads = nn::heads_for(parse_strategy(cfg.get("strategy")));
  c.validate();
  return c;
}

nn::TrainConfig train_config(const RunConfig& cfg) {
  nn::TrainConfig t;
  t.lr_peak = cfg.get_double("lr_peak");
  t.beta1 = cfg.get_double("beta1");
  t.beta2 = cfg.get_double("beta2");
  t.weight_decay = cfg.get_double("weight_decay");
  t.pct_start = cfg.get_double("pct_start");
  t.div_factor = cfg.get_double("div_factor");
  t.final_div_factor = cfg.get_double("final_div_factor");
  t.epochs = static_cast<int>(cfg.get_int("epochs"));
  t.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  t.stop_at_val_miou = cfg.get_double("stop_at_val_miou");
  const std::string w = cfg.get("class_weighting");
  if (w != "none" && w != "inverse") throw InvalidArgument("class_weighting must be none or inverse");
  t.validate();
  return t;
}

std::vector<std::vector<double>> inverse_frequency_weights(const std::vector<nn::Sample>& samples) {
  if (samples.empty()) throw InvalidArgument("inverse_frequency_weights: no samples");
  const auto& first = samples.front().labels;
  std::vector<std::vector<double>> counts;
  for (std::size_t c : first.class_counts) counts.emplace_back(c, 0.0);
  for (const auto& s : samples) {
    for (std::size_t l = 0; l < counts.size(); ++l) {
      for (std::uint8_t v : s.labels.layers[l]) counts[l][v] += 1.0;
    }
  }
  for (auto& layer : counts) {
    const double total = std::accumulate(layer.begin(), layer.end(), 0.0);
    const double classes = static_cast<double>(layer.size());
    for (double& c : layer) c = c > 0.0 ? total / (classes * c) : 0.0;
  }
  return counts;
}

}  // namespace layerseg::harness
