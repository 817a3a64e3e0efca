#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerseg/labels.hpp"
#include "layerseg/layering.hpp"
#include "layerseg/metrics.hpp"
#include "layerseg/scene.hpp"
#include "layerseg/train.hpp"

namespace layerseg::harness {

/// Flat `key = value` configuration for one command. Unknown keys are
/// rejected; path-valued keys are excluded from the hash so relocating a run
/// does not change its fingerprint.
class RunConfig {
 public:
  /// Starts from the defaults of `command` (gen, train, eval, export).
  explicit RunConfig(std::string command);

  const std::string& command() const { return command_; }

  /// Reads `key = value` lines; '#' starts a comment.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Sorted `key = value` lines of every resolved key.
  std::string frozen() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

 private:
  std::string command_;
  std::map<std::string, std::string> values_;
};

// ---- gen ------------------------------------------------------------------

/// Upper x lower in the order (long-shirt, t-shirt, top) x (long-pants,
/// shorts, skirt).
using ComboWeights = std::array<double, 9>;

std::pair<GarmentClass, GarmentClass> combination(std::size_t index);

/// Totals per outfit of the published scanned dataset.
ComboWeights table1_weights();

/// Largest-remainder apportionment of n scenes; ties go to the lower index.
std::array<std::size_t, 9> combination_counts(std::size_t n, const ComboWeights& weights);

struct ManifestEntry {
  std::string file;
  GarmentClass upper = GarmentClass::TShirt;
  GarmentClass lower = GarmentClass::LongPants;
  double overlap_band_m = 0.0;
  std::uint64_t pose_seed = 0;
  std::uint64_t shape_seed = 0;
  std::uint64_t scan_seed = 0;
  std::size_t points = 0;
  std::string split;  // "train" or "val"
};

struct Manifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

std::string write_manifest(const Manifest& m);
Manifest parse_manifest(const std::string& text);
Manifest read_manifest(const std::string& dataset_dir);

/// Marks the round(fraction * n) entries with the smallest file-name hash as
/// "val", the rest "train".
void assign_splits(std::vector<ManifestEntry>& entries, double val_fraction);

/// Scene plan without scanning (specs in manifest order).
std::vector<std::pair<ManifestEntry, SceneSpec>> plan_scenes(const RunConfig& cfg);

Manifest run_gen(const RunConfig& cfg);

// ---- train / eval ---------------------------------------------------------

/// Loads the scans of one split ("train", "val" or "all"), resampled to
/// `points` (0 keeps every point) and encoded with `strategy`.
std::vector<nn::Sample> load_split(const std::string& dataset_dir, const Manifest& manifest,
                                   const std::string& split, Strategy strategy, std::size_t points);

nn::ModelConfig model_config(const RunConfig& cfg);
nn::TrainConfig train_config(const RunConfig& cfg);

/// Per-layer inverse-frequency weights over a sample set: total / (C * count),
/// zero for absent classes.
std::vector<std::vector<double>> inverse_frequency_weights(const std::vector<nn::Sample>& samples);

struct TrainOutcome {
  std::vector<nn::EpochLog> logs;
  double seconds = 0.0;
};

/// Writes config.txt, log.csv and checkpoint.bin into `out`. The checkpoint
/// is rewritten after every epoch.
TrainOutcome run_train(const RunConfig& cfg,
                       const std::function<void(const nn::EpochLog&)>& on_epoch = {});

struct EvalOutcome {
  MetricReport report;
  std::size_t inconsistent = 0;
  std::size_t points = 0;
};

EvalOutcome run_eval(const RunConfig& cfg);

// ---- export ---------------------------------------------------------------

/// Fixed class-code -> RGB palette shared by every layer.
std::array<std::uint8_t, 3> palette(std::size_t code);

/// Writes one colored PLY per layer (and a GT|prediction pair per layer when
/// ground truth is given). Returns the written paths.
std::vector<std::string> export_layers(const std::string& out_dir, const std::string& stem,
                                       const PointCloud& cloud, const StrategyLabels& pred,
                                       const std::optional<StrategyLabels>& gt,
                                       const std::vector<std::string>& comments);

std::vector<std::string> run_export(const RunConfig& cfg);

/// Maps an exception to the documented exit code (2, 3 or 4; 1 otherwise).
int exit_code_for(const std::exception& e);

}  // namespace layerseg::harness
