#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "layerseg/layering.hpp"

namespace layerseg {

/// Exact integer confusion counts per layer. Row = ground truth, column =
/// prediction. Division only happens when a metric is requested.
class ConfusionAccumulator {
 public:
  ConfusionAccumulator() = default;
  explicit ConfusionAccumulator(Strategy strategy);

  Strategy strategy() const { return strategy_; }
  std::size_t layers() const { return counts_.size(); }
  std::size_t classes(std::size_t layer) const { return sizes_.at(layer); }

  /// Adds every point of every layer. Throws InvalidArgument on a strategy or
  /// length mismatch.
  void accumulate(const StrategyLabels& pred, const StrategyLabels& gt);

  /// Element-wise sum; both accumulators must share a strategy.
  void merge(const ConfusionAccumulator& other);

  /// Adds `n` points with the given (gt, pred) pair.
  void add(std::size_t layer, std::size_t gt, std::size_t pred, std::uint64_t n = 1);

  std::uint64_t count(std::size_t layer, std::size_t gt, std::size_t pred) const;
  std::uint64_t tp(std::size_t layer, std::size_t c) const;
  std::uint64_t fp(std::size_t layer, std::size_t c) const;
  std::uint64_t fn(std::size_t layer, std::size_t c) const;
  std::uint64_t total_points(std::size_t layer) const;
  std::uint64_t correct_points(std::size_t layer) const;

  bool operator==(const ConfusionAccumulator&) const = default;

 private:
  Strategy strategy_ = Strategy::S1;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

/// TP / (TP + FN + FP); nullopt when the denominator is zero.
std::optional<double> iou(const ConfusionAccumulator& acc, std::size_t layer, std::size_t c);

/// Unweighted mean of the defined class IoUs. Throws UndefinedLayer if none.
double miou(const ConfusionAccumulator& acc, std::size_t layer);

/// Mean of the layer mIoUs.
double avg_miou(const ConfusionAccumulator& acc);

struct AccuracyPair {
  double macc = 0.0;
  double allacc = 0.0;
};

/// mAcc over classes present in the ground truth; allAcc = correct / total.
/// Throws InvalidState when the layer holds no points.
AccuracyPair macc_allacc(const ConfusionAccumulator& acc, std::size_t layer);

struct LayerReport {
  std::string name;
  std::optional<double> miou;
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> class_iou;
};

struct MetricReport {
  Strategy strategy = Strategy::S1;
  std::string method;
  std::optional<double> avg_miou;
  std::optional<AccuracyPair> accuracy;  // single-layer strategy only
  std::vector<LayerReport> layers;
  std::size_t inconsistent_predictions = 0;
  std::size_t points = 0;
};

MetricReport make_report(const ConfusionAccumulator& acc, std::string method,
                         std::size_t inconsistent_predictions = 0);

/// Plain-text table laid out like the published per-strategy result tables
/// (values in percent, one decimal).
std::string format_table(const MetricReport& report);

/// Machine-readable JSON rendering of the same report.
std::string format_json(const MetricReport& report);

}  // namespace layerseg
