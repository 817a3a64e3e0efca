#include <numeric>
#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/metrics.hpp"

namespace layerseg {

ConfusionAccumulator::ConfusionAccumulator(Strategy strategy)
    : strategy_(strategy), sizes_(class_counts(strategy)) {
  for (const auto c : sizes_) counts_.emplace_back(c * c, 0);
}

void ConfusionAccumulator::accumulate(const StrategyLabels& pred, const StrategyLabels& gt) {
  if (pred.strategy != strategy_ || gt.strategy != strategy_) {
    throw InvalidArgument("accumulate: strategy mismatch");
  }
  if (pred.size() != gt.size()) {
    throw InvalidArgument("accumulate: prediction and ground truth differ in length");
  }
  pred.validate();
  gt.validate();
  for (std::size_t l = 0; l < counts_.size(); ++l) {
    const std::size_t c = sizes_[l];
    auto& m = counts_[l];
    const auto& p = pred.layers[l];
    const auto& g = gt.layers[l];
    for (std::size_t i = 0; i < p.size(); ++i) ++m[g[i] * c + p[i]];
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  if (other.strategy_ != strategy_ || other.sizes_ != sizes_) {
    throw InvalidArgument("merge: strategy mismatch");
  }
  for (std::size_t l = 0; l < counts_.size(); ++l) {
    for (std::size_t j = 0; j < counts_[l].size(); ++j) counts_[l][j] += other.counts_[l][j];
  }
}

void ConfusionAccumulator::add(std::size_t layer, std::size_t gt, std::size_t pred,
                               std::uint64_t n) {
  const std::size_t c = sizes_.at(layer);
  if (gt >= c || pred >= c) throw InvalidArgument("add: class out of range");
  counts_[layer][gt * c + pred] += n;
}

std::uint64_t ConfusionAccumulator::count(std::size_t layer, std::size_t gt,
                                          std::size_t pred) const {
  const std::size_t c = sizes_.at(layer);
  return counts_[layer].at(gt * c + pred);
}

std::uint64_t ConfusionAccumulator::tp(std::size_t layer, std::size_t c) const {
  return count(layer, c, c);
}

std::uint64_t ConfusionAccumulator::fp(std::size_t layer, std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < sizes_.at(layer); ++g) {
    if (g != c) s += count(layer, g, c);
  }
  return s;
}

std::uint64_t ConfusionAccumulator::fn(std::size_t layer, std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < sizes_.at(layer); ++p) {
    if (p != c) s += count(layer, c, p);
  }
  return s;
}

std::uint64_t ConfusionAccumulator::total_points(std::size_t layer) const {
  const auto& m = counts_.at(layer);
  return std::accumulate(m.begin(), m.end(), std::uint64_t{0});
}

std::uint64_t ConfusionAccumulator::correct_points(std::size_t layer) const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < sizes_.at(layer); ++c) s += tp(layer, c);
  return s;
}

std::optional<double> iou(const ConfusionAccumulator& acc, std::size_t layer, std::size_t c) {
  const std::uint64_t t = acc.tp(layer, c);
  const std::uint64_t denom = t + acc.fn(layer, c) + acc.fp(layer, c);
  if (denom == 0) return std::nullopt;
  return static_cast<double>(t) / static_cast<double>(denom);
}

double miou(const ConfusionAccumulator& acc, std::size_t layer) {
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < acc.classes(layer); ++c) {
    if (const auto v = iou(acc, layer, c)) {
      sum += *v;
      ++defined;
    }
  }
  if (defined == 0) {
    throw UndefinedLayer("miou: layer " + std::to_string(layer + 1) +
                         " has no class with a defined IoU");
  }
  return sum / static_cast<double>(defined);
}

double avg_miou(const ConfusionAccumulator& acc) {
  double sum = 0.0;
  for (std::size_t l = 0; l < acc.layers(); ++l) sum += miou(acc, l);
  return sum / static_cast<double>(acc.layers());
}

AccuracyPair macc_allacc(const ConfusionAccumulator& acc, std::size_t layer) {
  const std::uint64_t total = acc.total_points(layer);
  if (total == 0) {
    throw InvalidState("macc_allacc: no points accumulated");
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < acc.classes(layer); ++c) {
    const std::uint64_t support = acc.tp(layer, c) + acc.fn(layer, c);
    if (support == 0) continue;
    sum += static_cast<double>(acc.tp(layer, c)) / static_cast<double>(support);
    ++present;
  }
  return {sum / static_cast<double>(present),
          static_cast<double>(acc.correct_points(layer)) / static_cast<double>(total)};
}

}  // namespace layerseg
