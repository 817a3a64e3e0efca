#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "layerseg/metrics.hpp"
#include "layerseg/nn.hpp"

namespace layerseg::nn {

/// One training or evaluation example.
struct Sample {
  std::string id;
  PointCloud cloud;
  StrategyLabels labels;
};

/// Cosine warm-up from peak/div_factor to peak over the first pct_start of
/// training, then cosine decay to peak/(div_factor * final_div_factor).
struct OneCycle {
  double peak = 0.005;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double pct_start = 0.5;

  double initial() const { return peak / div_factor; }
  double final_lr() const { return initial() / final_div_factor; }

  /// progress in [0, 1].
  double at(double progress) const;

  /// Step s of `total`, mapped to progress s / (total - 1).
  double at_step(std::uint64_t step, std::uint64_t total) const;
};

struct TrainConfig {
  double lr_peak = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;
  double pct_start = 0.5;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  int epochs = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  /// One vector per layer; empty means unweighted.
  std::vector<std::vector<double>> class_weights;
  /// Stop once validation avg mIoU reaches this value (0 disables).
  double stop_at_val_miou = 0.0;

  void validate() const;
  OneCycle schedule() const { return {lr_peak, div_factor, final_div_factor, pct_start}; }
};

/// Adam with decoupled weight decay.
template <typename T>
struct AdamW {
  std::vector<Mat<T>> m;
  std::vector<Mat<T>> v;
  std::uint64_t t = 0;

  void step(std::vector<Parameter<T>>& params, double lr, const TrainConfig& cfg) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
        v.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    if (m.size() != params.size()) throw InvalidState("AdamW: parameter list changed");
    ++t;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
    const T eps = static_cast<T>(cfg.adam_eps);
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.grad.size() == 0) p.zero_grad();
      m[i] = b1 * m[i] + (T(1) - b1) * p.grad;
      v[i] = b2 * v[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value *= decay;
      p.value.array() -= step * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
    }
  }
};

/// Random rotation about z, uniform scale and translation.
struct Augment {
  Mat3 rotation = Mat3::Identity();
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();
};

Augment draw_augment(std::mt19937_64& rng);

struct TrainState {
  Model<float> model;
  AdamW<float> opt;
  int epoch = 0;          // completed epochs
  std::uint64_t step = 0;  // optimizer steps taken
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double loss = 0.0;
  std::vector<double> train_miou;
  double train_avg = 0.0;
  std::vector<double> val_miou;
  std::optional<double> val_avg;
};

/// Runs epochs state.epoch+1 .. cfg.epochs. Deterministic given the seed.
/// Throws NumericError on a non-finite loss or gradient.
std::vector<EpochLog> train(TrainState& state, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, Strategy strategy,
                            const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

struct Evaluation {
  ConfusionAccumulator confusion;
  std::size_t inconsistent = 0;
  std::vector<StrategyLabels> predictions;
};

Evaluation evaluate(Model<float>& model, const std::vector<Sample>& samples, Strategy strategy);

/// Per-layer mIoU, NaN where a layer has no defined class.
std::vector<double> layer_mious(const ConfusionAccumulator& acc);

std::string log_header(Strategy strategy);
std::string log_row(const EpochLog& row);

/// Binary checkpoint: weights, optimizer moments, progress and metadata.
void save_checkpoint(const std::string& path, const TrainState& state, Strategy strategy,
                     const std::map<std::string, std::string>& extra = {});

struct Checkpoint {
  TrainState state;
  Strategy strategy = Strategy::S2;
  std::map<std::string, std::string> meta;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace layerseg::nn
