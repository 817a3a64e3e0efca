#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "layerseg/errors.hpp"
#include "layerseg/train.hpp"

namespace layerseg::nn {
namespace {

double cosine(double from, double to, double t) {
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

double OneCycle::at(double progress) const {
  const double x = std::clamp(progress, 0.0, 1.0);
  if (x <= pct_start) return cosine(initial(), peak, pct_start > 0.0 ? x / pct_start : 1.0);
  return cosine(peak, final_lr(), (x - pct_start) / (1.0 - pct_start));
}

double OneCycle::at_step(std::uint64_t step, std::uint64_t total) const {
  if (total <= 1) return at(0.0);
  return at(static_cast<double>(step) / static_cast<double>(total - 1));
}

void TrainConfig::validate() const {
  if (!(lr_peak > 0.0)) throw InvalidArgument("train config: lr_peak must be > 0");
  if (epochs < 1) throw InvalidArgument("train config: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw InvalidArgument("train config: pct_start must be in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("train config: betas must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw InvalidArgument("train config: weight_decay must be >= 0");
  if (!(div_factor >= 1.0 && final_div_factor >= 1.0)) {
    throw InvalidArgument("train config: div factors must be >= 1");
  }
}

Augment draw_augment(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> scale(0.9, 1.1);
  std::uniform_real_distribution<double> shift(-0.1, 0.1);
  Augment a;
  a.rotation = axis_rotation(Vec3::UnitZ(), angle(rng));
  a.scale = scale(rng);
  a.translation = Vec3(shift(rng), shift(rng), shift(rng));
  return a;
}

std::vector<double> layer_mious(const ConfusionAccumulator& acc) {
  std::vector<double> out;
  for (std::size_t l = 0; l < acc.layers(); ++l) {
    try {
      out.push_back(miou(acc, l));
    } catch (const UndefinedLayer&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

namespace {

double mean_defined(const std::vector<double>& v) {
  double s = 0.0;
  int n = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

Evaluation evaluate(Model<float>& model, const std::vector<Sample>& samples, Strategy strategy) {
  check_heads(model.config(), strategy);
  Evaluation ev{ConfusionAccumulator(strategy), 0, {}};
  for (const auto& s : samples) {
    StrategyLabels pred = predict(model, s.cloud, strategy);
    ev.confusion.accumulate(pred, s.labels);
    ev.inconsistent += decode(pred).inconsistent_count;
    ev.predictions.push_back(std::move(pred));
  }
  return ev;
}

std::vector<EpochLog> train(TrainState& state, const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, Strategy strategy,
                            const TrainConfig& cfg,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  Model<float>& model = state.model;
  check_heads(model.config(), strategy);
  for (const auto& s : train_set) {
    if (s.labels.strategy != strategy || s.labels.size() != s.cloud.size()) {
      throw InvalidArgument("train: sample '" + s.id + "' labels do not match strategy or cloud");
    }
  }
  std::vector<std::vector<float>> weights;
  if (!cfg.class_weights.empty()) {
    const auto counts = class_counts(strategy);
    if (cfg.class_weights.size() != counts.size()) {
      throw InvalidArgument("train: class_weights need one vector per layer");
    }
    for (std::size_t l = 0; l < counts.size(); ++l) {
      if (cfg.class_weights[l].size() != counts[l]) {
        throw InvalidArgument("train: class_weights layer " + std::to_string(l) + " has wrong length");
      }
      weights.emplace_back(cfg.class_weights[l].begin(), cfg.class_weights[l].end());
    }
  }

  const OneCycle sched = cfg.schedule();
  const std::size_t n = train_set.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::uint64_t total = static_cast<std::uint64_t>(cfg.epochs) * batches;
  auto& params = model.parameters();

  std::vector<EpochLog> logs;
  for (int e = state.epoch; e < cfg.epochs; ++e) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(mix(cfg.seed, static_cast<std::uint64_t>(e))));
    ConfusionAccumulator acc(strategy);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      lr = sched.at_step(state.step, total);
      for (auto& p : params) p.zero_grad();
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(n, lo + bs);
      for (std::size_t j = lo; j < hi; ++j) {
        const Sample& s = train_set[order[j]];
        Input<float> in;
        if (model.config().augment) {
          std::mt19937_64 rng(mix(mix(cfg.seed, static_cast<std::uint64_t>(e)), order[j] + 1));
          const Augment a = draw_augment(rng);
          in = make_input<float>(s.cloud, a.rotation, a.scale, a.translation);
        } else {
          in = make_input<float>(s.cloud);
        }
        Tape<float> tape;
        const auto logits = model.forward(tape, in);
        const auto loss = multilayer_loss(logits, s.labels, weights);
        const double lv = loss.value()(0, 0);
        if (!std::isfinite(lv)) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << e + 1 << " batch " << b + 1 << " lr " << lr;
          throw NumericError(os.str());
        }
        loss_sum += lv;
        tape.backward(loss);
        acc.accumulate(labels_from_logits(logits, strategy), s.labels);
      }
      const float inv = 1.0f / static_cast<float>(hi - lo);
      for (auto& p : params) {
        p.grad *= inv;
        if (!p.grad.allFinite()) {
          std::ostringstream os;
          os << "non-finite gradient in " << p.name << " at epoch " << e + 1 << " batch " << b + 1
             << " lr " << lr;
          throw NumericError(os.str());
        }
      }
      state.opt.step(params, lr, cfg);
      ++state.step;
    }
    EpochLog log;
    log.epoch = e + 1;
    log.lr = lr;
    log.loss = loss_sum / static_cast<double>(n);
    log.train_miou = layer_mious(acc);
    log.train_avg = mean_defined(log.train_miou);
    if (!val_set.empty()) {
      const Evaluation ev = evaluate(model, val_set, strategy);
      log.val_miou = layer_mious(ev.confusion);
      log.val_avg = mean_defined(log.val_miou);
    }
    state.epoch = e + 1;
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (cfg.stop_at_val_miou > 0.0 && log.val_avg && *log.val_avg >= cfg.stop_at_val_miou) break;
  }
  return logs;
}

std::string log_header(Strategy strategy) {
  std::string h = "epoch,lr,loss";
  for (const auto& t : class_tables(strategy)) h += ",train_miou_" + t.name;
  h += ",train_avg_miou";
  for (const auto& t : class_tables(strategy)) h += ",val_miou_" + t.name;
  h += ",val_avg_miou";
  return h;
}

std::string log_row(const EpochLog& row) {
  std::string r = std::to_string(row.epoch) + "," + fmt(row.lr) + "," + fmt(row.loss);
  for (double v : row.train_miou) r += "," + fmt(v);
  r += "," + fmt(row.train_avg);
  if (row.val_avg) {
    for (double v : row.val_miou) r += "," + fmt(v);
    r += "," + fmt(*row.val_avg);
  } else {
    for (std::size_t i = 0; i <= row.train_miou.size(); ++i) r += ",";
  }
  return r;
}

}  // namespace layerseg::nn
