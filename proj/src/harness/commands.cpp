#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "layerseg/errors.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/version.hpp"

namespace layerseg::harness {
namespace fs = std::filesystem;

namespace {

std::string require_path(const RunConfig& cfg, const std::string& key) {
  if (!cfg.has(key)) throw InvalidArgument(cfg.command() + ": '" + key + "' is required");
  return cfg.get(key);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

// Checkpoint strategy wins unless the config names a different one.
Strategy resolve_strategy(const RunConfig& cfg, Strategy from_checkpoint) {
  if (!cfg.has("strategy")) return from_checkpoint;
  const Strategy s = parse_strategy(cfg.get("strategy"));
  if (s != from_checkpoint) {
    throw InvalidArgument("strategy " + std::string(strategy_name(s)) + " does not match checkpoint strategy " +
                          std::string(strategy_name(from_checkpoint)));
  }
  return s;
}

}  // namespace

TrainOutcome run_train(const RunConfig& cfg, const std::function<void(const nn::EpochLog&)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const std::string dataset = require_path(cfg, "dataset");
  const fs::path out = require_path(cfg, "out");
  const Strategy strategy = parse_strategy(cfg.get("strategy"));
  const nn::ModelConfig mcfg = model_config(cfg);
  nn::TrainConfig tcfg = train_config(cfg);
  const auto points = cfg.get_int("points");
  if (points < 0) throw InvalidArgument("train: points must be >= 0");

  const Manifest manifest = read_manifest(dataset);
  const auto train_set = load_split(dataset, manifest, "train", strategy, static_cast<std::size_t>(points));
  const auto val_set = load_split(dataset, manifest, "val", strategy, static_cast<std::size_t>(points));
  if (train_set.empty()) throw InvalidArgument("train: dataset has no training scenes");
  if (cfg.get("class_weighting") == "inverse") tcfg.class_weights = inverse_frequency_weights(train_set);

  nn::TrainState state;
  if (cfg.has("resume")) {
    nn::Checkpoint ck = nn::load_checkpoint(cfg.get("resume"));
    if (ck.strategy != strategy) throw InvalidArgument("train: resume checkpoint was trained with a different strategy");
    if (!(ck.state.model.config() == mcfg)) {
      throw InvalidArgument("train: resume checkpoint model does not match the configured model");
    }
    state = std::move(ck.state);
  } else {
    state.model = nn::Model<float>(mcfg, tcfg.seed);
  }

  make_dir(out);
  write_text(out / "config.txt", cfg.frozen());
  const fs::path log_path = out / "log.csv";
  const bool append = state.epoch > 0 && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("train: cannot write '" + log_path.string() + "'");
  if (!append) {
    log << "# layerseg " << kVersion << " config_hash " << cfg.hash_hex() << " seed " << tcfg.seed << "\n"
        << nn::log_header(strategy) << "\n";
  }
  const std::map<std::string, std::string> extra = {{"config_hash", cfg.hash_hex()},
                                                   {"seed", std::to_string(tcfg.seed)}};
  TrainOutcome outcome;
  outcome.logs = nn::train(state, train_set, val_set, strategy, tcfg, [&](const nn::EpochLog& row) {
    log << nn::log_row(row) << "\n";
    log.flush();
    nn::save_checkpoint((out / "checkpoint.bin").string(), state, strategy, extra);
    if (on_epoch) on_epoch(row);
  });
  if (outcome.logs.empty()) nn::save_checkpoint((out / "checkpoint.bin").string(), state, strategy, extra);
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return outcome;
}

EvalOutcome run_eval(const RunConfig& cfg) {
  const std::string ckpt_path = require_path(cfg, "checkpoint");
  const std::string dataset = require_path(cfg, "dataset");
  nn::Checkpoint ck = nn::load_checkpoint(ckpt_path);
  const Strategy strategy = resolve_strategy(cfg, ck.strategy);
  const auto points = cfg.get_int("points");
  if (points < 0) throw InvalidArgument("eval: points must be >= 0");

  const Manifest manifest = read_manifest(dataset);
  const auto samples = load_split(dataset, manifest, cfg.get("split"), strategy, static_cast<std::size_t>(points));
  if (samples.empty()) throw InvalidArgument("eval: split '" + cfg.get("split") + "' is empty");
  const nn::Evaluation ev = nn::evaluate(ck.state.model, samples, strategy);

  EvalOutcome outcome;
  outcome.report = make_report(ev.confusion, std::string(nn::backbone_name(ck.state.model.config().backbone)),
                               ev.inconsistent);
  outcome.inconsistent = ev.inconsistent;
  for (const auto& s : samples) outcome.points += s.cloud.size();
  outcome.report.points = outcome.points;

  if (cfg.has("out")) {
    const fs::path out = cfg.get("out");
    make_dir(out);
    write_text(out / "config.txt", cfg.frozen());
    std::ostringstream header;
    header << "# layerseg " << kVersion << " config_hash " << cfg.hash_hex() << " checkpoint_config_hash "
           << (ck.meta.contains("config_hash") ? ck.meta.at("config_hash") : "none") << "\n";
    write_text(out / "report.txt", header.str() + format_table(outcome.report));
    auto j = nlohmann::json::parse(format_json(outcome.report));
    j["version"] = std::string(kVersion);
    j["config_hash"] = cfg.hash_hex();
    j["checkpoint_config_hash"] = ck.meta.contains("config_hash") ? ck.meta.at("config_hash") : "none";
    j["split"] = cfg.get("split");
    write_text(out / "report.json", j.dump(2) + "\n");
  }
  return outcome;
}

}  // namespace layerseg::harness
