// layerseg: gen, train, eval and export from the command line.
#include <array>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "layerseg/errors.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/version.hpp"

namespace {

using layerseg::harness::RunConfig;

struct Command {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> flags;  // key -> value given on the command line
  std::vector<std::string> overrides;        // key=value
  bool augment = false;
};

void add_value(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(flag, [&c, key](const std::string& v) { c.flags[key] = v; }, help);
}

Command& add_command(CLI::App& app, std::vector<std::unique_ptr<Command>>& all, const std::string& name,
                     const std::string& help, const std::vector<std::array<std::string, 3>>& paths) {
  all.push_back(std::make_unique<Command>());
  Command& c = *all.back();
  c.app = app.add_subcommand(name, help);
  c.app->add_option("--config", c.config_file, "key = value file")->check(CLI::ExistingFile);
  c.app->add_option("--set,overrides", c.overrides, "key=value overrides, applied last");
  add_value(c, "--seed", "seed", "global seed");
  add_value(c, "--strategy", "strategy", "s1..s5");
  add_value(c, "--out", "out", "output directory");
  for (const auto& [flag, key, text] : paths) add_value(c, flag, key, text);
  return c;
}

RunConfig resolve(const Command& c) {
  RunConfig cfg(c.app->get_name());
  if (!c.config_file.empty()) cfg.load_file(c.config_file);
  for (const auto& [k, v] : c.flags) cfg.set(k, v);
  if (c.augment) cfg.set("augment", "true");
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw layerseg::InvalidArgument("override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int run(const Command& c) {
  const RunConfig cfg = resolve(c);
  const std::string& cmd = cfg.command();
  if (cmd == "gen") {
    const auto m = layerseg::harness::run_gen(cfg);
    std::size_t val = 0;
    for (const auto& e : m.entries) val += e.split == "val";
    std::cout << "wrote " << m.entries.size() << " scenes (" << m.entries.size() - val << " train, " << val
              << " val) to " << cfg.get("out") << ", config_hash " << m.config_hash << "\n";
  } else if (cmd == "train") {
    const auto outcome = layerseg::harness::run_train(cfg, [](const layerseg::nn::EpochLog& row) {
      std::cout << "epoch " << row.epoch << " loss " << fmt(row.loss) << " train " << fmt(row.train_avg);
      if (row.val_avg) std::cout << " val " << fmt(*row.val_avg);
      std::cout << std::endl;
    });
    std::cout << "trained " << outcome.logs.size() << " epochs in " << fmt(outcome.seconds) << " s, config_hash "
              << cfg.hash_hex() << "\n";
  } else if (cmd == "eval") {
    const auto outcome = layerseg::harness::run_eval(cfg);
    std::cout << layerseg::format_table(outcome.report);
    std::cout << "inconsistent predictions: " << outcome.inconsistent << " of " << outcome.points << "\n";
  } else {
    for (const auto& p : layerseg::harness::run_export(cfg)) std::cout << p << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered clothing segmentation toolkit"};
  app.set_version_flag("--version", std::string(layerseg::kVersion));
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  add_command(app, commands, "gen", "generate a scanned dataset", {});
  Command& train = add_command(app, commands, "train", "train a model",
                               {{{"--dataset", "dataset", "dataset directory written by gen"},
                                 {"--resume", "resume", "checkpoint to continue from"}}});
  add_value(train, "--backbone", "backbone", "set, edge or pt");
  train.app->add_flag("--augment", train.augment, "random rotation, scale and shift");
  add_command(app, commands, "eval", "evaluate a checkpoint",
              {{{"--checkpoint", "checkpoint", "checkpoint.bin from train"},
                {"--dataset", "dataset", "dataset directory"}}});
  add_command(app, commands, "export", "write colored PLY per layer",
              {{{"--checkpoint", "checkpoint", "checkpoint.bin from train"}, {"--scan", "scan", "scan PLY"}}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    for (const auto& c : commands) {
      if (c->app->parsed()) return run(*c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return layerseg::harness::exit_code_for(e);
  }
  return 1;
}
