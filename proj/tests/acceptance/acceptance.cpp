// Acceptance run: one PASS/FAIL line per criterion. Usage:
//   acceptance [--only 1,5,8] [--work DIR]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/grad_check.hpp"
#include "layerseg/harness.hpp"
#include "layerseg/scan.hpp"

namespace fs = std::filesystem;
using namespace layerseg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

constexpr std::array<nn::Backbone, 3> kBackbones = {nn::Backbone::SetHierarchy, nn::Backbone::EdgeConv,
                                                   nn::Backbone::PointTransformer};
constexpr std::array<Strategy, 5> kStrategies = {Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4,
                                                 Strategy::S5};

std::vector<CanonicalLabel> random_canonical(std::size_t n, std::mt19937_64& rng) {
  const auto all = all_valid_labels();
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<CanonicalLabel> out(n);
  for (auto& l : out) l = all[pick(rng)];
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst_op = 0.0, worst_model = 0.0;
  int probes = 0;
  bool conclusive = true;
  for (const auto& c : testing::op_cases()) {
    for (int s = 0; s < 10; ++s) worst_op = std::max(worst_op, testing::op_case_error(c, s));
  }
  for (auto b : kBackbones) {
    for (int s = 0; s < 10; ++s) {
      for (const auto& r : {testing::backbone_probe(b, s), testing::end_to_end_probe(b, s)}) {
        worst_model = std::max(worst_model, r.worst);
        probes += r.checked;
        conclusive = conclusive && r.conclusive();
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst_op < 1e-4 && worst_model < 1e-4 && conclusive && t < 60.0,
          std::to_string(testing::op_cases().size()) + " ops and 3 backbones x 10 seeds; worst op " +
              fmt("%.2e", worst_op) + ", worst model " + fmt("%.2e", worst_model) + " over " +
              std::to_string(probes) + " probes; " + fmt("%.1f s", t)};
}

Outcome round_trip() {
  const auto all = all_valid_labels();
  std::size_t failures = 0;
  for (auto s : kStrategies) {
    const Decoded d = decode(encode(all, s));
    if (s == Strategy::S4 || s == Strategy::S5) {
      if (!d.fine) {
        failures += all.size();
        continue;
      }
      for (std::size_t i = 0; i < all.size(); ++i) failures += (*d.fine)[i] != all[i];
    } else {
      const auto want = coarse_project(all, s != Strategy::S1);
      for (std::size_t i = 0; i < all.size(); ++i) failures += d.coarse[i] != want[i];
    }
    failures += d.inconsistent_count;
  }
  return {all.size() == 31 && failures == 0,
          std::to_string(all.size()) + " labels x 5 strategies, " + std::to_string(failures) + " failures"};
}

Outcome overlap_equivalence() {
  std::mt19937_64 rng(2024);
  std::size_t mismatches = 0, overlap_points = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto labels = random_canonical(1000, rng);
    const std::vector<StrategyLabels> encs{encode(labels, Strategy::S1), encode(labels, Strategy::S2),
                                           encode(labels, Strategy::S3), encode(labels, Strategy::S5)};
    for (const auto& r : consistency_check(encs)) mismatches += r.mismatches;
    for (bool b : overlap_set(encs[0])) overlap_points += b;
  }
  return {mismatches == 0 && overlap_points > 0,
          "100 arrays x 1000 points, " + std::to_string(overlap_points) + " overlap points, " +
              std::to_string(mismatches) + " mismatches"};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(99);
  std::size_t compared = 0, differ = 0;
  for (auto s : kStrategies) {
    for (int trial = 0; trial < 10; ++trial) {
      auto gt = StrategyLabels::empty(s, 1000);
      auto pred = gt;
      for (std::size_t l = 0; l < gt.layers.size(); ++l) {
        for (std::size_t i = 0; i < 1000; ++i) {
          gt.layers[l][i] = static_cast<std::uint8_t>(rng() % gt.class_counts[l]);
          pred.layers[l][i] =
              rng() % 3 ? gt.layers[l][i] : static_cast<std::uint8_t>(rng() % gt.class_counts[l]);
        }
      }
      ConfusionAccumulator acc(s);
      acc.accumulate(pred, gt);
      double layer_sum = 0.0;
      for (std::size_t l = 0; l < gt.layers.size(); ++l) {
        const auto& p = pred.layers[l];
        const auto& g = gt.layers[l];
        const std::size_t classes = gt.class_counts[l];
        std::size_t correct = 0, defined = 0;
        double iou_sum = 0.0, acc_sum = 0.0;
        std::size_t acc_classes = 0;
        for (std::size_t c = 0; c < classes; ++c) {
          std::set<std::size_t> ps, gs, inter, uni;
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] == c) ps.insert(i);
            if (g[i] == c) gs.insert(i);
          }
          std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(inter, inter.end()));
          std::set_union(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(uni, uni.end()));
          correct += inter.size();
          std::optional<double> want;
          if (!uni.empty()) {
            want = static_cast<double>(inter.size()) / static_cast<double>(uni.size());
            iou_sum += *want;
            ++defined;
          }
          if (!gs.empty()) {
            acc_sum += static_cast<double>(inter.size()) / static_cast<double>(gs.size());
            ++acc_classes;
          }
          ++compared;
          differ += iou(acc, l, c) != want;
        }
        const double want_miou = iou_sum / static_cast<double>(defined);
        ++compared;
        differ += miou(acc, l) != want_miou;
        layer_sum += want_miou;
        if (s == Strategy::S1) {
          const auto a = macc_allacc(acc, l);
          compared += 2;
          differ += a.allacc != static_cast<double>(correct) / 1000.0;
          differ += a.macc != acc_sum / static_cast<double>(acc_classes);
        }
      }
      ++compared;
      differ += avg_miou(acc) != layer_sum / static_cast<double>(gt.layers.size());
    }
  }
  return {differ == 0, std::to_string(compared) + " values compared, " + std::to_string(differ) + " differ"};
}

Outcome table_arithmetic() {
  // Per-class true positives per layer; each layer's errors split evenly
  // between its two off-diagonal cells.
  struct Layer {
    std::uint64_t tp0, tp1, errors;
  };
  const Layer layers[3] = {{5782, 11098, 3126}, {14502, 5318, 178}, {12727, 7073, 198}};
  ConfusionAccumulator acc(Strategy::S2);
  for (std::size_t l = 0; l < 3; ++l) {
    acc.add(l, 0, 0, layers[l].tp0);
    acc.add(l, 1, 1, layers[l].tp1);
    acc.add(l, 0, 1, layers[l].errors / 2);
    acc.add(l, 1, 0, layers[l].errors / 2);
  }
  const MetricReport r = make_report(acc, "PointTransformer v1 aug");
  const double want[3] = {71.5, 97.8, 97.9};
  bool layers_ok = true;
  std::string detail = "layers";
  for (std::size_t l = 0; l < 3; ++l) {
    const double pct = 100.0 * *r.layers[l].miou;
    // Published values are rounded to one decimal.
    layers_ok = layers_ok && std::round(pct * 10.0) == std::round(want[l] * 10.0);
    detail += " " + fmt("%.3f", pct);
  }
  const double avg = 100.0 * *r.avg_miou;
  const std::string table = format_table(r);
  bool table_ok = true;
  for (const char* cell : {"89.0", "71.5", "97.8", "97.9"}) table_ok = table_ok && table.find(cell) != std::string::npos;
  return {layers_ok && std::abs(avg - 89.0) <= 0.05 && table_ok, detail + ", avg " + fmt("%.3f", avg)};
}

Outcome scanner_soundness(const fs::path& work) {
  harness::RunConfig cfg("gen");
  cfg.set("out", (work / "c6").string());
  cfg.set("scenes", "20");
  cfg.set("seed", "6");
  cfg.set("band_positive_fraction", "0.5");
  const auto m = harness::run_gen(cfg);
  std::size_t violations = 0, invalid = 0, band_errors = 0, positive = 0, points = 0;
  for (const auto& e : m.entries) {
    SceneSpec spec;
    spec.upper = e.upper;
    spec.lower = e.lower;
    spec.overlap_band_m = e.overlap_band_m;
    spec.pose_seed = e.pose_seed;
    spec.shape_seed = e.shape_seed;
    const Scene scene = sample_scene(spec);
    const LabeledScan s = load_scan_ply((work / "c6" / e.file).string());
    if (s.view_origins.size() != 13) ++band_errors;
    violations += check_visibility(s, scene);
    std::size_t hidden = 0;
    for (const auto& l : s.labels) {
      invalid += !l.valid();
      hidden += l.hidden.has_value();
    }
    points += s.size();
    if (e.overlap_band_m > 0) {
      ++positive;
      band_errors += hidden == 0;
    } else {
      band_errors += hidden != 0;
    }
  }
  fs::remove_all(work / "c6");
  return {violations == 0 && invalid == 0 && band_errors == 0 && positive > 0 && positive < m.entries.size(),
          std::to_string(m.entries.size()) + " scenes (" + std::to_string(positive) + " with band > 0), " +
              std::to_string(points) + " points; " + std::to_string(violations) + " visibility violations, " +
              std::to_string(invalid) + " invalid labels, " + std::to_string(band_errors) + " band errors"};
}

Outcome desk_scale(const fs::path& work) {
  const auto t0 = Clock::now();
  harness::RunConfig gen("gen");
  gen.set("out", (work / "c7" / "data").string());
  gen.set("scenes", "80");
  gen.set("seed", "0");
  const auto m = harness::run_gen(gen);
  std::size_t val = 0;
  for (const auto& e : m.entries) val += e.split == "val";
  const double gen_seconds = seconds_since(t0);

  harness::RunConfig train("train");
  train.set("dataset", (work / "c7" / "data").string());
  train.set("out", (work / "c7" / "run").string());
  train.set("strategy", "s2");
  train.set("backbone", "pt");
  train.set("points", "2048");
  train.set("epochs", "100");
  train.set("stop_at_val_miou", "0.8");
  const auto outcome = harness::run_train(train, [](const nn::EpochLog& row) {
    std::fprintf(stderr, "  c7 epoch %d val %.4f\n", row.epoch, row.val_avg.value_or(0.0));
  });
  const double best = outcome.logs.empty() ? 0.0 : outcome.logs.back().val_avg.value_or(0.0);
  const int epochs = outcome.logs.empty() ? 0 : outcome.logs.back().epoch;
  fs::remove_all(work / "c7");
  return {val == 16 && m.entries.size() - val == 64 && best >= 0.80 && epochs <= 100 && outcome.seconds <= 1800.0,
          std::to_string(m.entries.size() - val) + "/" + std::to_string(val) + " scenes, val avg mIoU " +
              fmt("%.4f", best) + " at epoch " + std::to_string(epochs) + ", training " +
              fmt("%.0f s", outcome.seconds) + " (gen " + fmt("%.0f s", gen_seconds) + ")"};
}

Outcome overfit() {
  SceneSpec spec;
  spec.upper = GarmentClass::LongShirt;
  spec.lower = GarmentClass::LongPants;
  spec.overlap_band_m = 0.08;
  spec.pose_seed = 3;
  spec.shape_seed = 5;
  const LabeledScan s = resample(scan(sample_scene(spec), ScanConfig{}), 512, 0);
  const std::vector<nn::Sample> set{{"overfit", s.cloud, encode(s.labels, Strategy::S2)}};
  bool ok = true;
  std::string detail;
  for (auto b : kBackbones) {
    const auto t0 = Clock::now();
    nn::TrainState st{nn::Model<float>(nn::model_config_for(Strategy::S2, b), 1), {}, 0, 0};
    nn::TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 1;
    tc.seed = 1;
    nn::train(st, set, {}, Strategy::S2, tc);
    const auto ev = nn::evaluate(st.model, set, Strategy::S2);
    const double a = avg_miou(ev.confusion);
    ok = ok && a >= 0.99;
    detail += (detail.empty() ? "" : ", ") + std::string(nn::backbone_name(b)) + " " + fmt("%.4f", a) + " (" +
              fmt("%.0f s", seconds_since(t0)) + ")";
  }
  return {ok, "512 points, 200 epochs: " + detail};
}

Outcome equivariance() {
  SceneSpec spec;
  spec.upper = GarmentClass::TShirt;
  spec.lower = GarmentClass::Skirt;
  spec.overlap_band_m = 0.06;
  spec.pose_seed = 8;
  spec.shape_seed = 9;
  const LabeledScan s = resample(scan(sample_scene(spec), ScanConfig{}), 1024, 0);
  std::vector<std::uint32_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::size_t differ = 0, compared = 0;
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(trial));
    const PointCloud shuffled = s.cloud.subset(perm);
    for (auto b : kBackbones) {
      for (auto st : {Strategy::S2, Strategy::S5}) {
        nn::Model<float> m(nn::model_config_for(st, b), 40 + trial);
        const auto a = nn::predict(m, s.cloud, st);
        const auto c = nn::predict(m, shuffled, st);
        for (std::size_t l = 0; l < a.layers.size(); ++l) {
          for (std::size_t i = 0; i < perm.size(); ++i) {
            ++compared;
            differ += c.layers[l][i] != a.layers[l][perm[i]];
          }
        }
      }
    }
  }
  return {differ == 0, "3 backbones x 2 strategies x 3 permutations of 1024 points; " + std::to_string(compared) +
                           " labels compared, " + std::to_string(differ) + " differ"};
}

Outcome reproducibility(const fs::path& work) {
  auto run = [&](const std::string& tag) {
    const fs::path root = work / "c10" / tag;
    harness::RunConfig gen("gen");
    gen.set("out", (root / "data").string());
    gen.set("scenes", "10");
    gen.set("seed", "77");
    gen.set("rays_per_view", "500");
    harness::run_gen(gen);
    harness::RunConfig train("train");
    train.set("dataset", (root / "data").string());
    train.set("out", (root / "run").string());
    train.set("points", "512");
    train.set("feature_width", "32");
    train.set("epochs", "3");
    train.set("batch_size", "4");
    train.set("augment", "true");
    train.set("seed", "77");
    harness::run_train(train);
    harness::RunConfig eval("eval");
    eval.set("checkpoint", (root / "run" / "checkpoint.bin").string());
    eval.set("dataset", (root / "data").string());
    eval.set("points", "512");
    eval.set("out", (root / "eval").string());
    harness::run_eval(eval);
    return root;
  };
  const fs::path a = run("a");
  const fs::path b = run("b");
  std::vector<fs::path> files = {"data/manifest.tsv", "run/log.csv", "run/checkpoint.bin", "eval/report.json",
                                 "eval/report.txt"};
  for (const auto& e : harness::read_manifest((a / "data").string()).entries) files.push_back("data/" + e.file);
  std::size_t differ = 0;
  for (const auto& f : files) differ += !fs::exists(a / f) || slurp(a / f) != slurp(b / f);
  fs::remove_all(work / "c10");
  return {differ == 0, std::to_string(files.size()) + " artifacts compared across two runs, " +
                           std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "layerseg_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--work DIR]\n");
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"strategy round-trip", round_trip},
      {"cross-strategy overlap equivalence", overlap_equivalence},
      {"metric oracle", metric_oracle},
      {"table arithmetic reproduction", table_arithmetic},
      {"scanner soundness", [&] { return scanner_soundness(work); }},
      {"desk-scale learning", [&] { return desk_scale(work); }},
      {"overfit sanity", overfit},
      {"permutation equivariance", equivariance},
      {"reproducibility", [&] { return reproducibility(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s %s (%s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
