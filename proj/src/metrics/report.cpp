#include <algorithm>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "layerseg/errors.hpp"
#include "layerseg/metrics.hpp"

namespace layerseg {
namespace {

std::string pct(std::optional<double> v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << (*v * 100.0);
  return os.str();
}

nlohmann::json opt(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string row(const std::vector<std::string>& cells, const std::vector<std::size_t>& w) {
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os << " | ";
    if (i == 0) {
      os << std::left << std::setw(static_cast<int>(w[i])) << cells[i];
    } else {
      os << std::right << std::setw(static_cast<int>(w[i])) << cells[i];
    }
  }
  os << "\n";
  return os.str();
}

}  // namespace

MetricReport make_report(const ConfusionAccumulator& acc, std::string method,
                         std::size_t inconsistent_predictions) {
  MetricReport r;
  r.strategy = acc.strategy();
  r.method = std::move(method);
  r.inconsistent_predictions = inconsistent_predictions;
  r.points = acc.layers() ? acc.total_points(0) : 0;
  const auto& tables = class_tables(acc.strategy());
  bool all_defined = true;
  double sum = 0.0;
  for (std::size_t l = 0; l < acc.layers(); ++l) {
    LayerReport lr;
    lr.name = tables[l].name;
    lr.class_names = tables[l].classes;
    for (std::size_t c = 0; c < acc.classes(l); ++c) lr.class_iou.push_back(iou(acc, l, c));
    try {
      lr.miou = miou(acc, l);
      sum += *lr.miou;
    } catch (const UndefinedLayer&) {
      all_defined = false;
    }
    r.layers.push_back(std::move(lr));
  }
  if (all_defined && acc.layers() > 0) r.avg_miou = sum / static_cast<double>(acc.layers());
  if (acc.strategy() == Strategy::S1 && r.points > 0) r.accuracy = macc_allacc(acc, 0);
  return r;
}

std::string format_table(const MetricReport& r) {
  std::vector<std::string> group;
  std::vector<std::string> header;
  std::vector<std::string> values;
  header.push_back("Method");
  values.push_back(r.method);
  group.push_back("");
  if (r.strategy == Strategy::S1) {
    for (const char* name : {"mIoU", "mAcc", "allAcc"}) {
      header.emplace_back(name);
      group.emplace_back("");
    }
    values.push_back(pct(r.layers.at(0).miou));
    values.push_back(pct(r.accuracy ? std::optional(r.accuracy->macc) : std::nullopt));
    values.push_back(pct(r.accuracy ? std::optional(r.accuracy->allacc) : std::nullopt));
    for (std::size_t c = 0; c < r.layers[0].class_names.size(); ++c) {
      header.push_back(r.layers[0].class_names[c]);
      values.push_back(pct(r.layers[0].class_iou[c]));
      group.emplace_back("");
    }
  } else {
    header.emplace_back("avg mIoU");
    values.push_back(pct(r.avg_miou));
    group.emplace_back("");
    for (std::size_t l = 0; l < r.layers.size(); ++l) {
      const auto& layer = r.layers[l];
      header.emplace_back("mIoU");
      values.push_back(pct(layer.miou));
      group.push_back("Layer " + std::to_string(l + 1));
      for (std::size_t c = 0; c < layer.class_names.size(); ++c) {
        header.push_back(layer.class_names[c]);
        values.push_back(pct(layer.class_iou[c]));
        group.emplace_back("");
      }
    }
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = std::max({header[i].size(), values[i].size(), group[i].size(), std::size_t{4}});
  }
  std::ostringstream os;
  os << "strategy " << strategy_name(r.strategy) << "  points " << r.points
     << "  inconsistent " << r.inconsistent_predictions << "\n";
  if (r.strategy != Strategy::S1) os << row(group, width);
  os << row(header, width) << row(values, width);
  return os.str();
}

std::string format_json(const MetricReport& r) {
  nlohmann::json j;
  j["strategy"] = std::string(strategy_name(r.strategy));
  j["method"] = r.method;
  j["points"] = r.points;
  j["avg_miou"] = opt(r.avg_miou);
  j["inconsistent_predictions"] = r.inconsistent_predictions;
  if (r.accuracy) {
    j["macc"] = r.accuracy->macc;
    j["allacc"] = r.accuracy->allacc;
  }
  j["layers"] = nlohmann::json::array();
  for (const auto& l : r.layers) {
    nlohmann::json lj;
    lj["name"] = l.name;
    lj["miou"] = opt(l.miou);
    lj["classes"] = nlohmann::json::array();
    for (std::size_t c = 0; c < l.class_names.size(); ++c) {
      lj["classes"].push_back({{"code", c}, {"name", l.class_names[c]}, {"iou", opt(l.class_iou[c])}});
    }
    j["layers"].push_back(std::move(lj));
  }
  return j.dump(2);
}

}  // namespace layerseg
