#include "layerseg/layering.hpp"

#include <algorithm>
#include <sstream>
#include <string>

#include "layerseg/errors.hpp"

namespace layerseg {
namespace {

const LayerTable kBodyLayer{"body", {"no-body", "body"}};

std::vector<LayerTable> build_tables(Strategy s) {
  switch (s) {
    case Strategy::S1:
      return {{"segmentation", {"other", "upper", "overlap", "lower"}}};
    case Strategy::S2:
      return {kBodyLayer, {"upper", {"other", "upper"}}, {"lower", {"other", "lower"}}};
    case Strategy::S3:
      return {kBodyLayer,
              {"visible", {"other", "upper", "lower"}},
              {"hidden", {"other", "hidden"}}};
    case Strategy::S4:
      return {kBodyLayer,
              {"upper", {"other", "long-shirt", "t-shirt", "top"}},
              {"lower", {"other", "long-pants", "shorts", "skirt"}}};
    case Strategy::S5:
      return {kBodyLayer,
              {"visible",
               {"other", "t-shirt", "shorts", "long-pants", "long-shirt", "top", "skirt"}},
              {"hidden", {"other", "skirt", "shorts", "long-pants"}}};
  }
  throw InvalidArgument("unknown strategy");
}

// Strategy 4 fine codes: upper garments in layer 2, lower garments in layer 3.
std::uint8_t s4_upper_code(GarmentClass c) {
  switch (c) {
    case GarmentClass::LongShirt: return 1;
    case GarmentClass::TShirt: return 2;
    case GarmentClass::Top: return 3;
    default: return 0;
  }
}
std::uint8_t s4_lower_code(GarmentClass c) {
  switch (c) {
    case GarmentClass::LongPants: return 1;
    case GarmentClass::Shorts: return 2;
    case GarmentClass::Skirt: return 3;
    default: return 0;
  }
}
// Strategy 5 hidden layer: skirt, shorts, long-pants.
std::uint8_t s5_hidden_code(GarmentClass c) {
  switch (c) {
    case GarmentClass::Skirt: return 1;
    case GarmentClass::Shorts: return 2;
    case GarmentClass::LongPants: return 3;
    default: return 0;
  }
}

constexpr std::array<GarmentClass, 3> kS4Upper = {GarmentClass::LongShirt,
                                                   GarmentClass::TShirt, GarmentClass::Top};
constexpr std::array<GarmentClass, 3> kS4Lower = {GarmentClass::LongPants,
                                                   GarmentClass::Shorts, GarmentClass::Skirt};
constexpr std::array<GarmentClass, 3> kS5Hidden = {GarmentClass::Skirt, GarmentClass::Shorts,
                                                    GarmentClass::LongPants};

Coarse coarse_region(const CanonicalLabel& l) {
  if (l.hidden) return Coarse::Overlap;
  if (is_upper(l.visible)) return Coarse::Upper;
  if (is_lower(l.visible)) return Coarse::Lower;
  return Coarse::Other;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::S1: return "s1";
    case Strategy::S2: return "s2";
    case Strategy::S3: return "s3";
    case Strategy::S4: return "s4";
    case Strategy::S5: return "s5";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (const auto s : kAllStrategies) {
    if (strategy_name(s) == name) return s;
  }
  if (name.size() == 2 && name[0] == 'S') return parse_strategy(std::string{'s', name[1]});
  throw InvalidArgument("unknown strategy '" + std::string(name) + "' (expected s1..s5)");
}

const std::vector<LayerTable>& class_tables(Strategy s) {
  static const std::array<std::vector<LayerTable>, 5> tables = {
      build_tables(Strategy::S1), build_tables(Strategy::S2), build_tables(Strategy::S3),
      build_tables(Strategy::S4), build_tables(Strategy::S5)};
  return tables.at(static_cast<std::size_t>(s) - 1);
}

std::size_t layer_count(Strategy s) { return class_tables(s).size(); }

std::vector<std::size_t> class_counts(Strategy s) {
  std::vector<std::size_t> out;
  for (const auto& t : class_tables(s)) out.push_back(t.classes.size());
  return out;
}

std::string class_table_sidecar(Strategy s) {
  std::ostringstream os;
  os << "# layerseg class codes\n";
  os << "strategy " << strategy_name(s) << "\n";
  os << "layers " << layer_count(s) << "\n";
  const auto& tables = class_tables(s);
  for (std::size_t l = 0; l < tables.size(); ++l) {
    os << "layer " << (l + 1) << " " << tables[l].name << " " << tables[l].classes.size()
       << "\n";
    for (std::size_t c = 0; c < tables[l].classes.size(); ++c) {
      os << "  " << c << " " << tables[l].classes[c] << "\n";
    }
  }
  return os.str();
}

void StrategyLabels::validate() const {
  const auto expected = layerseg::class_counts(strategy);
  if (layers.size() != expected.size() || class_counts != expected) {
    throw InvalidArgument("strategy labels: layer structure does not match " +
                          std::string(strategy_name(strategy)));
  }
  const std::size_t n = size();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].size() != n) {
      throw InvalidArgument("strategy labels: layers differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (layers[l][i] >= class_counts[l]) {
        throw InvalidArgument("strategy labels: code out of range at layer " +
                              std::to_string(l + 1) + ", point " + std::to_string(i));
      }
    }
  }
}

StrategyLabels StrategyLabels::empty(Strategy s, std::size_t points) {
  StrategyLabels out;
  out.strategy = s;
  out.class_counts = layerseg::class_counts(s);
  out.layers.assign(out.class_counts.size(), std::vector<std::uint8_t>(points, 0));
  return out;
}

StrategyLabels encode(std::span<const CanonicalLabel> labels, Strategy strategy) {
  StrategyLabels out = StrategyLabels::empty(strategy, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const CanonicalLabel& x = labels[i];
    if (!x.valid()) {
      throw InvalidArgument("encode: label at point " + std::to_string(i) +
                            " violates the layering invariants " + to_string(x));
    }
    if (strategy == Strategy::S1) {
      out.layers[0][i] = static_cast<std::uint8_t>(coarse_region(x));
      continue;
    }
    out.layers[0][i] = x.is_body ? 1 : 0;
    auto& l2 = out.layers[1][i];
    auto& l3 = out.layers[2][i];
    switch (strategy) {
      case Strategy::S2:
        l2 = is_upper(x.visible) ? 1 : 0;
        l3 = (is_lower(x.visible) || is_lower(x.hidden)) ? 1 : 0;
        break;
      case Strategy::S3:
        l2 = is_upper(x.visible) ? 1 : (is_lower(x.visible) ? 2 : 0);
        l3 = x.hidden ? 1 : 0;
        break;
      case Strategy::S4:
        l2 = is_upper(x.visible) ? s4_upper_code(*x.visible) : 0;
        if (is_lower(x.visible)) {
          l3 = s4_lower_code(*x.visible);
        } else if (x.hidden) {
          l3 = s4_lower_code(*x.hidden);
        }
        break;
      case Strategy::S5:
        l2 = static_cast<std::uint8_t>(garment_code(x.visible));
        l3 = x.hidden ? s5_hidden_code(*x.hidden) : 0;
        break;
      case Strategy::S1:
        break;
    }
  }
  return out;
}

std::vector<CoarseLabel> coarse_project(std::span<const CanonicalLabel> labels,
                                        bool with_body) {
  std::vector<CoarseLabel> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    CoarseLabel c{coarse_region(l), std::nullopt};
    if (with_body) c.body = l.is_body;
    out.push_back(c);
  }
  return out;
}

Decoded decode(const StrategyLabels& enc) {
  enc.validate();
  const std::size_t n = enc.size();
  Decoded out;
  out.strategy = enc.strategy;
  out.coarse.resize(n);
  out.inconsistent.assign(n, false);
  const bool fine = enc.strategy == Strategy::S4 || enc.strategy == Strategy::S5;
  if (fine) out.fine.emplace(n);

  for (std::size_t i = 0; i < n; ++i) {
    bool bad = false;
    if (enc.strategy == Strategy::S1) {
      out.coarse[i] = {static_cast<Coarse>(enc.layers[0][i]), std::nullopt};
      continue;
    }
    const bool body = enc.layers[0][i] == 1;
    const std::uint8_t l2 = enc.layers[1][i];
    const std::uint8_t l3 = enc.layers[2][i];
    CanonicalLabel x{body, std::nullopt, std::nullopt};
    Coarse region = Coarse::Other;
    switch (enc.strategy) {
      case Strategy::S2:
        region = l2 && l3 ? Coarse::Overlap
                 : l2     ? Coarse::Upper
                 : l3     ? Coarse::Lower
                          : Coarse::Other;
        break;
      case Strategy::S3:
        region = l2 == 1 ? (l3 ? Coarse::Overlap : Coarse::Upper)
                 : l2 == 2 ? Coarse::Lower
                           : Coarse::Other;
        // The hidden bit only makes sense beneath an upper garment.
        if (l3 && l2 != 1) bad = true;
        break;
      case Strategy::S4:
        if (l2) x.visible = kS4Upper[l2 - 1u];
        if (l3) {
          if (x.visible) {
            x.hidden = kS4Lower[l3 - 1u];
          } else {
            x.visible = kS4Lower[l3 - 1u];
          }
        }
        break;
      case Strategy::S5:
        x.visible = garment_from_code(l2);
        if (l3) {
          if (is_upper(x.visible)) {
            x.hidden = kS5Hidden[l3 - 1u];
          } else {
            bad = true;
          }
        }
        break;
      case Strategy::S1:
        break;
    }
    if (fine) {
      region = coarse_region(x);
      (*out.fine)[i] = x;
    }
    // No garment and no body: an unlabeled garment point, reported as other.
    if (!body && region == Coarse::Other && !(fine && x.visible)) bad = true;
    out.coarse[i] = {region, body};
    if (bad) {
      out.inconsistent[i] = true;
      ++out.inconsistent_count;
    }
  }
  return out;
}

std::vector<bool> overlap_set(const StrategyLabels& enc) {
  enc.validate();
  const std::size_t n = enc.size();
  std::vector<bool> out(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    switch (enc.strategy) {
      case Strategy::S1:
        out[i] = enc.layers[0][i] == static_cast<std::uint8_t>(Coarse::Overlap);
        break;
      case Strategy::S2:
      case Strategy::S4:
        out[i] = enc.layers[1][i] != 0 && enc.layers[2][i] != 0;
        break;
      case Strategy::S3:
      case Strategy::S5:
        out[i] = enc.layers[2][i] != 0;
        break;
    }
  }
  return out;
}

ConsistencyReport consistency_check(const StrategyLabels& a, const StrategyLabels& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("consistency_check: encodings cover different point counts");
  }
  const auto sa = overlap_set(a);
  const auto sb = overlap_set(b);
  ConsistencyReport r{a.strategy, b.strategy, 0};
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i]) ++r.mismatches;
  }
  return r;
}

std::vector<ConsistencyReport> consistency_check(std::span<const StrategyLabels> encodings) {
  std::vector<ConsistencyReport> out;
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    for (std::size_t j = i + 1; j < encodings.size(); ++j) {
      out.push_back(consistency_check(encodings[i], encodings[j]));
    }
  }
  return out;
}

std::vector<CanonicalLabel> all_valid_labels() {
  std::vector<CanonicalLabel> out;
  out.push_back({true, std::nullopt, std::nullopt});
  for (const bool body : {false, true}) {
    for (const auto v : kAllGarments) out.push_back({body, v, std::nullopt});
    for (const auto v : kUpperGarments) {
      for (const auto h : kLowerGarments) out.push_back({body, v, h});
    }
  }
  return out;
}

}  // namespace layerseg
