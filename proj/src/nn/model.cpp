#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/nn.hpp"

namespace layerseg::nn {

std::string_view backbone_name(Backbone b) {
  switch (b) {
    case Backbone::SetHierarchy: return "set";
    case Backbone::EdgeConv: return "edge";
    case Backbone::PointTransformer: return "pt";
  }
  return "?";
}

Backbone parse_backbone(std::string_view name) {
  if (name == "set") return Backbone::SetHierarchy;
  if (name == "edge") return Backbone::EdgeConv;
  if (name == "pt") return Backbone::PointTransformer;
  throw InvalidArgument("unknown backbone '" + std::string(name) + "' (expected set, edge or pt)");
}

void ModelConfig::validate() const {
  if (feature_width < 2) throw InvalidArgument("model config: feature_width must be >= 2");
  if (depth < 1 || depth > 4) throw InvalidArgument("model config: depth must be in [1, 4]");
  if (k_neighbors < 1) throw InvalidArgument("model config: k_neighbors must be >= 1");
  if (ball_samples < 1) throw InvalidArgument("model config: ball_samples must be >= 1");
  if (!(radius > 0.0)) throw InvalidArgument("model config: radius must be > 0");
  if (heads.empty()) throw InvalidArgument("model config: at least one head is required");
  for (const auto& h : heads) {
    if (h.classes < 2 || h.classes > 255) {
      throw InvalidArgument("model config: head '" + h.name + "' needs 2..255 classes");
    }
  }
}

std::vector<HeadSpec> heads_for(Strategy s) {
  std::vector<HeadSpec> out;
  for (const auto& t : class_tables(s)) out.push_back({t.name, t.classes.size()});
  return out;
}

ModelConfig model_config_for(Strategy s, Backbone b) {
  ModelConfig c;
  c.backbone = b;
  c.heads = heads_for(s);
  return c;
}

void check_heads(const ModelConfig& cfg, Strategy s) {
  if (cfg.heads != heads_for(s)) {
    throw InvalidArgument("model heads do not match the layer structure of strategy " +
                          std::string(strategy_name(s)));
  }
}

}  // namespace layerseg::nn
