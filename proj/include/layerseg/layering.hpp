#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layerseg/labels.hpp"

namespace layerseg {

/// The five label encodings. S1 is single-layer; S2..S5 use three layers
/// (body, then two garment layers).
enum class Strategy : std::uint8_t { S1 = 1, S2, S3, S4, S5 };

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4, Strategy::S5};

std::string_view strategy_name(Strategy s);  // "s1".."s5"
Strategy parse_strategy(std::string_view name);

struct LayerTable {
  std::string name;
  std::vector<std::string> classes;  // code -> class name; code 0 is other/no-body
};

/// Class-code tables per strategy. Column order matches the published result
/// tables for each strategy.
const std::vector<LayerTable>& class_tables(Strategy s);

std::size_t layer_count(Strategy s);
std::vector<std::size_t> class_counts(Strategy s);

/// Text sidecar describing the tables of `s` (see docs/formats.md).
std::string class_table_sidecar(Strategy s);

/// Per-strategy per-layer integer labels.
struct StrategyLabels {
  Strategy strategy = Strategy::S1;
  std::vector<std::vector<std::uint8_t>> layers;
  std::vector<std::size_t> class_counts;

  std::size_t size() const { return layers.empty() ? 0 : layers.front().size(); }

  /// Throws InvalidArgument when the layer structure or any code is out of range.
  void validate() const;

  static StrategyLabels empty(Strategy s, std::size_t points);
};

enum class Coarse : std::uint8_t { Other = 0, Upper = 1, Overlap = 2, Lower = 3 };

/// Strategy-independent coarse view: upper / lower / overlap / other plus an
/// optional body bit (absent for S1, which has no body layer).
struct CoarseLabel {
  Coarse region = Coarse::Other;
  std::optional<bool> body;

  bool operator==(const CoarseLabel&) const = default;
};

StrategyLabels encode(std::span<const CanonicalLabel> labels, Strategy strategy);

std::vector<CoarseLabel> coarse_project(std::span<const CanonicalLabel> labels,
                                        bool with_body = true);

struct Decoded {
  Strategy strategy = Strategy::S1;
  std::vector<CoarseLabel> coarse;
  /// Present for S4/S5 only.
  std::optional<std::vector<CanonicalLabel>> fine;
  /// Per-point flag for code combinations no valid ground truth produces.
  std::vector<bool> inconsistent;
  std::size_t inconsistent_count = 0;
};

/// Inverts `encode`. Never fails on in-range codes: combinations that violate
/// the layering invariants (possible for predictions) are decoded best-effort
/// and flagged.
Decoded decode(const StrategyLabels& encoded);

/// Overlap membership implied by an encoding (S1 overlap code, S2/S4 both
/// garment layers set, S3 hidden bit, S5 any hidden class).
std::vector<bool> overlap_set(const StrategyLabels& encoded);

struct ConsistencyReport {
  Strategy first;
  Strategy second;
  std::size_t mismatches = 0;
};

ConsistencyReport consistency_check(const StrategyLabels& a, const StrategyLabels& b);

/// Pairwise reports over a list of encodings of the same points.
std::vector<ConsistencyReport> consistency_check(std::span<const StrategyLabels> encodings);

/// Every label satisfying the canonical invariants (31 of them).
std::vector<CanonicalLabel> all_valid_labels();

}  // namespace layerseg
