#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace layerseg {

enum class GarmentClass : std::uint8_t { LongShirt, TShirt, Top, LongPants, Shorts, Skirt };

inline constexpr std::array<GarmentClass, 6> kAllGarments = {
    GarmentClass::LongShirt, GarmentClass::TShirt, GarmentClass::Top,
    GarmentClass::LongPants, GarmentClass::Shorts, GarmentClass::Skirt};
inline constexpr std::array<GarmentClass, 3> kUpperGarments = {
    GarmentClass::LongShirt, GarmentClass::TShirt, GarmentClass::Top};
inline constexpr std::array<GarmentClass, 3> kLowerGarments = {
    GarmentClass::LongPants, GarmentClass::Shorts, GarmentClass::Skirt};

constexpr bool is_upper(GarmentClass c) {
  return c == GarmentClass::LongShirt || c == GarmentClass::TShirt || c == GarmentClass::Top;
}
constexpr bool is_lower(GarmentClass c) { return !is_upper(c); }

inline bool is_upper(std::optional<GarmentClass> c) { return c && is_upper(*c); }
inline bool is_lower(std::optional<GarmentClass> c) { return c && is_lower(*c); }

/// Hyphenated lower-case name, e.g. "long-pants".
std::string_view garment_name(GarmentClass c);

/// Parses a garment name. Accepts "trousers" as an alias of long-pants and
/// tolerates '_' in place of '-'. Throws InvalidArgument on unknown names.
GarmentClass parse_garment(std::string_view name);

/// Per-point ground truth, independent of any label encoding.
struct CanonicalLabel {
  bool is_body = true;
  std::optional<GarmentClass> visible;
  std::optional<GarmentClass> hidden;

  bool operator==(const CanonicalLabel&) const = default;

  /// hidden => visible upper and hidden lower; no visible => body, no hidden.
  bool valid() const {
    if (hidden && !(is_upper(visible) && is_lower(hidden))) return false;
    if (!visible && (hidden || !is_body)) return false;
    return true;
  }
};

std::string to_string(const CanonicalLabel& label);

/// Integer codes used in PLY files for visible_class / hidden_class:
/// 0 none, then t-shirt, shorts, long-pants, long-shirt, top, skirt.
int garment_code(std::optional<GarmentClass> c);
std::optional<GarmentClass> garment_from_code(int code);

}  // namespace layerseg
