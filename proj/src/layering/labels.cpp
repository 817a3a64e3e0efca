#include <algorithm>
#include <string>

#include "layerseg/errors.hpp"
#include "layerseg/labels.hpp"

namespace layerseg {

std::string_view garment_name(GarmentClass c) {
  switch (c) {
    case GarmentClass::LongShirt: return "long-shirt";
    case GarmentClass::TShirt: return "t-shirt";
    case GarmentClass::Top: return "top";
    case GarmentClass::LongPants: return "long-pants";
    case GarmentClass::Shorts: return "shorts";
    case GarmentClass::Skirt: return "skirt";
  }
  return "?";
}

GarmentClass parse_garment(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '_', '-');
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (s == "trousers" || s == "pants") return GarmentClass::LongPants;
  if (s == "tshirt") return GarmentClass::TShirt;
  if (s == "longshirt") return GarmentClass::LongShirt;
  if (s == "longpants") return GarmentClass::LongPants;
  for (const auto c : kAllGarments) {
    if (garment_name(c) == s) return c;
  }
  throw InvalidArgument("unknown garment class '" + std::string(name) + "'");
}

std::string to_string(const CanonicalLabel& label) {
  auto name = [](std::optional<GarmentClass> c) {
    return c ? std::string(garment_name(*c)) : std::string("none");
  };
  return std::string("(body=") + (label.is_body ? "true" : "false") +
         ", visible=" + name(label.visible) + ", hidden=" + name(label.hidden) + ")";
}

namespace {
// PLY code order: none, t-shirt, shorts, long-pants, long-shirt, top, skirt.
constexpr std::array<GarmentClass, 6> kCodeOrder = {
    GarmentClass::TShirt,    GarmentClass::Shorts, GarmentClass::LongPants,
    GarmentClass::LongShirt, GarmentClass::Top,    GarmentClass::Skirt};
}  // namespace

int garment_code(std::optional<GarmentClass> c) {
  if (!c) return 0;
  const auto it = std::find(kCodeOrder.begin(), kCodeOrder.end(), *c);
  return static_cast<int>(it - kCodeOrder.begin()) + 1;
}

std::optional<GarmentClass> garment_from_code(int code) {
  if (code == 0) return std::nullopt;
  if (code < 0 || code > 6) {
    throw InvalidArgument("garment code out of range: " + std::to_string(code));
  }
  return kCodeOrder[static_cast<std::size_t>(code - 1)];
}

}  // namespace layerseg
