#pragma once

#include <array>
#include <string>
#include <string_view>

#include "irmrank/errors.hpp"

namespace irm {

/// Model family members. The `_i`/`_d` variants drop the text/image input,
/// `hfunc` drops the social-influence factor, `+` variants use text-guided
/// glimpse attention over the conv map and `+i` replaces that attention by
/// average pooling of the whole map.
enum class Variant { AmnlImage, AmnlText, Amnl, AmnlNoSocial, AmnlPlus, AmnlPlusPooled, AmnlPlusNoSocial };

inline constexpr std::array<Variant, 7> kAllVariants = {
    Variant::AmnlImage, Variant::AmnlText,       Variant::Amnl,           Variant::AmnlNoSocial,
    Variant::AmnlPlus,  Variant::AmnlPlusPooled, Variant::AmnlPlusNoSocial};

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::AmnlImage: return "AMNL_i";
    case Variant::AmnlText: return "AMNL_d";
    case Variant::Amnl: return "AMNL";
    case Variant::AmnlNoSocial: return "AMNL_hfunc";
    case Variant::AmnlPlus: return "AMNL+";
    case Variant::AmnlPlusPooled: return "AMNL+i";
    case Variant::AmnlPlusNoSocial: return "AMNL+hfunc";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (Variant v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + std::string(s) +
                    "' (expected AMNL_i, AMNL_d, AMNL, AMNL_hfunc, AMNL+, AMNL+i, AMNL+hfunc)");
}

inline bool uses_image(Variant v) { return v != Variant::AmnlText; }
inline bool uses_text(Variant v) { return v != Variant::AmnlImage; }
inline bool is_attentive(Variant v) {
  return v == Variant::AmnlPlus || v == Variant::AmnlPlusPooled || v == Variant::AmnlPlusNoSocial;
}
inline bool is_pooled(Variant v) { return v == Variant::AmnlPlusPooled; }
inline bool uses_social(Variant v) { return v != Variant::AmnlNoSocial && v != Variant::AmnlPlusNoSocial; }

}  // namespace irm
