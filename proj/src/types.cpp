#include "dialektpipe/types.hpp"

namespace dialektpipe {

std::string_view region_name(DialectRegion r) {
    switch (r) {
        case DialectRegion::Basel: return "Basel";
        case DialectRegion::Bern: return "Bern";
        case DialectRegion::German: return "German";
        case DialectRegion::Grisons: return "Grisons";
        case DialectRegion::CentralCH: return "CentralCH";
        case DialectRegion::EasternCH: return "EasternCH";
        case DialectRegion::Valais: return "Valais";
        case DialectRegion::Zurich: return "Zurich";
    }
    return "?";
}

std::string_view region_display(DialectRegion r) {
    switch (r) {
        case DialectRegion::CentralCH: return "Central CH";
        case DialectRegion::EasternCH: return "Eastern CH";
        default: return region_name(r);
    }
}

std::optional<DialectRegion> parse_region(std::string_view name) {
    for (DialectRegion r : kAllRegions) {
        if (name == region_name(r)) return r;
    }
    return std::nullopt;
}

std::string_view language_class_name(LanguageClass c) {
    switch (c) {
        case LanguageClass::standard: return "standard";
        case LanguageClass::swiss: return "swiss";
        case LanguageClass::mixed: return "mixed";
        case LanguageClass::excluded: return "excluded";
    }
    return "?";
}

std::optional<LanguageClass> parse_language_class(std::string_view name) {
    if (name == "standard") return LanguageClass::standard;
    if (name == "swiss") return LanguageClass::swiss;
    if (name == "mixed") return LanguageClass::mixed;
    if (name == "excluded") return LanguageClass::excluded;
    return std::nullopt;
}

std::string make_segment_id(std::string_view episode_id, std::string_view speaker_tag,
                            Millis start_ms) {
    Sha256 h;
    h.update(episode_id);
    h.update("\x1f");
    h.update(speaker_tag);
    h.update("\x1f");
    h.update(format_ms_as_seconds(start_ms));
    return h.hex_digest().substr(0, 16);
}

}  // namespace dialektpipe
