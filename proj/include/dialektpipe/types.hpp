#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "dialektpipe/util.hpp"

namespace dialektpipe {

// The eight speech classes of the corpus: seven Swiss German dialect
// regions plus Standard German.
enum class DialectRegion {
    Basel,
    Bern,
    German,  // Standard German speech
    Grisons,
    CentralCH,
    EasternCH,
    Valais,
    Zurich,
};

inline constexpr std::array<DialectRegion, 8> kAllRegions = {
    DialectRegion::Basel,    DialectRegion::Bern,      DialectRegion::German,
    DialectRegion::Grisons,  DialectRegion::CentralCH, DialectRegion::EasternCH,
    DialectRegion::Valais,   DialectRegion::Zurich,
};

// The seven dialect regions, excluding Standard German.
inline constexpr std::array<DialectRegion, 7> kDialectRegions = {
    DialectRegion::Basel,     DialectRegion::Bern,   DialectRegion::Grisons,
    DialectRegion::CentralCH, DialectRegion::EasternCH, DialectRegion::Valais,
    DialectRegion::Zurich,
};

std::string_view region_name(DialectRegion r);     // stable ASCII identifier
std::string_view region_display(DialectRegion r);  // "Central CH" for tables
std::optional<DialectRegion> parse_region(std::string_view name);

enum class LanguageClass { standard, swiss, mixed, excluded };

std::string_view language_class_name(LanguageClass c);
std::optional<LanguageClass> parse_language_class(std::string_view name);

struct Episode {
    std::string episode_id;
    std::string podcast_id;
    std::string audio_path;
    Millis duration_ms = 0;
    int sample_rate_hz = 0;
    LanguageClass language_class = LanguageClass::excluded;

    bool valid() const {
        return !episode_id.empty() && duration_ms > 0 && sample_rate_hz >= 8000 &&
               sample_rate_hz <= 192000;
    }
};

// One diarization turn. speaker_tag is opaque and only unique within one
// episode.
struct SpeakerTurn {
    std::string speaker_tag;
    Millis start_ms = 0;
    Millis end_ms = 0;

    Millis duration_ms() const { return end_ms - start_ms; }
    bool valid() const { return start_ms >= 0 && start_ms < end_ms; }
};

// The atomic corpus unit: a single-speaker audio span with provenance.
// Persisted segments always satisfy 2s <= duration <= 15s.
struct Segment {
    std::string segment_id;
    std::string episode_id;
    std::string podcast_id;
    std::string speaker_tag;
    Millis start_ms = 0;
    Millis end_ms = 0;
    std::string audio_path;
    std::optional<std::string> transcript;
    std::optional<DialectRegion> dialect;
    std::optional<LanguageClass> language_class;

    Millis duration_ms() const { return end_ms - start_ms; }
};

// Segment duration bounds. Both ends inclusive: a segment of exactly 2s or
// exactly 15s is kept.
inline constexpr Millis kMinSegmentMs = 2000;
inline constexpr Millis kMaxSegmentMs = 15000;

inline bool segment_duration_ok(Millis duration_ms) {
    return duration_ms >= kMinSegmentMs && duration_ms <= kMaxSegmentMs;
}

// Content-hash segment id: stable across re-runs, dedup-friendly.
std::string make_segment_id(std::string_view episode_id, std::string_view speaker_tag,
                            Millis start_ms);

}  // namespace dialektpipe
