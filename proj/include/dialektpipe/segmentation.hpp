#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/types.hpp"

namespace dialektpipe {

// Diarization output for one episode. The speaker-count hint mirrors the
// 2-6 range given to the diarizer; turns are sorted by start time.
struct DiarizationResult {
    std::string episode_id;
    std::vector<SpeakerTurn> turns;
    int min_speakers_hint = 2;
    int max_speakers_hint = 6;
};

// RTTM SPEAKER lines (10 fields). Comment lines starting with ';' and
// blank lines are skipped; malformed lines raise DataError with the line
// number.
std::vector<SpeakerTurn> parse_rttm(const std::string& text);
std::string format_rttm(const std::string& episode_id, const std::vector<SpeakerTurn>& turns);

// Keeps turns with duration >= min; the boundary is inclusive (a turn of
// exactly 2.000s stays).
std::vector<SpeakerTurn> filter_min_duration(const std::vector<SpeakerTurn>& turns,
                                             Millis min_ms = kMinSegmentMs);

// Splits a long turn into consecutive windows of exactly max_ms starting
// at the turn start. The remainder window is kept iff it is at least
// min_tail_ms long, otherwise dropped. Turns not exceeding max_ms pass
// through unchanged.
std::vector<SpeakerTurn> split_long(const SpeakerTurn& turn, Millis max_ms = kMaxSegmentMs,
                                    Millis min_tail_ms = kMinSegmentMs);

struct SegmentationConfig {
    Millis min_ms = kMinSegmentMs;
    Millis max_ms = kMaxSegmentMs;
    Millis min_tail_ms = kMinSegmentMs;
    // Tolerated mismatch between episode metadata duration and actual audio.
    Millis audio_tolerance_ms = 500;
};

// Applies the drop-overlaps / min-duration / split-long rules to every
// turn, slices the audio, and writes one WAV per segment into
// out_dir/<episode_id>/. Returned audio paths are relative to out_dir.
std::vector<Segment> segment_episode(const Episode& episode, const DiarizationResult& diarization,
                                     const audio::AudioBuffer& episode_audio,
                                     const std::filesystem::path& out_dir,
                                     const SegmentationConfig& config = {});

// Pure turn-list form of the segmentation rules (no audio involved);
// segment_episode is a thin wrapper that adds slicing and file output.
std::vector<SpeakerTurn> apply_segmentation_rules(const std::vector<SpeakerTurn>& turns,
                                                  const SegmentationConfig& config = {});

// Turns with any positive-measure overlap against another turn are
// cross-talk and get dropped entirely.
std::vector<SpeakerTurn> drop_overlapping_turns(const std::vector<SpeakerTurn>& turns);

}  // namespace dialektpipe
