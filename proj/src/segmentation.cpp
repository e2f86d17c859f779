#include "dialektpipe/segmentation.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "dialektpipe/errors.hpp"

namespace dialektpipe {

std::vector<SpeakerTurn> parse_rttm(const std::string& text) {
    std::vector<SpeakerTurn> turns;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == ';') continue;
        std::vector<std::string> fields = split_whitespace(stripped);
        if (fields.size() != 10) {
            throw DataError("RTTM line " + std::to_string(line_no) + ": expected 10 fields, got " +
                            std::to_string(fields.size()));
        }
        if (fields[0] != "SPEAKER") {
            throw DataError("RTTM line " + std::to_string(line_no) + ": unsupported type '" +
                            fields[0] + "' (only SPEAKER)");
        }
        Millis onset;
        Millis duration;
        try {
            onset = parse_seconds_to_ms(fields[3]);
            duration = parse_seconds_to_ms(fields[4]);
        } catch (const DataError& e) {
            throw DataError("RTTM line " + std::to_string(line_no) + ": " + e.what());
        }
        if (onset < 0) {
            throw DataError("RTTM line " + std::to_string(line_no) + ": negative onset");
        }
        if (duration <= 0) {
            throw DataError("RTTM line " + std::to_string(line_no) +
                            ": non-positive duration " + fields[4]);
        }
        turns.push_back(SpeakerTurn{fields[7], onset, onset + duration});
    }
    std::stable_sort(turns.begin(), turns.end(),
                     [](const SpeakerTurn& a, const SpeakerTurn& b) {
                         return a.start_ms < b.start_ms;
                     });
    return turns;
}

std::string format_rttm(const std::string& episode_id, const std::vector<SpeakerTurn>& turns) {
    std::string out;
    for (const SpeakerTurn& t : turns) {
        out += "SPEAKER " + episode_id + " 1 " + format_ms_as_seconds(t.start_ms) + " " +
               format_ms_as_seconds(t.duration_ms()) + " <NA> <NA> " + t.speaker_tag +
               " <NA> <NA>\n";
    }
    return out;
}

std::vector<SpeakerTurn> filter_min_duration(const std::vector<SpeakerTurn>& turns,
                                             Millis min_ms) {
    std::vector<SpeakerTurn> out;
    out.reserve(turns.size());
    for (const SpeakerTurn& t : turns) {
        if (t.duration_ms() >= min_ms) out.push_back(t);
    }
    return out;
}

std::vector<SpeakerTurn> split_long(const SpeakerTurn& turn, Millis max_ms, Millis min_tail_ms) {
    std::vector<SpeakerTurn> out;
    if (turn.duration_ms() <= max_ms) {
        out.push_back(turn);
        return out;
    }
    Millis pos = turn.start_ms;
    while (turn.end_ms - pos > max_ms) {
        out.push_back(SpeakerTurn{turn.speaker_tag, pos, pos + max_ms});
        pos += max_ms;
    }
    if (turn.end_ms - pos >= min_tail_ms) {
        out.push_back(SpeakerTurn{turn.speaker_tag, pos, turn.end_ms});
    }
    return out;
}

std::vector<SpeakerTurn> drop_overlapping_turns(const std::vector<SpeakerTurn>& turns) {
    std::vector<SpeakerTurn> sorted = turns;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const SpeakerTurn& a, const SpeakerTurn& b) {
                         return a.start_ms < b.start_ms;
                     });
    std::vector<bool> overlapping(sorted.size(), false);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        for (std::size_t j = i + 1; j < sorted.size(); ++j) {
            if (sorted[j].start_ms >= sorted[i].end_ms) break;
            overlapping[i] = true;
            overlapping[j] = true;
        }
    }
    std::vector<SpeakerTurn> out;
    out.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (!overlapping[i]) out.push_back(sorted[i]);
    }
    return out;
}

std::vector<SpeakerTurn> apply_segmentation_rules(const std::vector<SpeakerTurn>& turns,
                                                  const SegmentationConfig& config) {
    std::vector<SpeakerTurn> out;
    for (const SpeakerTurn& t : filter_min_duration(drop_overlapping_turns(turns), config.min_ms)) {
        for (const SpeakerTurn& piece : split_long(t, config.max_ms, config.min_tail_ms)) {
            out.push_back(piece);
        }
    }
    return out;
}

std::vector<Segment> segment_episode(const Episode& episode, const DiarizationResult& diarization,
                                     const audio::AudioBuffer& episode_audio,
                                     const std::filesystem::path& out_dir,
                                     const SegmentationConfig& config) {
    if (diarization.episode_id != episode.episode_id) {
        throw DataError("diarization episode_id '" + diarization.episode_id +
                        "' does not match episode '" + episode.episode_id + "'");
    }
    const Millis audio_ms = episode_audio.duration_ms();
    if (std::abs(audio_ms - episode.duration_ms) > config.audio_tolerance_ms) {
        throw DataError("episode " + episode.episode_id + ": audio duration " +
                        format_ms_as_seconds(audio_ms) + "s does not match metadata " +
                        format_ms_as_seconds(episode.duration_ms) + "s");
    }

    // Clamp turns to the actual audio extent before filtering; a clamped
    // turn that falls under 2s is dropped by the min-duration rule.
    std::vector<SpeakerTurn> clamped;
    clamped.reserve(diarization.turns.size());
    for (SpeakerTurn t : diarization.turns) {
        t.start_ms = std::max<Millis>(t.start_ms, 0);
        t.end_ms = std::min(t.end_ms, audio_ms);
        if (t.start_ms < t.end_ms) clamped.push_back(t);
    }

    std::filesystem::path episode_dir = out_dir / episode.episode_id;
    std::filesystem::create_directories(episode_dir);

    std::vector<Segment> segments;
    for (const SpeakerTurn& piece : apply_segmentation_rules(clamped, config)) {
        Segment s;
        s.segment_id = make_segment_id(episode.episode_id, piece.speaker_tag, piece.start_ms);
        s.episode_id = episode.episode_id;
        s.podcast_id = episode.podcast_id;
        s.speaker_tag = piece.speaker_tag;
        s.start_ms = piece.start_ms;
        s.end_ms = piece.end_ms;
        s.language_class = episode.language_class;

        audio::AudioBuffer clip = audio::slice(episode_audio, ms_to_seconds(piece.start_ms),
                                               ms_to_seconds(piece.end_ms));
        std::filesystem::path rel =
            std::filesystem::path(episode.episode_id) / (s.segment_id + ".wav");
        audio::write_wav(clip, out_dir / rel);
        s.audio_path = rel.generic_string();
        segments.push_back(std::move(s));
    }
    return segments;
}

}  // namespace dialektpipe
