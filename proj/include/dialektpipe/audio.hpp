#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "dialektpipe/util.hpp"

namespace dialektpipe::audio {

// Mono audio, samples in [-1, 1].
struct AudioBuffer {
    std::vector<float> samples;
    int sample_rate_hz = 0;

    double duration_s() const {
        return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
    }
    Millis duration_ms() const { return seconds_to_ms(duration_s()); }
};

// RIFF PCM 16-bit little-endian mono. read_wav rejects anything else with
// an error naming the offending header field.
AudioBuffer read_wav(const std::filesystem::path& path);
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path);

// Permissive reader for ingest: accepts multi-channel PCM16 and down-mixes
// to mono by averaging the channels.
AudioBuffer read_wav_downmix(const std::filesystem::path& path);

// Band-limited resampling: gain-normalized windowed-sinc interpolation,
// Kaiser window, 64 taps per side, cutoff at min(source, target)/2 * 0.945.
// Output length is round(input_length * target / source).
AudioBuffer resample(const AudioBuffer& buffer, int target_rate_hz);

// Copies the sample range [start_s, end_s); bounds must lie inside the
// buffer and start < end.
AudioBuffer slice(const AudioBuffer& buffer, double start_s, double end_s);

// All buffers must share one sample rate; an empty list is an error (there
// is no rate to inherit).
AudioBuffer concat(const std::vector<AudioBuffer>& buffers);

struct VadConfig {
    double frame_ms = 30.0;
    double energy_threshold_db = -40.0;  // RMS energy per frame, dBFS
    double min_speech_ms = 250.0;
    double min_gap_ms = 300.0;
};

// Frame-energy voice activity detection. Returns sorted, disjoint
// (start_ms, end_ms) intervals; gaps shorter than min_gap_ms are bridged,
// intervals shorter than min_speech_ms are discarded.
std::vector<std::pair<Millis, Millis>> energy_vad(const AudioBuffer& buffer,
                                                  const VadConfig& config = {});

}  // namespace dialektpipe::audio
