#include "dialektpipe/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "dialektpipe/errors.hpp"

namespace dialektpipe::audio {

namespace {

// ---------------------------------------------------------------------------
// WAV container

std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

AudioBuffer read_wav_impl(const std::filesystem::path& path, bool allow_multichannel) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open WAV file: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    std::size_t n = data.size();

    auto fail = [&](const std::string& field, const std::string& detail) -> void {
        throw DataError("WAV " + path.string() + ": " + field + ": " + detail);
    };

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0) fail("ChunkID", "not a RIFF file");
    if (std::memcmp(p + 8, "WAVE", 4) != 0) fail("Format", "not a WAVE file");

    bool have_fmt = false;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    const unsigned char* pcm = nullptr;
    std::size_t pcm_bytes = 0;

    std::size_t pos = 12;
    while (pos + 8 <= n) {
        const unsigned char* chunk = p + pos;
        std::uint32_t chunk_size = read_u32(chunk + 4);
        std::size_t body = pos + 8;
        if (body + chunk_size > n) fail("ChunkSize", "chunk extends past end of file");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (chunk_size < 16) fail("Subchunk1Size", "fmt chunk too small");
            std::uint16_t format = read_u16(p + body);
            channels = read_u16(p + body + 2);
            sample_rate = read_u32(p + body + 4);
            bits = read_u16(p + body + 14);
            if (format != 1) fail("AudioFormat", "expected PCM (1), got " + std::to_string(format));
            if (bits != 16) {
                fail("BitsPerSample", "expected 16, got " + std::to_string(bits));
            }
            if (channels == 0) fail("NumChannels", "zero channels");
            if (!allow_multichannel && channels != 1) {
                fail("NumChannels", "expected mono (1), got " + std::to_string(channels));
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            pcm = p + body;
            pcm_bytes = chunk_size;
        }
        pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
    }
    if (!have_fmt) fail("fmt", "missing fmt chunk");
    if (pcm == nullptr) fail("data", "missing data chunk");
    if (sample_rate == 0) fail("SampleRate", "zero sample rate");

    std::size_t frame_bytes = std::size_t(channels) * 2;
    std::size_t frames = pcm_bytes / frame_bytes;
    AudioBuffer out;
    out.sample_rate_hz = static_cast<int>(sample_rate);
    out.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            std::int16_t s =
                static_cast<std::int16_t>(read_u16(pcm + i * frame_bytes + 2 * c));
            acc += s;
        }
        out.samples[i] = static_cast<float>(acc / (32768.0 * channels));
    }
    return out;
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) { return read_wav_impl(path, false); }

AudioBuffer read_wav_downmix(const std::filesystem::path& path) {
    return read_wav_impl(path, true);
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
    if (buffer.sample_rate_hz <= 0) throw DataError("write_wav: non-positive sample rate");
    std::string out;
    std::uint32_t data_bytes = static_cast<std::uint32_t>(buffer.samples.size() * 2);
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz));
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate_hz) * 2);
    put_u16(out, 2);   // block align
    put_u16(out, 16);  // bits per sample
    out += "data";
    put_u32(out, data_bytes);
    for (float x : buffer.samples) {
        double v = std::clamp(static_cast<double>(x), -1.0, 1.0);
        long q = std::lround(v * 32768.0);
        q = std::clamp(q, -32768L, 32767L);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write WAV file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("WAV write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

// Modified Bessel function of the first kind, order zero (series expansion).
double bessel_i0(double x) {
    double sum = 1.0;
    double term = 1.0;
    double half_x = x / 2.0;
    for (int k = 1; k < 64; ++k) {
        term *= (half_x / k) * (half_x / k);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    return sum;
}

constexpr int kTapsPerSide = 64;
constexpr double kKaiserBeta = 8.6;
constexpr double kCutoffRatio = 0.945;  // of the smaller Nyquist frequency

// Largest phase count for which per-phase tap vectors are precomputed
// exactly; beyond that a dense interpolated kernel table is used.
constexpr std::int64_t kMaxExactPhases = 4096;

}  // namespace

AudioBuffer resample(const AudioBuffer& buffer, int target_rate_hz) {
    if (target_rate_hz <= 0) throw DataError("resample: target rate must be positive");
    if (buffer.sample_rate_hz <= 0) throw DataError("resample: source rate must be positive");
    if (target_rate_hz == buffer.sample_rate_hz) return buffer;

    const std::int64_t src = buffer.sample_rate_hz;
    const std::int64_t dst = target_rate_hz;
    const std::int64_t in_len = static_cast<std::int64_t>(buffer.samples.size());
    const std::int64_t out_len =
        std::llround(double(in_len) * double(dst) / double(src));

    AudioBuffer out;
    out.sample_rate_hz = target_rate_hz;
    out.samples.resize(static_cast<std::size_t>(out_len));
    if (in_len == 0) return out;

    // Kernel is expressed in input-sample units. When downsampling it
    // stretches by src/dst so the cutoff stays below the target Nyquist.
    const double stretch = std::max(1.0, double(src) / double(dst));
    const double cutoff =
        kCutoffRatio * 0.5 * std::min(1.0, double(dst) / double(src));  // cycles/input sample
    const double half_width = kTapsPerSide * stretch;
    const double inv_i0_beta = 1.0 / bessel_i0(kKaiserBeta);

    auto kernel = [&](double u) -> double {
        double t = u / half_width;
        if (t <= -1.0 || t >= 1.0) return 0.0;
        double sinc =
            (u == 0.0) ? 2.0 * cutoff : std::sin(2.0 * M_PI * cutoff * u) / (M_PI * u);
        double w = bessel_i0(kKaiserBeta * std::sqrt(1.0 - t * t)) * inv_i0_beta;
        return sinc * w;
    };

    // Output sample n sits at input position n*src/dst = base + phase/P
    // with P = dst/gcd; taps depend only on the phase, so they are
    // precomputed once per phase for rational rate pairs.
    const std::int64_t g = std::gcd(src, dst);
    const std::int64_t phases = dst / g;
    const std::int64_t step = src / g;  // numerator step per output sample

    struct PhaseTaps {
        std::int64_t first_offset;  // j - base for the first tap
        std::vector<double> taps;
    };

    auto eval_output = [&](std::int64_t n, const PhaseTaps& pt) {
        const std::int64_t base = (n * step) / phases;
        double acc = 0.0;
        double weight = 0.0;
        std::int64_t j = base + pt.first_offset;
        for (double k : pt.taps) {
            if (j >= 0 && j < in_len) {
                acc += k * buffer.samples[static_cast<std::size_t>(j)];
                weight += k;
            }
            ++j;
        }
        // Normalizing by the in-range tap sum pins the DC gain to exactly 1,
        // including at the buffer edges where the window is clipped.
        out.samples[static_cast<std::size_t>(n)] =
            static_cast<float>(weight != 0.0 ? acc / weight : 0.0);
    };

    if (phases <= kMaxExactPhases) {
        std::vector<PhaseTaps> table(static_cast<std::size_t>(phases));
        for (std::int64_t p = 0; p < phases; ++p) {
            const double frac = double(p) / double(phases);
            PhaseTaps& pt = table[static_cast<std::size_t>(p)];
            pt.first_offset = static_cast<std::int64_t>(std::ceil(frac - half_width));
            const std::int64_t last = static_cast<std::int64_t>(std::floor(frac + half_width));
            pt.taps.reserve(static_cast<std::size_t>(last - pt.first_offset + 1));
            for (std::int64_t r = pt.first_offset; r <= last; ++r) {
                pt.taps.push_back(kernel(frac - r));
            }
        }
        for (std::int64_t n = 0; n < out_len; ++n) {
            eval_output(n, table[static_cast<std::size_t>((n * step) % phases)]);
        }
    } else {
        // Dense kernel table with linear interpolation (256 steps per
        // input sample); interpolation error is ~1e-5, well below the
        // filter's own ripple budget.
        const int table_steps = 256;
        const std::int64_t lut_len =
            static_cast<std::int64_t>(std::ceil(half_width * table_steps)) + 2;
        std::vector<double> lut(static_cast<std::size_t>(lut_len));
        for (std::int64_t i = 0; i < lut_len; ++i) {
            lut[static_cast<std::size_t>(i)] = kernel(double(i) / table_steps);
        }
        auto kernel_lut = [&](double u) -> double {
            double a = std::abs(u) * table_steps;
            auto i = static_cast<std::int64_t>(a);
            if (i + 1 >= lut_len) return 0.0;
            double frac = a - double(i);
            return lut[static_cast<std::size_t>(i)] * (1.0 - frac) +
                   lut[static_cast<std::size_t>(i) + 1] * frac;
        };
        for (std::int64_t n = 0; n < out_len; ++n) {
            const double center = double(n) * double(src) / double(dst);
            const std::int64_t j0 = static_cast<std::int64_t>(std::ceil(center - half_width));
            const std::int64_t j1 = static_cast<std::int64_t>(std::floor(center + half_width));
            double acc = 0.0;
            double weight = 0.0;
            for (std::int64_t j = j0; j <= j1; ++j) {
                if (j < 0 || j >= in_len) continue;
                double k = kernel_lut(center - j);
                acc += k * buffer.samples[static_cast<std::size_t>(j)];
                weight += k;
            }
            out.samples[static_cast<std::size_t>(n)] =
                static_cast<float>(weight != 0.0 ? acc / weight : 0.0);
        }
    }
    return out;
}

AudioBuffer slice(const AudioBuffer& buffer, double start_s, double end_s) {
    if (buffer.sample_rate_hz <= 0) throw DataError("slice: buffer has no sample rate");
    if (!(start_s >= 0.0) || !(start_s < end_s)) {
        throw DataError("slice: need 0 <= start < end, got [" + format_fixed(start_s, 3) + ", " +
                        format_fixed(end_s, 3) + "]");
    }
    const std::int64_t n = static_cast<std::int64_t>(buffer.samples.size());
    const std::int64_t i0 = std::llround(start_s * buffer.sample_rate_hz);
    const std::int64_t i1 = std::llround(end_s * buffer.sample_rate_hz);
    if (i1 > n) {
        throw DataError("slice: end " + format_fixed(end_s, 3) + "s past buffer duration " +
                        format_fixed(buffer.duration_s(), 3) + "s");
    }
    AudioBuffer out;
    out.sample_rate_hz = buffer.sample_rate_hz;
    out.samples.assign(buffer.samples.begin() + i0, buffer.samples.begin() + i1);
    return out;
}

AudioBuffer concat(const std::vector<AudioBuffer>& buffers) {
    if (buffers.empty()) throw DataError("concat: empty buffer list (no sample rate to use)");
    AudioBuffer out;
    out.sample_rate_hz = buffers.front().sample_rate_hz;
    std::size_t total = 0;
    for (const AudioBuffer& b : buffers) {
        if (b.sample_rate_hz != out.sample_rate_hz) {
            throw DataError("concat: mixed sample rates " + std::to_string(out.sample_rate_hz) +
                            " and " + std::to_string(b.sample_rate_hz));
        }
        total += b.samples.size();
    }
    out.samples.reserve(total);
    for (const AudioBuffer& b : buffers) {
        out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    }
    return out;
}

std::vector<std::pair<Millis, Millis>> energy_vad(const AudioBuffer& buffer,
                                                  const VadConfig& config) {
    if (config.frame_ms <= 0) throw DataError("energy_vad: frame_ms must be positive");
    std::vector<std::pair<Millis, Millis>> out;
    if (buffer.samples.empty() || buffer.sample_rate_hz <= 0) return out;

    const std::size_t frame_len = static_cast<std::size_t>(
        std::max(1L, std::lround(config.frame_ms * buffer.sample_rate_hz / 1000.0)));
    const std::size_t n_frames = (buffer.samples.size() + frame_len - 1) / frame_len;

    // Frames above the threshold become speech intervals.
    std::vector<std::pair<Millis, Millis>> raw;
    bool in_speech = false;
    Millis speech_start = 0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        std::size_t a = f * frame_len;
        std::size_t b = std::min(a + frame_len, buffer.samples.size());
        double energy = 0.0;
        for (std::size_t i = a; i < b; ++i) {
            energy += double(buffer.samples[i]) * buffer.samples[i];
        }
        double rms_db = 10.0 * std::log10(energy / double(b - a) + 1e-12);
        bool speech = rms_db > config.energy_threshold_db;
        Millis frame_start = seconds_to_ms(double(a) / buffer.sample_rate_hz);
        if (speech && !in_speech) {
            in_speech = true;
            speech_start = frame_start;
        } else if (!speech && in_speech) {
            in_speech = false;
            raw.emplace_back(speech_start, frame_start);
        }
    }
    if (in_speech) raw.emplace_back(speech_start, buffer.duration_ms());

    // Bridge short gaps, then drop short intervals.
    const Millis min_gap = std::llround(config.min_gap_ms);
    const Millis min_speech = std::llround(config.min_speech_ms);
    std::vector<std::pair<Millis, Millis>> merged;
    for (const auto& iv : raw) {
        if (!merged.empty() && iv.first - merged.back().second < min_gap) {
            merged.back().second = iv.second;
        } else {
            merged.push_back(iv);
        }
    }
    for (const auto& iv : merged) {
        if (iv.second - iv.first >= min_speech) out.push_back(iv);
    }
    return out;
}

}  // namespace dialektpipe::audio
