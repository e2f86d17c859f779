#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/types.hpp"

namespace testsupport {

// Self-deleting scratch directory; every test gets a fresh one so parallel
// runs never collide.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "dialektpipe") {
        std::string templ =
            (std::filesystem::temp_directory_path() / (tag + ".XXXXXX")).string();
        std::vector<char> buf(templ.begin(), templ.end());
        buf.push_back('\0');
        if (::mkdtemp(buf.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed for " + templ);
        }
        path_ = buf.data();
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline dialektpipe::audio::AudioBuffer make_sine(double seconds, double freq_hz,
                                                 int rate_hz = 16000, double amplitude = 0.5) {
    dialektpipe::audio::AudioBuffer buf;
    buf.sample_rate_hz = rate_hz;
    auto n = static_cast<std::size_t>(seconds * rate_hz);
    buf.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        buf.samples[i] = static_cast<float>(
            amplitude * std::sin(2.0 * 3.14159265358979323846 * freq_hz *
                                 static_cast<double>(i) / rate_hz));
    }
    return buf;
}

inline dialektpipe::SpeakerTurn turn(const std::string& tag, double start_s, double end_s) {
    dialektpipe::SpeakerTurn t;
    t.speaker_tag = tag;
    t.start_ms = static_cast<dialektpipe::Millis>(start_s * 1000.0 + 0.5);
    t.end_ms = static_cast<dialektpipe::Millis>(end_s * 1000.0 + 0.5);
    return t;
}

}  // namespace testsupport
