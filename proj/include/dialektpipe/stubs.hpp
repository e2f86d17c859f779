#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dialektpipe::stubs {

// Deterministic stand-ins for the five neural backends. All outputs are pure
// functions of the input and the seed, so pipelines built on them are
// reproducible byte for byte.
struct StubOptions {
    std::uint64_t seed = 1;
    double fail_rate = 0.0;               // hash-based per-id failure injection
    std::vector<std::string> fail_ids;    // ids that always fail
    double delay_s = 0.0;                 // artificial latency per request
    int embed_dim = 16;
    int sample_rate_hz = 16000;
    long exit_after = -1;                 // subprocess only: die after N responses
};

StubOptions parse_stub_options(const nlohmann::json& obj);
nlohmann::json stub_options_to_json(const StubOptions& opt);

// Stub audio carries a small JSON payload (text, dialect, speaker, turns)
// encoded losslessly in its leading samples; the rest is seeded noise. This
// is what lets the stub ASR "recognize" exactly what the stub TTS spoke.
void write_payload_wav(const std::filesystem::path& path, const nlohmann::json& metadata,
                       double duration_s, int sample_rate_hz, std::uint64_t seed);
std::optional<nlohmann::json> read_payload_metadata(const std::filesystem::path& path);

// Handles one {id, kind, payload} request and returns the full
// {id, ok, result|error} response object.
nlohmann::json handle_request(const StubOptions& opt, const nlohmann::json& request);

// True when the failure injection (fail_ids or fail_rate) hits this id.
bool injected_failure(const StubOptions& opt, const std::string& id);

// Deterministic phoneme token sequence for a dialect; every dialect draws
// from its own disjoint alphabet.
std::vector<std::string> stub_phonemes(const std::string& dialect, const std::string& text,
                                       double duration_s, std::uint64_t seed);

// Unit-length embedding derived from the speaker tag.
std::vector<double> stub_embedding(const std::string& speaker, int dim);

}  // namespace dialektpipe::stubs
