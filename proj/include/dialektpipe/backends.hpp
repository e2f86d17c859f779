#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialektpipe/types.hpp"

namespace dialektpipe::backends {

enum class BackendKind { asr, diarizer, phonemizer, tts, embedder };

std::string_view kind_name(BackendKind kind);
std::optional<BackendKind> parse_kind(std::string_view name);

// `stub` runs the deterministic built-in models in-process; the other two
// speak the same newline-delimited JSON protocol over a child process's
// stdio or HTTP POST.
enum class Transport { subprocess, http, stub };

struct BackendSpec {
    BackendKind kind = BackendKind::asr;
    Transport transport = Transport::stub;
    // Command line (subprocess), URL (http), or JSON options object (stub).
    std::string endpoint_or_cmd;
    double timeout_s = 30.0;
    int max_parallel = 1;

    void validate() const;  // throws ConfigError
};

// One request's outcome. Per-item failures (ok == false) are data and leave
// the backend usable; protocol violations throw BackendError instead.
struct BackendResponse {
    bool ok = false;
    nlohmann::json result;
    std::string error;
};

class Backend {
public:
    virtual ~Backend() = default;

    // Sends {id, kind, payload} and waits for the matching {id, ok, ...}
    // response. Timeouts come back as ok == false.
    virtual BackendResponse request(const std::string& id, const nlohmann::json& payload) = 0;
    virtual const BackendSpec& spec() const = 0;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

// Backend specs per kind, usually loaded from the file that
// DIALEKTPIPE_BACKEND_CONF points at.
struct BackendSet {
    std::map<BackendKind, BackendSpec> specs;

    const BackendSpec& require(BackendKind kind) const;  // throws ConfigError
};

BackendSet load_backend_conf(const std::filesystem::path& path);
// All five kinds as in-process stubs with the given seed.
BackendSet default_backend_set(std::uint64_t seed = 1);
// DIALEKTPIPE_BACKEND_CONF if set, otherwise the stub defaults.
BackendSet resolve_backend_set();

// ---------------------------------------------------------------------------
// Typed operations over the wire contract

struct TranscriptResult {
    std::string segment_id;
    std::optional<std::string> text;
    bool failed = true;
    std::string error;
};

struct PhonemeResult {
    std::string id;
    std::string phonemes;
    bool failed = true;
    std::string error;
};

struct SynthesisResult {
    std::string id;
    std::filesystem::path audio_path;
    double duration_s = 0;
    bool failed = true;
    std::string error;
};

struct EmbeddingResult {
    std::string id;
    std::vector<double> embedding;
    bool failed = true;
    std::string error;
};

struct DiarizeResult {
    std::string id;
    std::string rttm;
    bool failed = true;
    std::string error;
};

TranscriptResult transcribe(Backend& backend, const std::string& segment_id,
                            const std::filesystem::path& audio_path);

PhonemeResult phonemize(Backend& backend, const std::string& id,
                        const std::filesystem::path& audio_path);

// reference_audio must hold 1..5 clips. The backend writes output_path.
SynthesisResult synthesize(Backend& backend, const std::string& id, const std::string& text,
                           const std::vector<std::filesystem::path>& reference_audio,
                           DialectRegion dialect, const std::filesystem::path& output_path);

EmbeddingResult embed_speaker(Backend& backend, const std::string& id,
                              const std::filesystem::path& audio_path);

// Returns RTTM text, validated before it is handed back.
DiarizeResult diarize(Backend& backend, const std::string& id,
                      const std::filesystem::path& audio_path, int min_speakers = 2,
                      int max_speakers = 6);

// ---------------------------------------------------------------------------
// Batch running with restartable progress

// Append-only id -> result records, one JSON object per line, flushed per
// append. A partial final line (crash mid-write) is dropped on load.
class CompletionLog {
public:
    explicit CompletionLog(std::filesystem::path path);

    bool contains(const std::string& id) const;
    const nlohmann::json* find(const std::string& id) const;
    void append(const std::string& id, const nlohmann::json& result);
    std::size_t size() const { return entries_.size(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::map<std::string, nlohmann::json> entries_;
    std::mutex mutex_;
};

// Runs fn over all ids not already in the log, with up to max_parallel
// invocations in flight, and returns results in input order. Completed items
// are replayed from the log without calling fn. fn exceptions abort the
// batch; per-item failures must be encoded in the returned JSON.
std::vector<nlohmann::json> run_batch(
    const std::vector<std::string>& ids,
    const std::function<nlohmann::json(std::size_t index, const std::string& id)>& fn,
    int max_parallel, CompletionLog* log = nullptr);

}  // namespace dialektpipe::backends
