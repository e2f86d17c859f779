#include "dialektpipe/backends.hpp"

#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fstream>
#include <future>
#include <set>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/segmentation.hpp"
#include "dialektpipe/stubs.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::backends {

std::string_view kind_name(BackendKind kind) {
    switch (kind) {
        case BackendKind::asr: return "asr";
        case BackendKind::diarizer: return "diarizer";
        case BackendKind::phonemizer: return "phonemizer";
        case BackendKind::tts: return "tts";
        case BackendKind::embedder: return "embedder";
    }
    return "?";
}

std::optional<BackendKind> parse_kind(std::string_view name) {
    for (BackendKind k : {BackendKind::asr, BackendKind::diarizer, BackendKind::phonemizer,
                          BackendKind::tts, BackendKind::embedder}) {
        if (name == kind_name(k)) return k;
    }
    return std::nullopt;
}

void BackendSpec::validate() const {
    if (!(timeout_s > 0)) throw ConfigError("backend spec: timeout_s must be > 0");
    if (max_parallel < 1) throw ConfigError("backend spec: max_parallel must be >= 1");
    if (transport != Transport::stub && endpoint_or_cmd.empty()) {
        throw ConfigError("backend spec: endpoint or command must not be empty");
    }
}

const BackendSpec& BackendSet::require(BackendKind kind) const {
    auto it = specs.find(kind);
    if (it == specs.end()) {
        throw ConfigError("no backend configured for kind '" + std::string(kind_name(kind)) +
                          "'");
    }
    return it->second;
}

namespace {

// Validates one {id, ok, result|error} response object against the request id.
BackendResponse parse_response(const nlohmann::json& resp, const std::string& expected_id) {
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_string()) {
        throw BackendError("backend response is not an object with a string id");
    }
    if (resp["id"].get<std::string>() != expected_id) {
        throw BackendError("backend response id '" + resp["id"].get<std::string>() +
                           "' does not match request id '" + expected_id + "'");
    }
    if (!resp.contains("ok") || !resp["ok"].is_boolean()) {
        throw BackendError("backend response missing boolean 'ok'");
    }
    BackendResponse out;
    out.ok = resp["ok"].get<bool>();
    if (out.ok) {
        if (!resp.contains("result")) throw BackendError("ok backend response missing 'result'");
        out.result = resp["result"];
    } else {
        out.error = resp.value("error", "unspecified backend error");
    }
    return out;
}

nlohmann::json make_request(const std::string& id, BackendKind kind,
                            const nlohmann::json& payload) {
    return {{"id", id}, {"kind", std::string(kind_name(kind))}, {"payload", payload}};
}

// ---------------------------------------------------------------------------

class StubBackend : public Backend {
public:
    explicit StubBackend(BackendSpec spec) : spec_(std::move(spec)) {
        nlohmann::json obj = nlohmann::json::object();
        if (!spec_.endpoint_or_cmd.empty()) {
            obj = nlohmann::json::parse(spec_.endpoint_or_cmd, nullptr, false);
            if (obj.is_discarded()) {
                throw ConfigError("stub backend options are not valid JSON");
            }
        }
        options_ = stubs::parse_stub_options(obj);
    }

    BackendResponse request(const std::string& id, const nlohmann::json& payload) override {
        nlohmann::json resp =
            stubs::handle_request(options_, make_request(id, spec_.kind, payload));
        return parse_response(resp, id);
    }

    const BackendSpec& spec() const override { return spec_; }

private:
    BackendSpec spec_;
    stubs::StubOptions options_;
};

// ---------------------------------------------------------------------------

std::once_flag g_sigpipe_once;

class SubprocessBackend : public Backend {
public:
    explicit SubprocessBackend(BackendSpec spec) : spec_(std::move(spec)) {
        std::call_once(g_sigpipe_once, [] { std::signal(SIGPIPE, SIG_IGN); });
        spawn();
        reader_ = std::thread([this] { reader_loop(); });
    }

    ~SubprocessBackend() override {
        stopping_ = true;
        if (write_fd_ >= 0) {
            ::close(write_fd_);
            write_fd_ = -1;
        }
        if (pid_ > 0) {
            int status = 0;
            bool exited = false;
            for (int i = 0; i < 20; ++i) {
                if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                    exited = true;
                    break;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
            }
            if (!exited) {
                ::kill(pid_, SIGKILL);
                ::waitpid(pid_, &status, 0);
            }
        }
        if (reader_.joinable()) reader_.join();
        if (read_fd_ >= 0) ::close(read_fd_);
    }

    BackendResponse request(const std::string& id, const nlohmann::json& payload) override {
        std::future<nlohmann::json> future;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            if (broken_) throw BackendError(broken_reason_);
            auto [it, inserted] = pending_.emplace(id, std::promise<nlohmann::json>());
            if (!inserted) throw BackendError("duplicate in-flight request id '" + id + "'");
            future = it->second.get_future();
        }

        std::string line = make_request(id, spec_.kind, payload).dump();
        line.push_back('\n');
        {
            std::lock_guard<std::mutex> lock(write_mutex_);
            const char* p = line.data();
            std::size_t left = line.size();
            while (left > 0) {
                ssize_t n = ::write(write_fd_, p, left);
                if (n < 0) {
                    if (errno == EINTR) continue;
                    fail_all_pending(std::string("cannot write to backend process: ") +
                                     std::strerror(errno));
                    break;
                }
                p += n;
                left -= static_cast<std::size_t>(n);
            }
        }

        auto timeout = std::chrono::duration<double>(spec_.timeout_s);
        if (future.wait_for(timeout) == std::future_status::timeout) {
            std::unique_lock<std::mutex> lock(mutex_);
            auto it = pending_.find(id);
            if (it != pending_.end()) {
                pending_.erase(it);
                abandoned_.insert(id);
                BackendResponse out;
                out.ok = false;
                out.error = "timeout after " + format_fixed(spec_.timeout_s, 1) + "s";
                return out;
            }
            // The response landed between the timeout and the lock.
        }
        return parse_response(future.get(), id);
    }

    const BackendSpec& spec() const override { return spec_; }

private:
    void spawn() {
        int to_child[2];
        int from_child[2];
        if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) {
            throw BackendError(std::string("cannot create backend pipes: ") +
                               std::strerror(errno));
        }
        pid_ = ::fork();
        if (pid_ < 0) throw BackendError(std::string("cannot fork: ") + std::strerror(errno));
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", spec_.endpoint_or_cmd.c_str(),
                    static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        // Keep these out of later children so their EOFs stay reliable.
        ::fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
        ::fcntl(read_fd_, F_SETFD, FD_CLOEXEC);
    }

    void reader_loop() {
        std::string acc;
        char buf[65536];
        for (;;) {
            ssize_t n = ::read(read_fd_, buf, sizeof buf);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail_all_pending(std::string("cannot read from backend process: ") +
                                 std::strerror(errno));
                return;
            }
            if (n == 0) {
                if (!stopping_) fail_all_pending("backend process closed its output stream");
                return;
            }
            acc.append(buf, static_cast<std::size_t>(n));
            std::size_t start = 0;
            for (;;) {
                std::size_t nl = acc.find('\n', start);
                if (nl == std::string::npos) break;
                std::string line = acc.substr(start, nl - start);
                start = nl + 1;
                if (trim(line).empty()) continue;
                if (!dispatch_line(line)) return;
            }
            acc.erase(0, start);
        }
    }

    // Returns false when the stream is now broken.
    bool dispatch_line(const std::string& line) {
        nlohmann::json resp = nlohmann::json::parse(line, nullptr, false);
        if (resp.is_discarded() || !resp.is_object() || !resp.contains("id") ||
            !resp["id"].is_string()) {
            fail_all_pending("malformed backend response line: " + line.substr(0, 200));
            return false;
        }
        std::string id = resp["id"].get<std::string>();
        std::promise<nlohmann::json> promise;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = pending_.find(id);
            if (it == pending_.end()) {
                if (abandoned_.erase(id) > 0) return true;  // late reply, already timed out
                fail_all_pending("backend response for unknown request id '" + id + "'");
                return false;
            }
            promise = std::move(it->second);
            pending_.erase(it);
        }
        promise.set_value(std::move(resp));
        return true;
    }

    void fail_all_pending(const std::string& reason) {
        std::vector<std::promise<nlohmann::json>> victims;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            broken_ = true;
            broken_reason_ = reason;
            for (auto& [id, promise] : pending_) victims.push_back(std::move(promise));
            pending_.clear();
        }
        for (auto& promise : victims) {
            promise.set_exception(std::make_exception_ptr(BackendError(reason)));
        }
    }

    BackendSpec spec_;
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::thread reader_;
    std::atomic<bool> stopping_{false};

    std::mutex mutex_;  // guards pending_, abandoned_, broken_
    std::map<std::string, std::promise<nlohmann::json>> pending_;
    std::set<std::string> abandoned_;
    bool broken_ = false;
    std::string broken_reason_;

    std::mutex write_mutex_;
};

// ---------------------------------------------------------------------------

class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendSpec spec) : spec_(std::move(spec)) {
        auto url = parse_http_url(spec_.endpoint_or_cmd);
        if (!url) {
            throw ConfigError("http backend endpoint is not a valid http:// URL: " +
                              spec_.endpoint_or_cmd);
        }
        host_ = url->host;
        port_ = url->port;
        path_ = url->path;
    }

    BackendResponse request(const std::string& id, const nlohmann::json& payload) override {
        httplib::Client client(host_, port_);
        auto timeout =
            std::chrono::milliseconds(static_cast<long long>(spec_.timeout_s * 1000));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        auto res = client.Post(path_, make_request(id, spec_.kind, payload).dump(),
                               "application/json");
        if (!res) {
            if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write) {
                BackendResponse out;
                out.ok = false;
                out.error = "timeout after " + format_fixed(spec_.timeout_s, 1) + "s";
                return out;
            }
            throw BackendError("http backend request failed: " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw BackendError("http backend returned status " + std::to_string(res->status));
        }
        nlohmann::json resp = nlohmann::json::parse(res->body, nullptr, false);
        if (resp.is_discarded()) throw BackendError("http backend returned invalid JSON");
        return parse_response(resp, id);
    }

    const BackendSpec& spec() const override { return spec_; }

private:
    BackendSpec spec_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

}  // namespace

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
    spec.validate();
    switch (spec.transport) {
        case Transport::stub: return std::make_unique<StubBackend>(spec);
        case Transport::subprocess: return std::make_unique<SubprocessBackend>(spec);
        case Transport::http: return std::make_unique<HttpBackend>(spec);
    }
    throw ConfigError("unknown backend transport");
}

BackendSet load_backend_conf(const std::filesystem::path& path) {
    nlohmann::json conf = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (conf.is_discarded() || !conf.is_object()) {
        throw ConfigError("backend conf " + path.string() + " is not a JSON object");
    }
    BackendSet set;
    for (const auto& [key, entry] : conf.items()) {
        auto kind = parse_kind(key);
        if (!kind) throw ConfigError("backend conf: unknown backend kind '" + key + "'");
        if (!entry.is_object()) {
            throw ConfigError("backend conf: entry for '" + key + "' must be an object");
        }
        BackendSpec spec;
        spec.kind = *kind;
        bool have_transport = false;
        for (const auto& [field, value] : entry.items()) {
            if (field == "transport") {
                std::string t = value.get<std::string>();
                if (t == "subprocess") {
                    spec.transport = Transport::subprocess;
                } else if (t == "http") {
                    spec.transport = Transport::http;
                } else if (t == "stub") {
                    spec.transport = Transport::stub;
                } else {
                    throw ConfigError("backend conf: unknown transport '" + t + "'");
                }
                have_transport = true;
            } else if (field == "cmd" || field == "url") {
                spec.endpoint_or_cmd = value.get<std::string>();
            } else if (field == "options") {
                spec.endpoint_or_cmd = value.dump();
            } else if (field == "timeout_s") {
                spec.timeout_s = value.get<double>();
            } else if (field == "max_parallel") {
                spec.max_parallel = value.get<int>();
            } else {
                throw ConfigError("backend conf: unknown field '" + field + "' for '" + key +
                                  "'");
            }
        }
        if (!have_transport) {
            throw ConfigError("backend conf: entry for '" + key + "' needs a transport");
        }
        spec.validate();
        set.specs[*kind] = std::move(spec);
    }
    return set;
}

BackendSet default_backend_set(std::uint64_t seed) {
    BackendSet set;
    for (BackendKind k : {BackendKind::asr, BackendKind::diarizer, BackendKind::phonemizer,
                          BackendKind::tts, BackendKind::embedder}) {
        BackendSpec spec;
        spec.kind = k;
        spec.transport = Transport::stub;
        spec.endpoint_or_cmd = nlohmann::json{{"seed", seed}}.dump();
        spec.timeout_s = 60.0;
        spec.max_parallel = 4;
        set.specs[k] = std::move(spec);
    }
    return set;
}

BackendSet resolve_backend_set() {
    if (auto conf = env_var("DIALEKTPIPE_BACKEND_CONF")) return load_backend_conf(*conf);
    return default_backend_set();
}

// ---------------------------------------------------------------------------
// Typed operations

namespace {

void require_kind(const Backend& backend, BackendKind kind, const char* op) {
    if (backend.spec().kind != kind) {
        throw ConfigError(std::string(op) + ": backend kind is '" +
                          std::string(kind_name(backend.spec().kind)) + "', expected '" +
                          std::string(kind_name(kind)) + "'");
    }
}

std::string require_result_string(const nlohmann::json& result, const char* field,
                                  const char* op) {
    auto it = result.find(field);
    if (it == result.end() || !it->is_string()) {
        throw BackendError(std::string(op) + ": backend result missing string '" + field + "'");
    }
    return it->get<std::string>();
}

}  // namespace

TranscriptResult transcribe(Backend& backend, const std::string& segment_id,
                            const std::filesystem::path& audio_path) {
    require_kind(backend, BackendKind::asr, "transcribe");
    TranscriptResult out;
    out.segment_id = segment_id;
    BackendResponse resp = backend.request(segment_id, {{"audio_path", audio_path.string()}});
    if (!resp.ok) {
        out.failed = true;
        out.error = resp.error;
        return out;
    }
    std::string text = require_result_string(resp.result, "text", "transcribe");
    if (trim(text).empty()) {
        out.failed = true;
        out.error = "backend produced an empty transcript";
    } else {
        out.text = std::move(text);
        out.failed = false;
    }
    return out;
}

PhonemeResult phonemize(Backend& backend, const std::string& id,
                        const std::filesystem::path& audio_path) {
    require_kind(backend, BackendKind::phonemizer, "phonemize");
    PhonemeResult out;
    out.id = id;
    BackendResponse resp = backend.request(id, {{"audio_path", audio_path.string()}});
    if (!resp.ok) {
        out.failed = true;
        out.error = resp.error;
        return out;
    }
    out.phonemes = require_result_string(resp.result, "phonemes", "phonemize");
    out.failed = trim(out.phonemes).empty();
    if (out.failed) out.error = "backend produced no phonemes";
    return out;
}

SynthesisResult synthesize(Backend& backend, const std::string& id, const std::string& text,
                           const std::vector<std::filesystem::path>& reference_audio,
                           DialectRegion dialect, const std::filesystem::path& output_path) {
    require_kind(backend, BackendKind::tts, "synthesize");
    if (reference_audio.empty() || reference_audio.size() > 5) {
        throw ConfigError("synthesize: need 1 to 5 reference clips, got " +
                          std::to_string(reference_audio.size()));
    }
    SynthesisResult out;
    out.id = id;
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& p : reference_audio) refs.push_back(p.string());
    BackendResponse resp = backend.request(id, {{"text", text},
                                                {"dialect", std::string(region_name(dialect))},
                                                {"reference_audio", refs},
                                                {"output_path", output_path.string()}});
    if (!resp.ok) {
        out.failed = true;
        out.error = resp.error;
        return out;
    }
    out.audio_path = require_result_string(resp.result, "audio_path", "synthesize");
    try {
        audio::AudioBuffer buf = audio::read_wav(out.audio_path);
        if (buf.samples.empty()) {
            out.failed = true;
            out.error = "backend produced empty audio";
            return out;
        }
        out.duration_s = buf.duration_s();
    } catch (const DataError& e) {
        out.failed = true;
        out.error = e.what();
        return out;
    }
    out.failed = false;
    return out;
}

EmbeddingResult embed_speaker(Backend& backend, const std::string& id,
                              const std::filesystem::path& audio_path) {
    require_kind(backend, BackendKind::embedder, "embed_speaker");
    EmbeddingResult out;
    out.id = id;
    BackendResponse resp = backend.request(id, {{"audio_path", audio_path.string()}});
    if (!resp.ok) {
        out.failed = true;
        out.error = resp.error;
        return out;
    }
    auto it = resp.result.find("embedding");
    if (it == resp.result.end() || !it->is_array() || it->empty()) {
        throw BackendError("embed_speaker: backend result missing non-empty 'embedding'");
    }
    for (const auto& x : *it) {
        if (!x.is_number()) throw BackendError("embed_speaker: non-numeric embedding entry");
        double v = x.get<double>();
        if (!std::isfinite(v)) throw BackendError("embed_speaker: non-finite embedding entry");
        out.embedding.push_back(v);
    }
    out.failed = false;
    return out;
}

DiarizeResult diarize(Backend& backend, const std::string& id,
                      const std::filesystem::path& audio_path, int min_speakers,
                      int max_speakers) {
    require_kind(backend, BackendKind::diarizer, "diarize");
    DiarizeResult out;
    out.id = id;
    BackendResponse resp = backend.request(id, {{"audio_path", audio_path.string()},
                                                {"episode_id", id},
                                                {"min_speakers", min_speakers},
                                                {"max_speakers", max_speakers}});
    if (!resp.ok) {
        out.failed = true;
        out.error = resp.error;
        return out;
    }
    out.rttm = require_result_string(resp.result, "rttm", "diarize");
    try {
        parse_rttm(out.rttm);
    } catch (const DataError& e) {
        throw BackendError(std::string("diarize: backend produced invalid RTTM: ") + e.what());
    }
    out.failed = false;
    return out;
}

// ---------------------------------------------------------------------------
// Completion log + batch runner

CompletionLog::CompletionLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        nlohmann::json entry = nlohmann::json::parse(lines[i], nullptr, false);
        bool bad = entry.is_discarded() || !entry.is_object() || !entry.contains("id") ||
                   !entry["id"].is_string() || !entry.contains("result");
        if (bad) {
            if (i + 1 == lines.size()) continue;  // torn final write from a crash
            throw DataError("completion log " + path_.string() + " line " +
                            std::to_string(i + 1) + " is corrupt");
        }
        entries_[entry["id"].get<std::string>()] = entry["result"];
    }
}

bool CompletionLog::contains(const std::string& id) const { return entries_.count(id) > 0; }

const nlohmann::json* CompletionLog::find(const std::string& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

void CompletionLog::append(const std::string& id, const nlohmann::json& result) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw DataError("cannot append to completion log " + path_.string());
    out << nlohmann::json{{"id", id}, {"result", result}}.dump() << '\n';
    out.flush();
    if (!out) throw DataError("write to completion log " + path_.string() + " failed");
    entries_[id] = result;
}

std::vector<nlohmann::json> run_batch(
    const std::vector<std::string>& ids,
    const std::function<nlohmann::json(std::size_t index, const std::string& id)>& fn,
    int max_parallel, CompletionLog* log) {
    if (max_parallel < 1) throw ConfigError("run_batch: max_parallel must be >= 1");
    {
        std::set<std::string> seen;
        for (const std::string& id : ids) {
            if (!seen.insert(id).second) throw DataError("run_batch: duplicate id '" + id + "'");
        }
    }

    std::vector<nlohmann::json> results(ids.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const nlohmann::json* done = log ? log->find(ids[i]) : nullptr;
        if (done) {
            results[i] = *done;
        } else {
            todo.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&] {
        while (!stop.load()) {
            std::size_t t = next.fetch_add(1);
            if (t >= todo.size()) break;
            std::size_t i = todo[t];
            try {
                nlohmann::json result = fn(i, ids[i]);
                if (log) log->append(ids[i], result);
                results[i] = std::move(result);
            } catch (...) {
                {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
                stop = true;
                break;
            }
        }
    };

    std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(max_parallel),
                                                  todo.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace dialektpipe::backends
