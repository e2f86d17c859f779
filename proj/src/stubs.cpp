#include "dialektpipe/stubs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/segmentation.hpp"
#include "dialektpipe/types.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::stubs {

namespace {

constexpr int kPayloadMagic = 23130;

std::uint64_t fnv64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t hex_prefix_to_u64(const std::string& hex) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 16 && i < hex.size(); ++i) {
        char c = hex[i];
        v = v * 16 + static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
    }
    return v;
}

nlohmann::json ok_response(const std::string& id, nlohmann::json result) {
    return {{"id", id}, {"ok", true}, {"result", std::move(result)}};
}

nlohmann::json fail_response(const std::string& id, const std::string& error) {
    return {{"id", id}, {"ok", false}, {"error", error}};
}

std::string require_string(const nlohmann::json& payload, const char* field) {
    auto it = payload.find(field);
    if (it == payload.end() || !it->is_string()) {
        throw BackendError(std::string("stub: request payload missing string field '") + field +
                           "'");
    }
    return it->get<std::string>();
}

// Deterministic pseudo-German for audio that carries no payload text.
std::string invented_transcript(std::uint64_t seed) {
    static const char* kWords[] = {"und",     "die",     "der",      "das",    "wir",
                                   "haben",   "heute",   "gestern",  "morgen", "politik",
                                   "wetter",  "bericht", "gespräch", "musik",  "nachrichten",
                                   "sport",   "leute",   "region",   "stadt",  "land"};
    constexpr std::size_t kWordCount = sizeof(kWords) / sizeof(kWords[0]);
    std::mt19937_64 rng(seed);
    std::size_t n = 4 + rng() % 8;
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) out.push_back(' ');
        out += kWords[rng() % kWordCount];
    }
    return out;
}

std::string sanitized_prefix(const std::string& dialect) {
    std::string prefix;
    for (char c : to_lower_ascii(dialect)) {
        if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) prefix.push_back(c);
    }
    return prefix.empty() ? "xx" : prefix;
}

}  // namespace

StubOptions parse_stub_options(const nlohmann::json& obj) {
    if (!obj.is_object()) throw ConfigError("stub options: expected a JSON object");
    StubOptions opt;
    for (const auto& [key, value] : obj.items()) {
        if (key == "seed") {
            opt.seed = value.get<std::uint64_t>();
        } else if (key == "fail_rate") {
            opt.fail_rate = value.get<double>();
            if (opt.fail_rate < 0 || opt.fail_rate > 1) {
                throw ConfigError("stub options: fail_rate must be in [0, 1]");
            }
        } else if (key == "fail_ids") {
            opt.fail_ids = value.get<std::vector<std::string>>();
        } else if (key == "delay_s") {
            opt.delay_s = value.get<double>();
        } else if (key == "embed_dim") {
            opt.embed_dim = value.get<int>();
            if (opt.embed_dim < 1) throw ConfigError("stub options: embed_dim must be >= 1");
        } else if (key == "sample_rate_hz") {
            opt.sample_rate_hz = value.get<int>();
            if (opt.sample_rate_hz < 1000) {
                throw ConfigError("stub options: sample_rate_hz must be >= 1000");
            }
        } else if (key == "exit_after") {
            opt.exit_after = value.get<long>();
        } else {
            throw ConfigError("stub options: unknown key '" + key + "'");
        }
    }
    return opt;
}

nlohmann::json stub_options_to_json(const StubOptions& opt) {
    nlohmann::json obj = {{"seed", opt.seed},
                          {"fail_rate", opt.fail_rate},
                          {"delay_s", opt.delay_s},
                          {"embed_dim", opt.embed_dim},
                          {"sample_rate_hz", opt.sample_rate_hz}};
    if (!opt.fail_ids.empty()) obj["fail_ids"] = opt.fail_ids;
    if (opt.exit_after >= 0) obj["exit_after"] = opt.exit_after;
    return obj;
}

void write_payload_wav(const std::filesystem::path& path, const nlohmann::json& metadata,
                       double duration_s, int sample_rate_hz, std::uint64_t seed) {
    std::string body = metadata.dump();
    if (body.size() > 32000) throw ConfigError("payload wav: metadata too large");

    std::size_t prelude = 2 + body.size() + 8;
    auto wanted = static_cast<std::size_t>(std::max<long long>(
        0, std::llround(duration_s * sample_rate_hz)));
    std::size_t total = std::max(wanted, prelude + 16);

    audio::AudioBuffer buf;
    buf.sample_rate_hz = sample_rate_hz;
    buf.samples.assign(total, 0.0f);
    auto put = [&buf](std::size_t i, int value) {
        buf.samples[i] = static_cast<float>(value) / 32768.0f;
    };
    put(0, kPayloadMagic);
    put(1, static_cast<int>(body.size()));
    for (std::size_t i = 0; i < body.size(); ++i) {
        put(2 + i, static_cast<unsigned char>(body[i]));
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = prelude; i < total; ++i) {
        int q = static_cast<int>(rng() % 6555) - 3277;  // ~0.1 amplitude noise
        put(i, q);
    }
    write_wav(buf, path);
}

std::optional<nlohmann::json> read_payload_metadata(const std::filesystem::path& path) {
    audio::AudioBuffer buf = audio::read_wav(path);
    auto sample_int = [&buf](std::size_t i) {
        return static_cast<int>(std::lround(static_cast<double>(buf.samples[i]) * 32768.0));
    };
    if (buf.samples.size() < 2 || sample_int(0) != kPayloadMagic) return std::nullopt;
    int length = sample_int(1);
    if (length < 0 || buf.samples.size() < 2 + static_cast<std::size_t>(length)) {
        return std::nullopt;
    }
    std::string body;
    body.reserve(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        int b = sample_int(2 + static_cast<std::size_t>(i));
        if (b < 0 || b > 255) return std::nullopt;
        body.push_back(static_cast<char>(b));
    }
    nlohmann::json meta = nlohmann::json::parse(body, nullptr, false);
    if (meta.is_discarded()) return std::nullopt;
    return meta;
}

bool injected_failure(const StubOptions& opt, const std::string& id) {
    if (std::find(opt.fail_ids.begin(), opt.fail_ids.end(), id) != opt.fail_ids.end()) {
        return true;
    }
    if (opt.fail_rate <= 0) return false;
    std::uint64_t h =
        hex_prefix_to_u64(sha256_hex(std::to_string(opt.seed) + "|" + id));
    return static_cast<double>(h) / 18446744073709551616.0 < opt.fail_rate;
}

std::vector<std::string> stub_phonemes(const std::string& dialect, const std::string& text,
                                       double duration_s, std::uint64_t seed) {
    static const char* kSyllables[] = {"a",  "e",  "i",  "o",  "u",  "ar",
                                       "en", "il", "om", "us", "et", "ig"};
    constexpr std::size_t kSyllableCount = sizeof(kSyllables) / sizeof(kSyllables[0]);
    std::string prefix = sanitized_prefix(dialect);
    std::mt19937_64 rng(seed ^ fnv64(dialect + "\x1f" + text));
    auto count = static_cast<std::size_t>(std::max(4ll, std::llround(duration_s * 3.0)));
    std::vector<std::string> tokens;
    tokens.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        tokens.push_back(prefix + "_" + kSyllables[rng() % kSyllableCount]);
    }
    return tokens;
}

std::vector<double> stub_embedding(const std::string& speaker, int dim) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(dim));
    for (int block = 0; static_cast<int>(v.size()) < dim; ++block) {
        std::string hex = sha256_hex("spk\x1f" + speaker + "\x1f" + std::to_string(block));
        for (std::size_t i = 0; i + 2 <= hex.size() && static_cast<int>(v.size()) < dim; i += 2) {
            int byte = std::stoi(hex.substr(i, 2), nullptr, 16);
            v.push_back(byte / 127.5 - 1.0);
        }
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        v[0] = 1.0;
        norm = 1.0;
    }
    for (double& x : v) x /= norm;
    return v;
}

namespace {

nlohmann::json handle_asr(const StubOptions& opt, const std::string& id,
                          const nlohmann::json& payload) {
    std::filesystem::path path = require_string(payload, "audio_path");
    try {
        auto meta = read_payload_metadata(path);
        if (meta && meta->contains("text")) {
            return ok_response(id, {{"text", (*meta)["text"].get<std::string>()}});
        }
        audio::AudioBuffer buf = audio::read_wav(path);
        if (buf.samples.empty()) return ok_response(id, {{"text", ""}});
        std::uint64_t h = hex_prefix_to_u64(sha256_file_hex(path)) ^ opt.seed;
        return ok_response(id, {{"text", invented_transcript(h)}});
    } catch (const DataError& e) {
        return fail_response(id, e.what());
    }
}

nlohmann::json handle_phonemizer(const StubOptions& opt, const std::string& id,
                                 const nlohmann::json& payload) {
    std::filesystem::path path = require_string(payload, "audio_path");
    try {
        audio::AudioBuffer buf = audio::read_wav(path);
        if (buf.samples.empty()) return ok_response(id, {{"phonemes", ""}});
        auto meta = read_payload_metadata(path);
        std::string dialect;
        std::string text;
        if (meta && meta->contains("dialect")) {
            dialect = (*meta)["dialect"].get<std::string>();
            text = meta->value("text", "");
        } else {
            // No embedded label: pick a stable pseudo-dialect per parent
            // directory so sliced segments of one episode agree.
            std::string parent = path.parent_path().filename().string();
            dialect = std::string(
                region_name(kDialectRegions[fnv64(parent) % kDialectRegions.size()]));
            text = sha256_file_hex(path).substr(0, 12);
        }
        std::vector<std::string> tokens =
            stub_phonemes(dialect, text, buf.duration_s(), opt.seed);
        std::string joined;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i > 0) joined.push_back(' ');
            joined += tokens[i];
        }
        return ok_response(id, {{"phonemes", joined}});
    } catch (const DataError& e) {
        return fail_response(id, e.what());
    }
}

nlohmann::json handle_tts(const StubOptions& opt, const std::string& id,
                          const nlohmann::json& payload) {
    std::string text = require_string(payload, "text");
    std::string dialect = require_string(payload, "dialect");
    std::filesystem::path output_path = require_string(payload, "output_path");
    auto refs_it = payload.find("reference_audio");
    if (refs_it == payload.end() || !refs_it->is_array() || refs_it->empty()) {
        throw BackendError("stub: tts request needs a non-empty reference_audio array");
    }
    try {
        std::string speaker;
        std::filesystem::path first_ref = refs_it->front().get<std::string>();
        auto meta = read_payload_metadata(first_ref);
        if (meta && meta->contains("speaker")) {
            speaker = (*meta)["speaker"].get<std::string>();
        } else {
            speaker = "anon-" + sha256_file_hex(first_ref).substr(0, 8);
        }
        double duration_s =
            2.0 + static_cast<double>(fnv64(text + "\x1f" + dialect) % 1501) / 1000.0;
        if (output_path.has_parent_path()) {
            std::filesystem::create_directories(output_path.parent_path());
        }
        write_payload_wav(output_path,
                          {{"text", text}, {"dialect", dialect}, {"speaker", speaker}},
                          duration_s, opt.sample_rate_hz, opt.seed ^ fnv64(id));
        return ok_response(
            id, {{"audio_path", output_path.string()}, {"duration_s", duration_s}});
    } catch (const DataError& e) {
        return fail_response(id, e.what());
    }
}

nlohmann::json handle_embedder(const StubOptions& opt, const std::string& id,
                               const nlohmann::json& payload) {
    std::filesystem::path path = require_string(payload, "audio_path");
    try {
        auto meta = read_payload_metadata(path);
        std::string speaker;
        if (meta && meta->contains("speaker")) {
            speaker = (*meta)["speaker"].get<std::string>();
        } else {
            speaker = "anon-" + sha256_file_hex(path).substr(0, 8);
        }
        return ok_response(id, {{"embedding", stub_embedding(speaker, opt.embed_dim)}});
    } catch (const DataError& e) {
        return fail_response(id, e.what());
    }
}

nlohmann::json handle_diarizer(const StubOptions& /*opt*/, const std::string& id,
                               const nlohmann::json& payload) {
    std::filesystem::path path = require_string(payload, "audio_path");
    try {
        auto meta = read_payload_metadata(path);
        std::string episode_id = payload.value("episode_id", std::string());
        if (episode_id.empty() && meta) episode_id = meta->value("episode_id", std::string());
        if (episode_id.empty()) episode_id = path.stem().string();

        std::vector<SpeakerTurn> turns;
        if (meta && meta->contains("turns")) {
            for (const auto& t : (*meta)["turns"]) {
                SpeakerTurn turn;
                turn.speaker_tag = t.at("speaker").get<std::string>();
                turn.start_ms = std::llround(t.at("start_s").get<double>() * 1000.0);
                turn.end_ms = std::llround(t.at("end_s").get<double>() * 1000.0);
                turns.push_back(std::move(turn));
            }
        } else {
            audio::AudioBuffer buf = audio::read_wav(path);
            for (auto [start_ms, end_ms] : audio::energy_vad(buf, {})) {
                turns.push_back({"spk1", start_ms, end_ms});
            }
        }
        return ok_response(id, {{"rttm", format_rttm(episode_id, turns)}});
    } catch (const DataError& e) {
        return fail_response(id, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail_response(id, std::string("bad turns metadata: ") + e.what());
    }
}

}  // namespace

nlohmann::json handle_request(const StubOptions& opt, const nlohmann::json& request) {
    if (!request.is_object() || !request.contains("id") || !request["id"].is_string() ||
        !request.contains("kind") || !request["kind"].is_string()) {
        throw BackendError("stub: request must be an object with string id and kind");
    }
    std::string id = request["id"].get<std::string>();
    std::string kind = request["kind"].get<std::string>();
    nlohmann::json payload = request.value("payload", nlohmann::json::object());

    if (opt.delay_s > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(opt.delay_s));
    }
    if (injected_failure(opt, id)) return fail_response(id, "injected failure");

    if (kind == "asr") return handle_asr(opt, id, payload);
    if (kind == "phonemizer") return handle_phonemizer(opt, id, payload);
    if (kind == "tts") return handle_tts(opt, id, payload);
    if (kind == "embedder") return handle_embedder(opt, id, payload);
    if (kind == "diarizer") return handle_diarizer(opt, id, payload);
    throw BackendError("stub: unknown backend kind '" + kind + "'");
}

}  // namespace dialektpipe::stubs
