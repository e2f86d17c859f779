#include "dialektpipe/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::pipeline {

using nlohmann::json;

bool is_stage_name(const std::string& name) {
    for (const char* stage : kStages) {
        if (name == stage) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Configuration

std::string hash_config_json(const std::string& canonical_json) {
    return sha256_hex(canonical_json).substr(0, 16);
}

namespace {

std::filesystem::path resolve_against(const std::filesystem::path& base,
                                      const std::filesystem::path& p) {
    return p.is_absolute() ? p : base / p;
}

double require_number(const json& root, const char* key, double fallback) {
    if (!root.contains(key)) return fallback;
    if (!root[key].is_number()) {
        throw ConfigError(std::string("config: '") + key + "' must be a number");
    }
    return root[key].get<double>();
}

std::string require_string(const json& root, const char* key, const std::string& fallback) {
    if (!root.contains(key)) return fallback;
    if (!root[key].is_string()) {
        throw ConfigError(std::string("config: '") + key + "' must be a string");
    }
    return root[key].get<std::string>();
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    json root = json::parse(read_text_file(path), nullptr, false);
    if (root.is_discarded() || !root.is_object()) {
        throw ConfigError("config file " + path.string() + " is not a JSON object");
    }

    static const std::vector<std::string> known = {
        "workspace",    "catalog",   "overrides",  "backends",         "did_model",
        "seed",         "max_parallel", "include_excluded", "stop_after", "segmentation",
        "http_timeout_s", "auth",
    };
    for (const auto& [key, value] : root.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }

    std::filesystem::path base = path.has_parent_path() ? path.parent_path()
                                                        : std::filesystem::path(".");
    PipelineConfig cfg;

    std::string workspace = require_string(root, "workspace", "");
    if (workspace.empty()) workspace = env_var("DIALEKTPIPE_WORKSPACE").value_or("");
    if (workspace.empty()) {
        throw ConfigError("config: no workspace given and DIALEKTPIPE_WORKSPACE is unset");
    }
    cfg.workspace = resolve_against(base, workspace);

    cfg.catalog = require_string(root, "catalog", "");
    if (!cfg.catalog.empty() && cfg.catalog.rfind("http://", 0) != 0) {
        cfg.catalog = resolve_against(base, cfg.catalog).string();
    }
    std::string overrides = require_string(root, "overrides", "");
    if (!overrides.empty()) cfg.overrides = resolve_against(base, overrides);
    std::string backends = require_string(root, "backends", "");
    if (!backends.empty()) cfg.backend_conf = resolve_against(base, backends);
    std::string did_model = require_string(root, "did_model", "");
    if (!did_model.empty()) cfg.did_model = resolve_against(base, did_model);

    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer()) {
            throw ConfigError("config: 'seed' must be an integer");
        }
        cfg.seed = root["seed"].get<std::uint64_t>();
    }
    cfg.max_parallel = static_cast<int>(require_number(root, "max_parallel", 4));
    if (cfg.max_parallel < 1) throw ConfigError("config: 'max_parallel' must be >= 1");
    if (root.contains("include_excluded")) {
        if (!root["include_excluded"].is_boolean()) {
            throw ConfigError("config: 'include_excluded' must be a boolean");
        }
        cfg.include_excluded = root["include_excluded"].get<bool>();
    }
    cfg.stop_after = require_string(root, "stop_after", "");
    if (!cfg.stop_after.empty() && !is_stage_name(cfg.stop_after)) {
        throw ConfigError("config: 'stop_after' names unknown stage '" + cfg.stop_after + "'");
    }
    if (root.contains("segmentation")) {
        const json& seg = root["segmentation"];
        if (!seg.is_object()) throw ConfigError("config: 'segmentation' must be an object");
        for (const auto& [key, value] : seg.items()) {
            if (key != "min_s" && key != "max_s" && key != "min_tail_s" &&
                key != "audio_tolerance_s") {
                throw ConfigError("config: unknown segmentation key '" + key + "'");
            }
        }
        cfg.segmentation.min_ms =
            seconds_to_ms(require_number(seg, "min_s", ms_to_seconds(kMinSegmentMs)));
        cfg.segmentation.max_ms =
            seconds_to_ms(require_number(seg, "max_s", ms_to_seconds(kMaxSegmentMs)));
        cfg.segmentation.min_tail_ms =
            seconds_to_ms(require_number(seg, "min_tail_s", ms_to_seconds(kMinSegmentMs)));
        cfg.segmentation.audio_tolerance_ms =
            seconds_to_ms(require_number(seg, "audio_tolerance_s", 0.5));
        if (cfg.segmentation.min_ms <= 0 || cfg.segmentation.max_ms < cfg.segmentation.min_ms) {
            throw ConfigError("config: segmentation bounds must satisfy 0 < min_s <= max_s");
        }
    }
    cfg.http_timeout_s = require_number(root, "http_timeout_s", 30.0);
    if (cfg.http_timeout_s <= 0) throw ConfigError("config: 'http_timeout_s' must be > 0");
    cfg.auth = require_string(root, "auth", "");

    cfg.config_hash = hash_config_json(root.dump());
    return cfg;
}

// ---------------------------------------------------------------------------
// Workspace lock

namespace {

// O_EXCL lock file holding the owner pid. A lock whose process is gone is
// stale and gets broken, so a killed run never wedges the workspace.
class WorkspaceLock {
public:
    explicit WorkspaceLock(std::filesystem::path path) : path_(std::move(path)) {
        for (int attempt = 0; attempt < 2; ++attempt) {
            int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                std::string pid = std::to_string(::getpid()) + "\n";
                (void)!::write(fd, pid.data(), pid.size());
                ::close(fd);
                held_ = true;
                return;
            }
            if (errno != EEXIST) {
                throw ConfigError("cannot create lock file " + path_.string() + ": " +
                                  std::strerror(errno));
            }
            if (!owner_alive()) {
                std::error_code ec;
                std::filesystem::remove(path_, ec);
                continue;  // retry the O_EXCL create
            }
            throw ConfigError("workspace is locked by a running pipeline (lock file " +
                              path_.string() + ")");
        }
        throw ConfigError("could not acquire lock file " + path_.string());
    }

    ~WorkspaceLock() {
        if (held_) {
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    bool owner_alive() const {
        std::string content;
        try {
            content = read_text_file(path_);
        } catch (const DataError&) {
            return false;  // vanished or unreadable: treat as stale
        }
        char* end = nullptr;
        long pid = std::strtol(content.c_str(), &end, 10);
        if (end == content.c_str() || pid <= 0) return false;  // garbage: stale
        if (::kill(static_cast<pid_t>(pid), 0) == 0) return true;
        return errno != ESRCH;  // EPERM etc.: somebody owns that pid
    }

    std::filesystem::path path_;
    bool held_ = false;
};

}  // namespace

// ---------------------------------------------------------------------------
// Stages

void run_diarize_stage(const std::vector<Episode>& episodes, backends::Backend& diarizer,
                       const std::filesystem::path& out_dir, int max_parallel,
                       const std::filesystem::path& log_path) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> ids;
    for (const Episode& ep : episodes) ids.push_back(ep.episode_id);

    backends::CompletionLog log(log_path);
    auto results = backends::run_batch(
        ids,
        [&](std::size_t i, const std::string& id) {
            auto res = backends::diarize(diarizer, id, episodes[i].audio_path);
            return json{{"rttm", res.rttm}, {"failed", res.failed}, {"error", res.error}};
        },
        max_parallel, &log);

    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const std::string& id = episodes[i].episode_id;
        if (results[i].value("failed", true)) {
            atomic_write_text_file(out_dir / (id + ".failed"),
                                   results[i].value("error", "diarization failed") + "\n");
        } else {
            atomic_write_text_file(out_dir / (id + ".rttm"), results[i].value("rttm", ""));
        }
    }
}

Manifest run_segment_stage(const std::vector<Episode>& episodes,
                           const std::filesystem::path& rttm_dir,
                           const std::filesystem::path& out_dir,
                           const SegmentationConfig& config) {
    std::filesystem::create_directories(out_dir);
    Manifest manifest;
    for (const Episode& ep : episodes) {
        std::filesystem::path rttm_path = rttm_dir / (ep.episode_id + ".rttm");
        if (!std::filesystem::exists(rttm_path)) {
            if (std::filesystem::exists(rttm_dir / (ep.episode_id + ".failed"))) {
                continue;  // diarization failed; the episode contributes nothing
            }
            throw DataError("no diarization output for episode '" + ep.episode_id +
                            "' under " + rttm_dir.string());
        }
        DiarizationResult diar;
        diar.episode_id = ep.episode_id;
        diar.turns = parse_rttm(read_text_file(rttm_path));
        audio::AudioBuffer buf = audio::read_wav(ep.audio_path);
        auto segments = segment_episode(ep, diar, buf, out_dir, config);
        for (Segment& s : segments) manifest.segments.push_back(std::move(s));
    }
    manifest.sort_records();
    return manifest;
}

Manifest run_transcribe_stage(const Manifest& segments, const std::filesystem::path& audio_base,
                              backends::Backend& asr, int max_parallel,
                              const std::filesystem::path& log_path) {
    std::vector<std::string> ids;
    for (const Segment& s : segments.segments) ids.push_back(s.segment_id);

    backends::CompletionLog log(log_path);
    auto results = backends::run_batch(
        ids,
        [&](std::size_t i, const std::string& id) {
            auto res =
                backends::transcribe(asr, id, audio_base / segments.segments[i].audio_path);
            return json{{"text", res.text.value_or("")},
                        {"failed", res.failed},
                        {"error", res.error}};
        },
        max_parallel, &log);

    Manifest out;
    out.header = segments.header;
    for (std::size_t i = 0; i < segments.segments.size(); ++i) {
        if (results[i].value("failed", true)) continue;  // removed from the corpus
        Segment s = segments.segments[i];
        s.transcript = results[i].value("text", "");
        out.segments.push_back(std::move(s));
    }
    out.sort_records();
    return out;
}

Manifest run_did_stage(const Manifest& transcribed, const std::filesystem::path& audio_base,
                       const did::NBModel& model, backends::Backend& phonemizer,
                       int max_parallel, const std::filesystem::path& log_path) {
    std::vector<std::string> ids;
    for (const Segment& s : transcribed.segments) ids.push_back(s.segment_id);

    backends::CompletionLog log(log_path);
    auto results = backends::run_batch(
        ids,
        [&](std::size_t i, const std::string& id) {
            auto res = backends::phonemize(phonemizer, id,
                                           audio_base / transcribed.segments[i].audio_path);
            return json{{"phonemes", res.phonemes},
                        {"failed", res.failed},
                        {"error", res.error}};
        },
        max_parallel, &log);

    // One classification per (episode, speaker) over the concatenated
    // phoneme streams of its segments.
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < transcribed.segments.size(); ++i) {
        const Segment& s = transcribed.segments[i];
        groups[{s.episode_id, s.speaker_tag}].push_back(i);
    }

    std::map<std::pair<std::string, std::string>, DialectRegion> group_region;
    for (const auto& [key, members] : groups) {
        std::vector<std::vector<std::string>> seqs;
        std::vector<double> durations;
        for (std::size_t i : members) {
            if (results[i].value("failed", true)) continue;
            seqs.push_back(split_whitespace(results[i].value("phonemes", "")));
            durations.push_back(ms_to_seconds(transcribed.segments[i].duration_ms()));
        }
        if (seqs.empty()) continue;  // nothing to classify; the group is dropped
        auto cls = did::classify_speaker(model, seqs, durations);
        group_region[key] = cls.region;
    }

    Manifest out;
    out.header = transcribed.header;
    for (const Segment& s : transcribed.segments) {
        auto it = group_region.find({s.episode_id, s.speaker_tag});
        if (it == group_region.end()) continue;
        Segment labeled = s;
        labeled.dialect = it->second;
        out.segments.push_back(std::move(labeled));
    }
    out.sort_records();
    return out;
}

reporting::CorpusStats run_stats_stage(const Manifest& final_manifest,
                                       const std::filesystem::path& reports_dir) {
    std::filesystem::create_directories(reports_dir);
    reporting::CorpusStats stats = reporting::corpus_stats(final_manifest);
    atomic_write_text_file(reports_dir / "stats.txt", reporting::render_corpus_stats_text(stats));
    atomic_write_text_file(reports_dir / "stats.csv", reporting::render_corpus_stats_csv(stats));
    return stats;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

bool stage_done(const std::filesystem::path& checkpoint_dir, const std::string& stage,
                const std::string& config_hash) {
    std::filesystem::path p = checkpoint_dir / (stage + ".done");
    if (!std::filesystem::exists(p)) return false;
    json mark = json::parse(read_text_file(p), nullptr, false);
    if (mark.is_discarded() || !mark.is_object()) return false;
    return mark.value("stage", "") == stage && mark.value("config_hash", "") == config_hash;
}

void mark_stage_done(const std::filesystem::path& checkpoint_dir, const std::string& stage,
                     const std::string& config_hash) {
    json mark{{"stage", stage}, {"config_hash", config_hash}};
    atomic_write_text_file(checkpoint_dir / (stage + ".done"), mark.dump() + "\n");
}

std::vector<std::string> stage_prefix(const std::string& stop_after) {
    std::vector<std::string> prefix;
    for (const char* stage : kStages) {
        prefix.emplace_back(stage);
        if (stop_after == stage) break;
    }
    return prefix;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
    // Validate everything up front so configuration mistakes surface before
    // any stage touches the workspace.
    if (config.workspace.empty()) throw ConfigError("pipeline: workspace must be set");
    if (!config.stop_after.empty() && !is_stage_name(config.stop_after)) {
        throw ConfigError("pipeline: unknown stage '" + config.stop_after + "'");
    }
    if (config.max_parallel < 1) throw ConfigError("pipeline: max_parallel must be >= 1");
    std::vector<std::string> stages = stage_prefix(config.stop_after);
    auto runs = [&stages](const char* name) {
        return std::find(stages.begin(), stages.end(), name) != stages.end();
    };

    if (runs("ingest") && config.catalog.empty()) {
        throw ConfigError("pipeline: the ingest stage needs a catalog endpoint or directory");
    }
    for (const auto& [label, p] : std::initializer_list<
             std::pair<const char*, const std::filesystem::path*>>{
             {"overrides", &config.overrides},
             {"backends", &config.backend_conf},
             {"did_model", &config.did_model}}) {
        if (!p->empty() && !std::filesystem::exists(*p)) {
            throw ConfigError(std::string("pipeline: ") + label + " file " + p->string() +
                              " does not exist");
        }
    }

    std::map<std::string, LanguageClass> overrides;
    if (!config.overrides.empty()) overrides = ingest::read_override_table(config.overrides);

    backends::BackendSet backend_set = config.backend_conf.empty()
                                           ? backends::default_backend_set(config.seed)
                                           : backends::load_backend_conf(config.backend_conf);
    if (runs("diarize")) backend_set.require(backends::BackendKind::diarizer);
    if (runs("transcribe")) backend_set.require(backends::BackendKind::asr);
    if (runs("did")) backend_set.require(backends::BackendKind::phonemizer);

    did::NBModel model;
    if (runs("did")) {
        if (config.did_model.empty()) {
            throw ConfigError("pipeline: the did stage needs a did_model file");
        }
        model = did::load_model(config.did_model);
    }

    const std::filesystem::path& ws = config.workspace;
    std::filesystem::create_directories(ws);
    WorkspaceLock lock(ws / ".lock");
    std::filesystem::path checkpoints = ws / "checkpoints";
    std::filesystem::create_directories(checkpoints);
    std::filesystem::create_directories(ws / "logs");

    PipelineResult result;
    result.manifest_path = ws / "manifest.jsonl";
    result.stats_text_path = ws / "reports" / "stats.txt";
    result.stats_csv_path = ws / "reports" / "stats.csv";

    ManifestHeader header;
    header.created_utc = utc_timestamp_now();
    header.config_hash = config.config_hash;

    for (const std::string& stage : stages) {
        if (stage_done(checkpoints, stage, config.config_hash)) {
            result.stages_skipped.push_back(stage);
            continue;
        }

        if (stage == "ingest") {
            ingest::IngestOptions opts;
            opts.http.timeout_s = config.http_timeout_s;
            opts.http.auth = config.auth;
            opts.download.timeout_s = config.http_timeout_s;
            opts.max_parallel = config.max_parallel;
            opts.include_excluded = config.include_excluded;
            if (config.catalog.rfind("http://", 0) != 0) {
                opts.download.local_root = config.catalog;
            }
            ingest::run_ingest(config.catalog, overrides, ws / "ingest", opts);
        } else if (stage == "diarize") {
            auto episodes = ingest::read_episode_index(ws / "ingest" / "episodes.jsonl");
            auto backend = backends::make_backend(
                backend_set.require(backends::BackendKind::diarizer));
            run_diarize_stage(episodes, *backend, ws / "diarize",
                              backend->spec().max_parallel, ws / "logs" / "diarize.log.jsonl");
        } else if (stage == "segment") {
            auto episodes = ingest::read_episode_index(ws / "ingest" / "episodes.jsonl");
            Manifest m =
                run_segment_stage(episodes, ws / "diarize", ws / "segments", config.segmentation);
            // Audio paths become workspace-relative so every later manifest
            // can share one base directory.
            for (Segment& s : m.segments) {
                s.audio_path = (std::filesystem::path("segments") / s.audio_path).generic_string();
            }
            m.header = header;
            write_manifest(m, ws / "segments.raw.jsonl");
        } else if (stage == "transcribe") {
            Manifest segments = read_manifest(ws / "segments.raw.jsonl");
            auto backend =
                backends::make_backend(backend_set.require(backends::BackendKind::asr));
            Manifest m = run_transcribe_stage(segments, ws, *backend,
                                              backend->spec().max_parallel,
                                              ws / "logs" / "transcribe.log.jsonl");
            m.header = header;
            write_manifest(m, ws / "transcribed.jsonl");
        } else if (stage == "did") {
            Manifest transcribed = read_manifest(ws / "transcribed.jsonl");
            auto backend = backends::make_backend(
                backend_set.require(backends::BackendKind::phonemizer));
            Manifest m = run_did_stage(transcribed, ws, model, *backend,
                                       backend->spec().max_parallel,
                                       ws / "logs" / "phonemize.log.jsonl");
            m.header = header;
            write_manifest(m, result.manifest_path);
        } else if (stage == "stats") {
            Manifest final_manifest = read_manifest(result.manifest_path);
            run_stats_stage(final_manifest, ws / "reports");
        }

        mark_stage_done(checkpoints, stage, config.config_hash);
        result.stages_run.push_back(stage);
    }
    return result;
}

}  // namespace dialektpipe::pipeline
