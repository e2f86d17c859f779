#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dialektpipe/backends.hpp"
#include "dialektpipe/dialect_id.hpp"
#include "dialektpipe/ingest.hpp"
#include "dialektpipe/manifest.hpp"
#include "dialektpipe/reporting.hpp"
#include "dialektpipe/segmentation.hpp"

namespace dialektpipe::pipeline {

// Canonical stage order. A run executes a prefix of this list.
inline constexpr std::array<const char*, 6> kStages = {
    "ingest", "diarize", "segment", "transcribe", "did", "stats",
};

bool is_stage_name(const std::string& name);

struct PipelineConfig {
    std::filesystem::path workspace;
    std::string catalog;  // http:// endpoint, or a directory with catalog.json
    std::filesystem::path overrides;     // optional podcast language overrides
    std::filesystem::path backend_conf;  // optional; stub backends otherwise
    std::filesystem::path did_model;     // required when the did stage runs
    std::uint64_t seed = 1;
    int max_parallel = 4;
    bool include_excluded = false;
    std::string stop_after;  // empty = run everything
    SegmentationConfig segmentation;
    double http_timeout_s = 30.0;
    std::string auth;
    std::string config_hash;  // of the parsed config, for provenance
};

// JSON config file. Relative paths resolve against the file's directory;
// the workspace falls back to DIALEKTPIPE_WORKSPACE. Unknown keys are
// configuration errors so typos fail before any work happens.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Computes the provenance hash of a config independent of file formatting.
std::string hash_config_json(const std::string& canonical_json);

// ---------------------------------------------------------------------------
// Stage entry points. Each is deterministic given its inputs and writes its
// outputs under the given directory; the orchestrator and the standalone CLI
// verbs call the same functions.

// One RTTM file per episode under out_dir, via the diarizer backend.
void run_diarize_stage(const std::vector<Episode>& episodes, backends::Backend& diarizer,
                       const std::filesystem::path& out_dir, int max_parallel,
                       const std::filesystem::path& log_path);

// Slices every episode into persisted segments under out_dir and returns
// the manifest (audio paths relative to out_dir). Episodes marked failed by
// the diarize stage are skipped.
Manifest run_segment_stage(const std::vector<Episode>& episodes,
                           const std::filesystem::path& rttm_dir,
                           const std::filesystem::path& out_dir,
                           const SegmentationConfig& config);

// Adds transcripts via the ASR backend. Segments whose transcription fails
// are removed from the returned manifest.
Manifest run_transcribe_stage(const Manifest& segments, const std::filesystem::path& audio_base,
                              backends::Backend& asr, int max_parallel,
                              const std::filesystem::path& log_path);

// Assigns one dialect per (episode, speaker) group: the group's segment
// phoneme streams are concatenated and classified once. Groups with no
// usable phonemes are removed.
Manifest run_did_stage(const Manifest& transcribed, const std::filesystem::path& audio_base,
                       const did::NBModel& model, backends::Backend& phonemizer,
                       int max_parallel, const std::filesystem::path& log_path);

// Renders reports_dir/stats.txt and stats.csv.
reporting::CorpusStats run_stats_stage(const Manifest& final_manifest,
                                       const std::filesystem::path& reports_dir);

// ---------------------------------------------------------------------------
// Orchestration

struct PipelineResult {
    std::filesystem::path manifest_path;  // workspace/manifest.jsonl
    std::filesystem::path stats_text_path;
    std::filesystem::path stats_csv_path;
    std::vector<std::string> stages_run;
    std::vector<std::string> stages_skipped;  // checkpointed in earlier runs
};

// Runs the stage sequence with per-stage checkpoints under
// workspace/checkpoints. Completed stages are skipped; deleting one
// checkpoint re-runs exactly that stage. A lock file serializes
// orchestrators sharing a workspace; locks left by dead processes are
// broken automatically.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace dialektpipe::pipeline
