#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialektpipe/backends.hpp"
#include "dialektpipe/dialect_id.hpp"
#include "dialektpipe/metrics.hpp"
#include "dialektpipe/types.hpp"

namespace dialektpipe::eval {

// A named set of evaluation inputs. "short" items are single sentences of
// roughly 5-7s, "long" items span several sentences at 10-15s.
struct EvalScenario {
    std::string name;
    std::vector<std::string> texts;
    double expected_duration_lo_s = 5.0;
    double expected_duration_hi_s = 7.0;
};

// Fills in the expected duration range from the scenario name.
EvalScenario make_scenario(std::string name, std::vector<std::string> texts);

struct SpeakerInfo {
    std::string speaker_id;
    DialectRegion dialect = DialectRegion::Zurich;
    std::vector<std::filesystem::path> reference_clips;
};

struct EvalItem {
    std::string item_id;
    std::string model_tag;
    DialectRegion dialect = DialectRegion::Zurich;
    std::string speaker_id;
    std::string text;
    std::vector<std::filesystem::path> reference_clips;  // exactly 5
    std::optional<std::filesystem::path> generated_audio;
    std::optional<std::string> back_translation;
};

struct BuildOptions {
    int texts_per_scenario = 50;
    int speakers_per_dialect = 4;
    int clips_per_speaker = 5;
    // Adds Standard German rows on top of the seven dialect regions.
    bool include_standard_german = false;
    std::string model_tag = "model";
};

// Samples texts, speakers, and per-speaker reference clips with the given
// seed: 50 texts x 7 dialect regions x 4 speakers = 1400 items (plus a
// German block when requested). Insufficient inputs raise errors naming the
// dialect.
std::vector<EvalItem> build_eval_set(const EvalScenario& scenario,
                                     const std::vector<SpeakerInfo>& speakers,
                                     std::uint64_t seed, const BuildOptions& options = {});

struct AutoEvalRow {
    std::string label;  // region display name or "Total"
    int items_total = 0;
    int items_scored = 0;
    int items_failed = 0;
    std::optional<double> wer;   // corpus WER of back-translations vs inputs
    std::optional<double> bleu;  // corpus BLEU in [0, 1]
    std::optional<double> sim;   // mean cosine similarity to the speaker centroid
    std::optional<double> did;   // share of speakers classified to the right region
    int did_speakers = 0;
    int did_correct = 0;
};

// One region row per entry plus the pooled Total row at the end.
struct MetricReport {
    std::string scenario;
    std::string model_tag;
    std::vector<AutoEvalRow> rows;
};

struct AutoEvalOptions {
    std::filesystem::path work_dir;  // generated audio, completion logs
    metrics::TextNormConfig norm;
    // Utterances per speaker concatenated for the dialect classification.
    int did_utterances_per_speaker = 50;
    double did_min_total_s = 30.0;
};

struct AutoEvalResult {
    MetricReport report;
    std::vector<EvalItem> items;  // with generated audio and back-translations
};

// Synthesis -> back-transcription -> speaker embedding -> phonemization,
// then the four metrics per region. Per-item backend failures are excluded
// from every aggregate and counted in the failures column; each stage keeps
// a completion log under work_dir so an interrupted run resumes.
AutoEvalResult run_auto_eval(const std::vector<EvalItem>& items,
                             const backends::BackendSet& backend_set,
                             const did::NBModel& did_model, const AutoEvalOptions& options);

// ---------------------------------------------------------------------------
// Human evaluation sheets

struct HumanPrepOptions {
    int per_dialect = 6;
    int raters_per_sample = 2;
    std::filesystem::path out_dir;
};

struct HumanSheets {
    std::filesystem::path index_file;  // items_index.json next to the sheets
    std::vector<std::filesystem::path> sheet_files;  // one CSV per rater
};

// Picks per_dialect items per dialect region (42 by default) from the items
// that have generated audio, assigns each to raters_per_sample distinct
// raters with loads balanced within +-1, and writes one CSV per rater plus
// an index file the aggregator reads back.
HumanSheets prepare_human_sheets(const std::vector<EvalItem>& items, const std::string& scenario,
                                 const std::vector<std::string>& raters, std::uint64_t seed,
                                 const HumanPrepOptions& options);

struct MosRow {
    std::string model_tag;
    std::string scenario;
    metrics::MosAggregate smos;
    metrics::MosAggregate cmos;
    metrics::MosAggregate intelligibility;
    // significantly different from the baseline model (same scenario)
    bool smos_sig_baseline = false;
    bool cmos_sig_baseline = false;
    bool intel_sig_baseline = false;
    // significantly different from another non-baseline model
    bool smos_sig_peer = false;
    bool cmos_sig_peer = false;
    bool intel_sig_peer = false;
};

struct MosReport {
    std::string baseline_tag;
    double alpha = 0.05;
    std::vector<MosRow> rows;  // sorted by (scenario, model_tag)
};

// Reads completed rater sheets via their index files. Blank or NA cells are
// missing ratings, excluded per metric; out-of-scale values are rejected
// with their row number.
MosReport aggregate_human(const std::vector<std::filesystem::path>& index_files,
                          const std::string& baseline_tag, double alpha = 0.05);

// ---------------------------------------------------------------------------
// File formats for staging between CLI verbs

void write_eval_items(const std::vector<EvalItem>& items, const std::filesystem::path& path);
std::vector<EvalItem> read_eval_items(const std::filesystem::path& path);

// JSON array of {speaker_id, dialect, reference_clips: [paths]}; relative
// clip paths resolve against the file's directory.
std::vector<SpeakerInfo> read_speaker_table(const std::filesystem::path& path);
void write_speaker_table(const std::vector<SpeakerInfo>& speakers,
                         const std::filesystem::path& path);

// One text per line, blank lines skipped.
std::vector<std::string> read_texts(const std::filesystem::path& path);

}  // namespace dialektpipe::eval
