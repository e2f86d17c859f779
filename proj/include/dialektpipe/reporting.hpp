#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dialektpipe/eval.hpp"
#include "dialektpipe/manifest.hpp"
#include "dialektpipe/types.hpp"

namespace dialektpipe::reporting {

struct CorpusStatsRow {
    std::string label;  // region display name or "Total"
    std::int64_t samples = 0;
    Millis duration_ms = 0;
    std::int64_t tokens = 0;  // whitespace tokens over transcripts
    double pct = 0;           // share of total duration; 0 for an empty corpus

    double length_h() const { return static_cast<double>(duration_ms) / 3'600'000.0; }
    double tokens_m() const { return static_cast<double>(tokens) / 1'000'000.0; }
};

// One row per region in kAllRegions order plus the Total row at the end.
// The Total row holds the column sums; region pct values sum to 100 unless
// the corpus is empty.
struct CorpusStats {
    std::vector<CorpusStatsRow> rows;
};

// Counts segments, durations, and transcript tokens per dialect region.
// Every record must carry a dialect label; offenders are reported by id.
CorpusStats corpus_stats(const Manifest& manifest);

// Aligned table: Dialect, Samples, Length (h), Length (%), Tokens (M).
std::string render_corpus_stats_text(const CorpusStats& stats);
std::string render_corpus_stats_csv(const CorpusStats& stats);

// Region rows with item counts and the WER/BLEU/SIM/DID columns; cells
// without data render as "-".
std::string render_metric_report_text(const eval::MetricReport& report);
std::string render_metric_report_csv(const eval::MetricReport& report);

// MOS table with "x.xx±y.yy" cells, "*" marking a significant difference
// from the baseline and "†" from some other system.
std::string render_mos_report_text(const eval::MosReport& report);
std::string render_mos_report_csv(const eval::MosReport& report);

}  // namespace dialektpipe::reporting
