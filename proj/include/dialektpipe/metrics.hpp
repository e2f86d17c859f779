#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dialektpipe/types.hpp"

namespace dialektpipe::metrics {

// Text normalization applied identically to references and hypotheses
// within one evaluation.
struct TextNormConfig {
    bool lowercase = true;
    bool strip_punctuation = true;
    bool collapse_whitespace = true;
};

// Whitespace tokens after the configured transforms. Lowercasing covers
// ASCII plus the Latin-1 letters in UTF-8 (umlauts and friends).
std::vector<std::string> normalize_text(std::string_view text, const TextNormConfig& cfg = {});

// (substitutions + deletions + insertions) / |reference| via minimal edit
// distance with unit costs. The reference must be non-empty.
double wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Corpus-level BLEU in [0, 1]: brevity penalty times the geometric mean of
// modified n-gram precisions n=1..4, with +1 smoothing on numerator and
// denominator for n >= 2. Reports render it x100.
double bleu(const std::vector<std::vector<std::string>>& references,
            const std::vector<std::vector<std::string>>& hypotheses);

// Diarization error rate: (missed + false alarm + confusion time) over
// total reference speech time, under the overlap-maximizing one-to-one
// speaker mapping, with +-collar_s excluded around every reference turn
// boundary.
double der(const std::vector<SpeakerTurn>& reference, const std::vector<SpeakerTurn>& hypothesis,
           double collar_s = 0.25);

struct DerBreakdown {
    double missed_s = 0;
    double false_alarm_s = 0;
    double confusion_s = 0;
    double reference_s = 0;

    double rate() const { return (missed_s + false_alarm_s + confusion_s) / reference_s; }
};

DerBreakdown der_breakdown(const std::vector<SpeakerTurn>& reference,
                           const std::vector<SpeakerTurn>& hypothesis, double collar_s = 0.25);

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b);

// A single human rating of one item. Scale bounds are enforced at ingest.
struct MosSample {
    std::string item_id;
    std::string rater_id;
    int smos = 0;             // 1..5
    int cmos = 0;             // -3..3
    int intelligibility = 0;  // 1..5

    bool in_bounds() const {
        return smos >= 1 && smos <= 5 && cmos >= -3 && cmos <= 3 && intelligibility >= 1 &&
               intelligibility <= 5;
    }
};

enum class MosField { smos, cmos, intelligibility };

struct MosAggregate {
    double mean = 0;
    double stddev = 0;  // sample standard deviation (n-1); 0 when n == 1
    int n = 0;
};

MosAggregate aggregate_mos(const std::vector<MosSample>& samples, MosField field);
MosAggregate aggregate_values(const std::vector<double>& values);

// CSV with header item_id,rater_id,smos,cmos,intelligibility. Out-of-scale
// ratings are rejected with their row number.
std::vector<MosSample> read_mos_csv(const std::filesystem::path& path);

// "3.81±0.86"
std::string format_mos(const MosAggregate& agg);

struct SignificanceResult {
    double p_value = 1.0;
    bool significant = false;
    double u_statistic = 0;
};

// Two-sided Mann-Whitney U. Exact distribution when min(n,m) <= 8 and the
// pooled sample is tie-free; normal approximation with tie correction and
// continuity correction otherwise. Requires >= 3 elements per side.
SignificanceResult significance(const std::vector<double>& a, const std::vector<double>& b,
                                double alpha = 0.05);

}  // namespace dialektpipe::metrics
