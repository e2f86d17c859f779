#include "dialektpipe/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::metrics {

// ---------------------------------------------------------------------------
// Text normalization

namespace {

bool is_ascii_punct(unsigned char c) {
    return std::ispunct(c) != 0;
}

}  // namespace

std::vector<std::string> normalize_text(std::string_view text, const TextNormConfig& cfg) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            if (cfg.strip_punctuation && is_ascii_punct(c)) continue;
            out.push_back(cfg.lowercase ? static_cast<char>(std::tolower(c))
                                        : static_cast<char>(c));
            continue;
        }
        // Lowercase the UTF-8 Latin-1 supplement (umlauts etc.): C3 80..9E
        // maps to C3 A0..BE, except C3 97 which is the multiplication sign.
        if (cfg.lowercase && c == 0xC3 && i + 1 < text.size()) {
            unsigned char c2 = static_cast<unsigned char>(text[i + 1]);
            if (c2 >= 0x80 && c2 <= 0x9E && c2 != 0x97) {
                out.push_back(static_cast<char>(0xC3));
                out.push_back(static_cast<char>(c2 + 0x20));
                ++i;
                continue;
            }
        }
        out.push_back(static_cast<char>(c));
    }
    return split_whitespace(out);
}

// ---------------------------------------------------------------------------
// WER

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::size_t> prev(m + 1);
    std::vector<std::size_t> cur(m + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double wer(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis) {
    if (reference.empty()) throw DataError("wer: empty reference");
    return static_cast<double>(edit_distance(reference, hypothesis)) /
           static_cast<double>(reference.size());
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, std::size_t order) {
    NgramCounts counts;
    if (tokens.size() < order) return counts;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < order; ++k) {
            if (k > 0) key.push_back('\x1f');
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& references,
            const std::vector<std::vector<std::string>>& hypotheses) {
    if (references.size() != hypotheses.size()) {
        throw DataError("bleu: reference/hypothesis count mismatch");
    }
    if (references.empty()) throw DataError("bleu: empty corpus");

    constexpr std::size_t kMaxOrder = 4;
    std::size_t matches[kMaxOrder] = {0, 0, 0, 0};
    std::size_t totals[kMaxOrder] = {0, 0, 0, 0};
    std::size_t ref_len = 0;
    std::size_t hyp_len = 0;

    for (std::size_t p = 0; p < references.size(); ++p) {
        const auto& ref = references[p];
        const auto& hyp = hypotheses[p];
        ref_len += ref.size();
        hyp_len += hyp.size();
        for (std::size_t order = 1; order <= kMaxOrder; ++order) {
            NgramCounts ref_counts = count_ngrams(ref, order);
            NgramCounts hyp_counts = count_ngrams(hyp, order);
            for (const auto& [gram, count] : hyp_counts) {
                totals[order - 1] += count;
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) {
                    matches[order - 1] += std::min(count, it->second);  // clipped
                }
            }
        }
    }

    if (hyp_len == 0 || totals[0] == 0 || matches[0] == 0) return 0.0;

    double log_precision_sum = 0.0;
    for (std::size_t order = 1; order <= kMaxOrder; ++order) {
        double num = static_cast<double>(matches[order - 1]);
        double den = static_cast<double>(totals[order - 1]);
        if (order >= 2) {  // "+1" smoothing for the higher orders
            num += 1.0;
            den += 1.0;
        }
        log_precision_sum += std::log(num / den);
    }
    double brevity = hyp_len >= ref_len
                         ? 1.0
                         : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
    return brevity * std::exp(log_precision_sum / kMaxOrder);
}

// ---------------------------------------------------------------------------
// DER

namespace {

struct Interval {
    double start;
    double end;
};

// Union of possibly-overlapping intervals.
std::vector<Interval> merge_intervals(std::vector<Interval> ivs) {
    std::sort(ivs.begin(), ivs.end(),
              [](const Interval& a, const Interval& b) { return a.start < b.start; });
    std::vector<Interval> out;
    for (const Interval& iv : ivs) {
        if (!out.empty() && iv.start <= out.back().end) {
            out.back().end = std::max(out.back().end, iv.end);
        } else {
            out.push_back(iv);
        }
    }
    return out;
}

bool active_at(const std::vector<Interval>& ivs, double t) {
    for (const Interval& iv : ivs) {
        if (iv.start <= t && t < iv.end) return true;
    }
    return false;
}

// Maximum-weight one-to-one assignment over the overlap matrix, by subset
// DP over the smaller dimension.
double best_assignment(const std::vector<std::vector<double>>& weight) {
    std::size_t rows = weight.size();
    if (rows == 0) return 0.0;
    std::size_t cols = weight[0].size();
    if (cols == 0) return 0.0;

    // Orient so the DP mask runs over the smaller side.
    std::vector<std::vector<double>> w;
    if (cols <= rows) {
        w = weight;
    } else {
        w.assign(cols, std::vector<double>(rows));
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) w[j][i] = weight[i][j];
        }
        std::swap(rows, cols);
    }
    if (cols > 20) throw DataError("der: more than 2^20 speaker mapping states");

    const std::size_t n_masks = std::size_t{1} << cols;
    std::vector<double> dp(n_masks, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        // Iterate masks descending so each row is used at most once.
        for (std::size_t mask = n_masks; mask-- > 0;) {
            for (std::size_t j = 0; j < cols; ++j) {
                if (mask & (std::size_t{1} << j)) continue;
                std::size_t next = mask | (std::size_t{1} << j);
                dp[next] = std::max(dp[next], dp[mask] + w[i][j]);
            }
        }
    }
    return *std::max_element(dp.begin(), dp.end());
}

}  // namespace

DerBreakdown der_breakdown(const std::vector<SpeakerTurn>& reference,
                           const std::vector<SpeakerTurn>& hypothesis, double collar_s) {
    // Per-speaker merged activity.
    std::map<std::string, std::vector<Interval>> ref_by_spk;
    std::map<std::string, std::vector<Interval>> hyp_by_spk;
    for (const SpeakerTurn& t : reference) {
        ref_by_spk[t.speaker_tag].push_back(
            {ms_to_seconds(t.start_ms), ms_to_seconds(t.end_ms)});
    }
    for (const SpeakerTurn& t : hypothesis) {
        hyp_by_spk[t.speaker_tag].push_back(
            {ms_to_seconds(t.start_ms), ms_to_seconds(t.end_ms)});
    }
    for (auto& [spk, ivs] : ref_by_spk) ivs = merge_intervals(std::move(ivs));
    for (auto& [spk, ivs] : hyp_by_spk) ivs = merge_intervals(std::move(ivs));

    // No-score zones: +-collar around every reference turn boundary.
    std::vector<Interval> no_score;
    if (collar_s > 0) {
        for (const SpeakerTurn& t : reference) {
            no_score.push_back({ms_to_seconds(t.start_ms) - collar_s,
                                ms_to_seconds(t.start_ms) + collar_s});
            no_score.push_back(
                {ms_to_seconds(t.end_ms) - collar_s, ms_to_seconds(t.end_ms) + collar_s});
        }
        no_score = merge_intervals(std::move(no_score));
    }

    // Elementary intervals between all boundary points.
    std::set<double> points;
    auto add_points = [&points](const std::vector<Interval>& ivs) {
        for (const Interval& iv : ivs) {
            points.insert(iv.start);
            points.insert(iv.end);
        }
    };
    for (const auto& [spk, ivs] : ref_by_spk) add_points(ivs);
    for (const auto& [spk, ivs] : hyp_by_spk) add_points(ivs);
    add_points(no_score);

    std::vector<std::string> ref_spks;
    std::vector<std::string> hyp_spks;
    for (const auto& [spk, ivs] : ref_by_spk) ref_spks.push_back(spk);
    for (const auto& [spk, ivs] : hyp_by_spk) hyp_spks.push_back(spk);

    std::vector<std::vector<double>> overlap(ref_spks.size(),
                                             std::vector<double>(hyp_spks.size(), 0.0));
    DerBreakdown result;
    double min_sum = 0.0;  // integral of min(Nref, Nhyp)

    std::vector<double> pts(points.begin(), points.end());
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        double t0 = pts[k];
        double t1 = pts[k + 1];
        double mid = (t0 + t1) / 2;
        double dt = t1 - t0;
        if (dt <= 0 || active_at(no_score, mid)) continue;

        int n_ref = 0;
        int n_hyp = 0;
        std::vector<std::size_t> ref_active;
        std::vector<std::size_t> hyp_active;
        for (std::size_t i = 0; i < ref_spks.size(); ++i) {
            if (active_at(ref_by_spk[ref_spks[i]], mid)) {
                ++n_ref;
                ref_active.push_back(i);
            }
        }
        for (std::size_t j = 0; j < hyp_spks.size(); ++j) {
            if (active_at(hyp_by_spk[hyp_spks[j]], mid)) {
                ++n_hyp;
                hyp_active.push_back(j);
            }
        }
        result.reference_s += n_ref * dt;
        result.missed_s += std::max(0, n_ref - n_hyp) * dt;
        result.false_alarm_s += std::max(0, n_hyp - n_ref) * dt;
        min_sum += std::min(n_ref, n_hyp) * dt;
        for (std::size_t i : ref_active) {
            for (std::size_t j : hyp_active) overlap[i][j] += dt;
        }
    }

    if (result.reference_s <= 0) throw DataError("der: zero reference speech time");
    result.confusion_s = min_sum - best_assignment(overlap);
    return result;
}

double der(const std::vector<SpeakerTurn>& reference, const std::vector<SpeakerTurn>& hypothesis,
           double collar_s) {
    return der_breakdown(reference, hypothesis, collar_s).rate();
}

// ---------------------------------------------------------------------------
// Cosine similarity

double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("cosine_sim: dimension mismatch");
    if (a.empty()) throw DataError("cosine_sim: empty vectors");
    double dot = 0;
    double na = 0;
    double nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) throw DataError("cosine_sim: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// MOS aggregation

MosAggregate aggregate_values(const std::vector<double>& values) {
    if (values.empty()) throw DataError("aggregate_mos: empty input");
    MosAggregate agg;
    agg.n = static_cast<int>(values.size());
    agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    if (values.size() >= 2) {
        double ss = 0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / (values.size() - 1));
    }
    return agg;
}

MosAggregate aggregate_mos(const std::vector<MosSample>& samples, MosField field) {
    std::vector<double> values;
    values.reserve(samples.size());
    for (const MosSample& s : samples) {
        switch (field) {
            case MosField::smos: values.push_back(s.smos); break;
            case MosField::cmos: values.push_back(s.cmos); break;
            case MosField::intelligibility: values.push_back(s.intelligibility); break;
        }
    }
    return aggregate_values(values);
}

std::string format_mos(const MosAggregate& agg) {
    return format_fixed(agg.mean, 2) + "±" + format_fixed(agg.stddev, 2);
}

namespace {

int parse_rating(const std::string& raw, const std::string& where) {
    std::string t = trim(raw);
    std::size_t pos = 0;
    int value = 0;
    try {
        value = std::stoi(t, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (t.empty() || pos != t.size()) {
        throw DataError(where + ": rating '" + raw + "' is not an integer");
    }
    return value;
}

}  // namespace

std::vector<MosSample> read_mos_csv(const std::filesystem::path& path) {
    std::string content = read_text_file(path);
    std::vector<MosSample> samples;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
        std::size_t eol = content.find('\n', pos);
        std::string line = content.substr(pos, eol == std::string::npos ? eol : eol - pos);
        pos = eol == std::string::npos ? content.size() + 1 : eol + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = parse_csv_line(line);
        std::string where = "ratings " + path.string() + " row " + std::to_string(line_no);
        if (line_no == 1) {
            if (fields.size() != 5 || fields[0] != "item_id" || fields[1] != "rater_id" ||
                fields[2] != "smos" || fields[3] != "cmos" || fields[4] != "intelligibility") {
                throw DataError("ratings " + path.string() +
                                ": expected header item_id,rater_id,smos,cmos,intelligibility");
            }
            continue;
        }
        if (fields.size() != 5) {
            throw DataError(where + ": expected 5 columns, got " +
                            std::to_string(fields.size()));
        }
        MosSample s;
        s.item_id = fields[0];
        s.rater_id = fields[1];
        s.smos = parse_rating(fields[2], where);
        s.cmos = parse_rating(fields[3], where);
        s.intelligibility = parse_rating(fields[4], where);
        if (!s.in_bounds()) {
            throw DataError(where + ": rating outside its scale (smos 1..5, cmos -3..3, "
                            "intelligibility 1..5)");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

namespace {

// Midranks of the pooled sample; returns (ranks for a, tie group sizes).
std::pair<std::vector<double>, std::vector<std::size_t>> pooled_midranks(
    const std::vector<double>& a, const std::vector<double>& b) {
    struct Tagged {
        double value;
        bool from_a;
    };
    std::vector<Tagged> pool;
    pool.reserve(a.size() + b.size());
    for (double v : a) pool.push_back({v, true});
    for (double v : b) pool.push_back({v, false});
    std::sort(pool.begin(), pool.end(),
              [](const Tagged& x, const Tagged& y) { return x.value < y.value; });

    std::vector<double> a_ranks;
    a_ranks.reserve(a.size());
    std::vector<std::size_t> tie_sizes;
    std::size_t i = 0;
    while (i < pool.size()) {
        std::size_t j = i;
        while (j < pool.size() && pool[j].value == pool[i].value) ++j;
        double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
        for (std::size_t k = i; k < j; ++k) {
            if (pool[k].from_a) a_ranks.push_back(midrank);
        }
        if (j - i > 1) tie_sizes.push_back(j - i);
        i = j;
    }
    return {std::move(a_ranks), std::move(tie_sizes)};
}

// P(U <= u) under H0 for tie-free samples of sizes n and m, by the classic
// count recursion: the largest pooled value is either an 'a' (adds m to U)
// or a 'b'.
double exact_cdf(std::size_t n, std::size_t m, std::int64_t u) {
    const std::int64_t max_u = static_cast<std::int64_t>(n * m);
    if (u < 0) return 0.0;
    if (u >= max_u) return 1.0;
    // counts[j][v] = number of arrangements of (i, j) with statistic v,
    // rolled over i.
    std::vector<std::vector<double>> counts(m + 1);
    for (std::size_t j = 0; j <= m; ++j) counts[j] = {1.0};  // i = 0
    for (std::size_t i = 1; i <= n; ++i) {
        std::vector<std::vector<double>> next(m + 1);
        next[0] = {1.0};
        for (std::size_t j = 1; j <= m; ++j) {
            std::vector<double> cell(i * j + 1, 0.0);
            const auto& take_a = counts[j];  // (i-1, j), shift by j
            for (std::size_t v = 0; v < take_a.size(); ++v) cell[v + j] += take_a[v];
            const auto& take_b = next[j - 1];  // (i, j-1)
            for (std::size_t v = 0; v < take_b.size(); ++v) cell[v] += take_b[v];
            next[j] = std::move(cell);
        }
        counts = std::move(next);
    }
    const std::vector<double>& dist = counts[m];
    double below = 0;
    double total = 0;
    for (std::size_t v = 0; v < dist.size(); ++v) {
        total += dist[v];
        if (static_cast<std::int64_t>(v) <= u) below += dist[v];
    }
    return below / total;
}

}  // namespace

SignificanceResult significance(const std::vector<double>& a, const std::vector<double>& b,
                                double alpha) {
    if (a.size() < 3 || b.size() < 3) {
        throw DataError("significance: need at least 3 ratings per group");
    }
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());

    auto [a_ranks, tie_sizes] = pooled_midranks(a, b);
    double rank_sum = std::accumulate(a_ranks.begin(), a_ranks.end(), 0.0);
    double u_a = rank_sum - n * (n + 1) / 2;
    double u_b = n * m - u_a;

    SignificanceResult result;
    result.u_statistic = u_a;

    std::size_t min_side = std::min(a.size(), b.size());
    std::size_t max_side = std::max(a.size(), b.size());
    bool tie_free = tie_sizes.empty();

    if (tie_free && min_side <= 8 && max_side <= 200) {
        auto u_min = static_cast<std::int64_t>(std::llround(std::min(u_a, u_b)));
        result.p_value = std::min(1.0, 2.0 * exact_cdf(a.size(), b.size(), u_min));
    } else {
        double big_n = n + m;
        double tie_term = 0;
        for (std::size_t t : tie_sizes) {
            tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
        }
        double variance = n * m / 12.0 * ((big_n + 1) - tie_term / (big_n * (big_n - 1)));
        if (variance <= 0) {
            result.p_value = 1.0;
        } else {
            double z = std::max(0.0, std::abs(u_a - n * m / 2.0) - 0.5) / std::sqrt(variance);
            result.p_value = std::erfc(z / std::sqrt(2.0));
        }
    }
    result.significant = result.p_value < alpha;
    return result;
}

}  // namespace dialektpipe::metrics
