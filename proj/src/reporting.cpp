#include "dialektpipe/reporting.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dialektpipe/errors.hpp"
#include "dialektpipe/metrics.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::reporting {

namespace {

// Right-aligns every column except the first; two spaces between columns.
std::string render_aligned(const std::vector<std::vector<std::string>>& table) {
    if (table.empty()) return "";
    std::vector<std::size_t> widths;
    for (const auto& row : table) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : table) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) line += "  ";
            std::size_t pad = widths[c] - row[c].size();
            if (c == 0) {
                line += row[c] + std::string(pad, ' ');
            } else {
                line += std::string(pad, ' ') + row[c];
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

std::string opt_fixed(const std::optional<double>& value, int decimals) {
    return value ? format_fixed(*value, decimals) : "-";
}

std::string opt_csv(const std::optional<double>& value, int decimals) {
    return value ? format_fixed(*value, decimals) : "";
}

}  // namespace

CorpusStats corpus_stats(const Manifest& manifest) {
    std::map<DialectRegion, CorpusStatsRow> acc;
    for (DialectRegion r : kAllRegions) acc[r].label = std::string(region_display(r));

    std::vector<std::string> unlabeled;
    for (const Segment& s : manifest.segments) {
        if (!s.dialect) {
            unlabeled.push_back(s.segment_id);
            continue;
        }
        CorpusStatsRow& row = acc[*s.dialect];
        row.samples += 1;
        row.duration_ms += s.duration_ms();
        if (s.transcript) {
            row.tokens += static_cast<std::int64_t>(split_whitespace(*s.transcript).size());
        }
    }
    if (!unlabeled.empty()) {
        std::string ids;
        std::size_t shown = std::min<std::size_t>(unlabeled.size(), 8);
        for (std::size_t i = 0; i < shown; ++i) {
            if (i > 0) ids += ", ";
            ids += unlabeled[i];
        }
        if (unlabeled.size() > shown) {
            ids += ", and " + std::to_string(unlabeled.size() - shown) + " more";
        }
        throw DataError("corpus stats: " + std::to_string(unlabeled.size()) +
                        " segments have no dialect label: " + ids);
    }

    CorpusStats stats;
    CorpusStatsRow total;
    total.label = "Total";
    for (DialectRegion r : kAllRegions) {
        total.samples += acc[r].samples;
        total.duration_ms += acc[r].duration_ms;
        total.tokens += acc[r].tokens;
    }
    for (DialectRegion r : kAllRegions) {
        CorpusStatsRow row = acc[r];
        if (total.duration_ms > 0) {
            row.pct = 100.0 * static_cast<double>(row.duration_ms) /
                      static_cast<double>(total.duration_ms);
        }
        stats.rows.push_back(std::move(row));
    }
    total.pct = total.duration_ms > 0 ? 100.0 : 0.0;
    stats.rows.push_back(std::move(total));
    return stats;
}

std::string render_corpus_stats_text(const CorpusStats& stats) {
    std::vector<std::vector<std::string>> table;
    table.push_back({"Dialect", "Samples", "Length (h)", "Length (%)", "Tokens (M)"});
    for (const CorpusStatsRow& row : stats.rows) {
        table.push_back({row.label, std::to_string(row.samples), format_fixed(row.length_h(), 2),
                         format_fixed(row.pct, 2) + "%", format_fixed(row.tokens_m(), 2)});
    }
    return render_aligned(table);
}

std::string render_corpus_stats_csv(const CorpusStats& stats) {
    std::ostringstream out;
    out << "dialect,samples,duration_s,length_h,pct,tokens\n";
    for (const CorpusStatsRow& row : stats.rows) {
        out << csv_quote(row.label) << ',' << row.samples << ','
            << format_ms_as_seconds(row.duration_ms) << ',' << format_fixed(row.length_h(), 6)
            << ',' << format_fixed(row.pct, 4) << ',' << row.tokens << '\n';
    }
    return out.str();
}

std::string render_metric_report_text(const eval::MetricReport& report) {
    std::ostringstream out;
    out << "System " << report.model_tag << ", scenario " << report.scenario << '\n';
    std::vector<std::vector<std::string>> table;
    table.push_back({"Region", "Items", "Scored", "Failed", "WER", "BLEU", "SIM", "DID"});
    for (const eval::AutoEvalRow& row : report.rows) {
        table.push_back({row.label, std::to_string(row.items_total),
                         std::to_string(row.items_scored), std::to_string(row.items_failed),
                         opt_fixed(row.wer, 3), opt_fixed(row.bleu, 3), opt_fixed(row.sim, 3),
                         opt_fixed(row.did, 3)});
    }
    out << render_aligned(table);
    return out.str();
}

std::string render_metric_report_csv(const eval::MetricReport& report) {
    std::ostringstream out;
    out << "region,items_total,items_scored,items_failed,wer,bleu,sim,did\n";
    for (const eval::AutoEvalRow& row : report.rows) {
        out << csv_quote(row.label) << ',' << row.items_total << ',' << row.items_scored << ','
            << row.items_failed << ',' << opt_csv(row.wer, 6) << ',' << opt_csv(row.bleu, 6)
            << ',' << opt_csv(row.sim, 6) << ',' << opt_csv(row.did, 6) << '\n';
    }
    return out.str();
}

namespace {

std::string mos_cell(const metrics::MosAggregate& agg, bool sig_baseline, bool sig_peer) {
    if (agg.n == 0) return "-";
    std::string cell = metrics::format_mos(agg);
    if (sig_baseline) cell += "*";
    if (sig_peer) cell += "†";
    return cell;
}

}  // namespace

std::string render_mos_report_text(const eval::MosReport& report) {
    std::ostringstream out;
    std::vector<std::vector<std::string>> table;
    table.push_back({"Scenario", "System", "SMOS", "CMOS", "Intelligibility"});
    for (const eval::MosRow& row : report.rows) {
        table.push_back({row.scenario, row.model_tag,
                         mos_cell(row.smos, row.smos_sig_baseline, row.smos_sig_peer),
                         mos_cell(row.cmos, row.cmos_sig_baseline, row.cmos_sig_peer),
                         mos_cell(row.intelligibility, row.intel_sig_baseline,
                                  row.intel_sig_peer)});
    }
    out << render_aligned(table);
    out << "*  differs from baseline '" << report.baseline_tag << "' at alpha "
        << format_fixed(report.alpha, 2) << " (Mann-Whitney U)\n";
    out << "†  differs from another system at alpha " << format_fixed(report.alpha, 2)
        << '\n';
    return out.str();
}

std::string render_mos_report_csv(const eval::MosReport& report) {
    std::ostringstream out;
    out << "scenario,system,smos_mean,smos_stddev,smos_n,smos_sig_baseline,smos_sig_peer,"
           "cmos_mean,cmos_stddev,cmos_n,cmos_sig_baseline,cmos_sig_peer,"
           "intel_mean,intel_stddev,intel_n,intel_sig_baseline,intel_sig_peer\n";
    for (const eval::MosRow& row : report.rows) {
        auto emit = [&out](const metrics::MosAggregate& agg, bool sig_base, bool sig_peer) {
            out << format_fixed(agg.mean, 6) << ',' << format_fixed(agg.stddev, 6) << ','
                << agg.n << ',' << (sig_base ? 1 : 0) << ',' << (sig_peer ? 1 : 0);
        };
        out << csv_quote(row.scenario) << ',' << csv_quote(row.model_tag) << ',';
        emit(row.smos, row.smos_sig_baseline, row.smos_sig_peer);
        out << ',';
        emit(row.cmos, row.cmos_sig_baseline, row.cmos_sig_peer);
        out << ',';
        emit(row.intelligibility, row.intel_sig_baseline, row.intel_sig_peer);
        out << '\n';
    }
    return out.str();
}

}  // namespace dialektpipe::reporting
