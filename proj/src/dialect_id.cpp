#include "dialektpipe/dialect_id.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::did {

namespace {

std::int64_t total_examples(const NBModel& model) {
    std::int64_t total = 0;
    for (std::int64_t n : model.class_examples) total += n;
    return total;
}

double smoothed_denominator(const NBModel& model, std::size_t c) {
    return static_cast<double>(model.class_tokens[c]) +
           model.smoothing_alpha * (static_cast<double>(model.vocab_list.size()) + 1.0);
}

std::string orders_to_string(const std::vector<int>& orders) {
    std::string out;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += std::to_string(orders[i]);
    }
    return out;
}

}  // namespace

double NBModel::log_prior(std::size_t c) const {
    return std::log(static_cast<double>(class_examples[c])) -
           std::log(static_cast<double>(total_examples(*this)));
}

double NBModel::log_likelihood(std::size_t c, std::size_t column) const {
    return std::log(static_cast<double>(counts[c][column]) + smoothing_alpha) -
           std::log(smoothed_denominator(*this, c));
}

double NBModel::log_unseen(std::size_t c) const {
    return std::log(smoothing_alpha) - std::log(smoothed_denominator(*this, c));
}

std::vector<std::string> extract_ngrams(const std::vector<std::string>& phonemes,
                                        const std::vector<int>& orders) {
    for (int k : orders) {
        if (k < 1) throw ConfigError("extract_ngrams: n-gram order must be >= 1");
    }
    std::vector<std::string> grams;
    for (int k : orders) {
        auto order = static_cast<std::size_t>(k);
        if (phonemes.size() < order) continue;
        for (std::size_t i = 0; i + order <= phonemes.size(); ++i) {
            std::string gram = phonemes[i];
            for (std::size_t j = 1; j < order; ++j) {
                gram.push_back(' ');
                gram += phonemes[i + j];
            }
            grams.push_back(std::move(gram));
        }
    }
    return grams;
}

NBModel train_nb(const std::vector<LabeledPhonemes>& corpus,
                 const std::vector<DialectRegion>& classes, const std::vector<int>& orders,
                 double alpha) {
    if (!(alpha > 0)) throw ConfigError("train_nb: smoothing alpha must be > 0");
    if (corpus.empty()) throw DataError("train_nb: empty corpus");

    NBModel model;
    model.ngram_orders = orders;
    model.smoothing_alpha = alpha;
    if (classes.empty()) {
        std::set<DialectRegion> seen;
        for (const auto& ex : corpus) seen.insert(ex.label);
        model.classes.assign(seen.begin(), seen.end());
    } else {
        model.classes = classes;
    }

    std::map<DialectRegion, std::size_t> class_index;
    for (std::size_t c = 0; c < model.classes.size(); ++c) class_index[model.classes[c]] = c;

    model.class_examples.assign(model.classes.size(), 0);
    model.class_tokens.assign(model.classes.size(), 0);
    std::vector<std::map<std::string, std::int64_t>> raw_counts(model.classes.size());

    for (const auto& ex : corpus) {
        auto it = class_index.find(ex.label);
        if (it == class_index.end()) {
            throw DataError("train_nb: example labeled " + std::string(region_name(ex.label)) +
                            " is not in the declared class list");
        }
        std::size_t c = it->second;
        ++model.class_examples[c];
        for (std::string& gram : extract_ngrams(ex.phonemes, orders)) {
            ++raw_counts[c][gram];
            ++model.class_tokens[c];
        }
    }
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        if (model.class_examples[c] == 0) {
            throw DataError("train_nb: class " + std::string(region_name(model.classes[c])) +
                            " has no training examples");
        }
    }

    std::set<std::string> vocab_set;
    for (const auto& per_class : raw_counts) {
        for (const auto& [gram, n] : per_class) vocab_set.insert(gram);
    }
    model.vocab_list.assign(vocab_set.begin(), vocab_set.end());
    for (std::size_t i = 0; i < model.vocab_list.size(); ++i) model.vocab[model.vocab_list[i]] = i;

    model.counts.assign(model.classes.size(),
                        std::vector<std::int64_t>(model.vocab_list.size(), 0));
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        for (const auto& [gram, n] : raw_counts[c]) model.counts[c][model.vocab.at(gram)] = n;
    }

    model.config_hash =
        sha256_hex("nb;alpha=" + format_fixed(alpha, 6) + ";orders=" + orders_to_string(orders))
            .substr(0, 16);
    return model;
}

Prediction predict(const NBModel& model, const std::vector<std::string>& phonemes) {
    if (!model.trained()) throw ConfigError("predict: model is not trained");

    Prediction pred;
    std::vector<double> scores(model.classes.size());
    for (std::size_t c = 0; c < model.classes.size(); ++c) scores[c] = model.log_prior(c);

    std::vector<std::string> grams = extract_ngrams(phonemes, model.ngram_orders);
    pred.prior_only = grams.empty();
    if (!grams.empty()) {
        std::unordered_map<std::string, std::int64_t> gram_counts;
        for (std::string& g : grams) ++gram_counts[std::move(g)];
        for (std::size_t c = 0; c < model.classes.size(); ++c) {
            double denom = std::log(smoothed_denominator(model, c));
            for (const auto& [gram, n] : gram_counts) {
                auto it = model.vocab.find(gram);
                double numer = it != model.vocab.end()
                                   ? static_cast<double>(model.counts[c][it->second]) +
                                         model.smoothing_alpha
                                   : model.smoothing_alpha;
                scores[c] += static_cast<double>(n) * (std::log(numer) - denom);
            }
        }
    }

    double max_score = *std::max_element(scores.begin(), scores.end());
    double norm = 0;
    for (double s : scores) norm += std::exp(s - max_score);
    double log_norm = max_score + std::log(norm);
    pred.log_posterior.resize(scores.size());
    std::size_t best = 0;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        pred.log_posterior[c] = scores[c] - log_norm;
        if (scores[c] > scores[best]) best = c;
    }
    pred.region = model.classes[best];
    return pred;
}

SpeakerClassification classify_speaker(const NBModel& model,
                                       const std::vector<std::vector<std::string>>& segments,
                                       const std::vector<double>& durations_s,
                                       double min_total_s) {
    if (segments.empty()) throw DataError("classify_speaker: no segments");
    if (segments.size() != durations_s.size()) {
        throw DataError("classify_speaker: segment/duration count mismatch");
    }
    std::vector<std::string> joined;
    double total_s = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        joined.insert(joined.end(), segments[i].begin(), segments[i].end());
        total_s += durations_s[i];
    }
    Prediction pred = predict(model, joined);
    SpeakerClassification result;
    result.region = pred.region;
    result.log_posterior = std::move(pred.log_posterior);
    result.low_confidence = total_s < min_total_s;
    return result;
}

std::int64_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::int64_t sum = 0;
    for (std::int64_t n : counts[truth]) sum += n;
    return sum;
}

DidEvalReport evaluate(const NBModel& model, const std::vector<LabeledPhonemes>& test) {
    if (test.empty()) throw DataError("evaluate: empty test set");

    DidEvalReport report;
    report.confusion.classes = model.classes;
    report.confusion.counts.assign(model.classes.size(),
                                   std::vector<std::int64_t>(model.classes.size(), 0));
    std::map<DialectRegion, std::size_t> class_index;
    for (std::size_t c = 0; c < model.classes.size(); ++c) class_index[model.classes[c]] = c;

    for (const auto& ex : test) {
        auto it = class_index.find(ex.label);
        if (it == class_index.end()) {
            throw DataError("evaluate: test label " + std::string(region_name(ex.label)) +
                            " is not a model class");
        }
        std::size_t truth = it->second;
        std::size_t guess = class_index.at(predict(model, ex.phonemes).region);
        ++report.confusion.counts[truth][guess];
    }

    double f1_sum = 0;
    int f1_classes = 0;
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        std::int64_t tp = report.confusion.counts[c][c];
        std::int64_t fn = report.confusion.row_sum(c) - tp;
        std::int64_t fp = 0;
        for (std::size_t r = 0; r < model.classes.size(); ++r) {
            if (r != c) fp += report.confusion.counts[r][c];
        }
        if (tp + fn + fp == 0) continue;  // absent from truth and predictions
        double f1 = tp > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
        f1_sum += f1;
        ++f1_classes;
    }
    report.macro_f1 = f1_classes > 0 ? f1_sum / f1_classes : 0.0;
    return report;
}

// ---------------------------------------------------------------------------
// Serialization: versioned plain text holding the exact training counts.

void save_model(const NBModel& model, const std::filesystem::path& path) {
    if (!model.trained()) throw ConfigError("save_model: model is not trained");
    std::ostringstream out;
    out << "nbmodel 1\n";
    out << "config " << model.config_hash << "\n";
    char alpha_buf[64];
    std::snprintf(alpha_buf, sizeof alpha_buf, "%.17g", model.smoothing_alpha);
    out << "alpha " << alpha_buf << "\n";
    out << "orders " << orders_to_string(model.ngram_orders) << "\n";
    out << "classes " << model.classes.size() << "\n";
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        out << "class " << region_name(model.classes[c]) << " " << model.class_examples[c] << " "
            << model.class_tokens[c] << "\n";
    }
    out << "vocab " << model.vocab_list.size() << "\n";
    for (std::size_t i = 0; i < model.vocab_list.size(); ++i) {
        for (std::size_t c = 0; c < model.classes.size(); ++c) {
            if (c > 0) out << ' ';
            out << model.counts[c][i];
        }
        out << '\t' << model.vocab_list[i] << "\n";
    }
    atomic_write_text_file(path, out.str());
}

NBModel load_model(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    auto fail = [&path](const std::string& why) -> DataError {
        return DataError("model file " + path.string() + ": " + why);
    };
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw fail("truncated");
        return line;
    };

    NBModel model;
    if (next_line() != "nbmodel 1") throw fail("unrecognized header");
    {
        std::istringstream ls(next_line());
        std::string key;
        if (!(ls >> key >> model.config_hash) || key != "config") throw fail("bad config line");
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        if (!(ls >> key >> model.smoothing_alpha) || key != "alpha" ||
            !(model.smoothing_alpha > 0)) {
            throw fail("bad alpha line");
        }
    }
    {
        std::istringstream ls(next_line());
        std::string key;
        if (!(ls >> key) || key != "orders") throw fail("bad orders line");
        model.ngram_orders.clear();
        int order = 0;
        while (ls >> order) {
            if (order < 1) throw fail("bad n-gram order");
            model.ngram_orders.push_back(order);
        }
        if (model.ngram_orders.empty()) throw fail("no n-gram orders");
    }

    std::size_t n_classes = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        if (!(ls >> key >> n_classes) || key != "classes" || n_classes == 0) {
            throw fail("bad classes line");
        }
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::istringstream ls(next_line());
        std::string key;
        std::string name;
        std::int64_t examples = 0;
        std::int64_t tokens = 0;
        if (!(ls >> key >> name >> examples >> tokens) || key != "class" || examples <= 0 ||
            tokens < 0) {
            throw fail("bad class line");
        }
        auto region = parse_region(name);
        if (!region) throw fail("unknown class " + name);
        model.classes.push_back(*region);
        model.class_examples.push_back(examples);
        model.class_tokens.push_back(tokens);
    }

    std::size_t n_vocab = 0;
    {
        std::istringstream ls(next_line());
        std::string key;
        if (!(ls >> key >> n_vocab) || key != "vocab") throw fail("bad vocab line");
    }
    model.counts.assign(n_classes, std::vector<std::int64_t>(n_vocab, 0));
    model.vocab_list.reserve(n_vocab);
    for (std::size_t i = 0; i < n_vocab; ++i) {
        next_line();
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw fail("vocab entry missing tab separator");
        std::istringstream ls(line.substr(0, tab));
        for (std::size_t c = 0; c < n_classes; ++c) {
            std::int64_t n = 0;
            if (!(ls >> n) || n < 0) throw fail("bad count in vocab entry " + std::to_string(i));
            model.counts[c][i] = n;
        }
        std::string gram = line.substr(tab + 1);
        if (gram.empty()) throw fail("empty n-gram in vocab entry " + std::to_string(i));
        if (!model.vocab.emplace(gram, i).second) throw fail("duplicate n-gram " + gram);
        model.vocab_list.push_back(std::move(gram));
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::int64_t sum = 0;
        for (std::int64_t n : model.counts[c]) sum += n;
        if (sum != model.class_tokens[c]) {
            throw fail("count total mismatch for class " +
                       std::string(region_name(model.classes[c])));
        }
    }
    return model;
}

std::vector<LabeledPhonemes> read_labeled_corpus(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<LabeledPhonemes> corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("corpus file " + path.string() + " line " + std::to_string(line_no) +
                            ": expected label<TAB>phonemes");
        }
        auto region = parse_region(trim(line.substr(0, tab)));
        if (!region) {
            throw DataError("corpus file " + path.string() + " line " + std::to_string(line_no) +
                            ": unknown region label");
        }
        corpus.push_back({split_whitespace(line.substr(tab + 1)), *region});
    }
    return corpus;
}

void write_labeled_corpus(const std::vector<LabeledPhonemes>& corpus,
                          const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& ex : corpus) {
        out << region_name(ex.label) << '\t';
        for (std::size_t i = 0; i < ex.phonemes.size(); ++i) {
            if (i > 0) out << ' ';
            out << ex.phonemes[i];
        }
        out << '\n';
    }
    atomic_write_text_file(path, out.str());
}

}  // namespace dialektpipe::did
