#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialektpipe/types.hpp"

namespace dialektpipe::did {

// One training or test example: a phoneme token sequence with its region label.
struct LabeledPhonemes {
    std::vector<std::string> phonemes;
    DialectRegion label = DialectRegion::Zurich;
};

// Multinomial Naive Bayes over phoneme n-grams. The sufficient statistics
// (integer counts) are stored; log tables are derived on demand, which keeps
// the model file exactly round-trippable.
struct NBModel {
    std::vector<DialectRegion> classes;
    std::vector<int> ngram_orders = {1, 2, 3};
    double smoothing_alpha = 1.0;
    std::string config_hash;

    std::unordered_map<std::string, std::size_t> vocab;  // n-gram -> column
    std::vector<std::string> vocab_list;                 // column -> n-gram
    std::vector<std::int64_t> class_examples;            // training examples per class
    std::vector<std::int64_t> class_tokens;              // n-gram occurrences per class
    std::vector<std::vector<std::int64_t>> counts;       // [class][column]

    bool trained() const { return !classes.empty(); }
    double log_prior(std::size_t c) const;
    double log_likelihood(std::size_t c, std::size_t column) const;
    // Shared bucket for n-grams unseen in training.
    double log_unseen(std::size_t c) const;
};

struct Prediction {
    DialectRegion region = DialectRegion::Zurich;
    std::vector<double> log_posterior;  // normalized, aligned with model.classes
    bool prior_only = false;            // empty input fell back to the prior argmax
};

struct SpeakerClassification {
    DialectRegion region = DialectRegion::Zurich;
    std::vector<double> log_posterior;
    bool low_confidence = false;  // concatenated audio shorter than the minimum
};

struct ConfusionMatrix {
    std::vector<DialectRegion> classes;
    std::vector<std::vector<std::int64_t>> counts;  // [truth][prediction]

    std::int64_t row_sum(std::size_t truth) const;
};

struct DidEvalReport {
    double macro_f1 = 0;
    ConfusionMatrix confusion;
};

// Every contiguous window of each requested order, in order of appearance,
// tokens joined with single spaces. Orders must all be >= 1.
std::vector<std::string> extract_ngrams(const std::vector<std::string>& phonemes,
                                        const std::vector<int>& orders);

// Trains with add-alpha smoothing; priors follow class example counts.
// An empty `classes` means "use the labels present in the corpus". A declared
// class with no examples is an error.
NBModel train_nb(const std::vector<LabeledPhonemes>& corpus,
                 const std::vector<DialectRegion>& classes = {},
                 const std::vector<int>& orders = {1, 2, 3}, double alpha = 1.0);

Prediction predict(const NBModel& model, const std::vector<std::string>& phonemes);

// Concatenates the segment sequences in the given order and classifies once.
// Flags low confidence when the total duration is below min_total_s.
SpeakerClassification classify_speaker(const NBModel& model,
                                       const std::vector<std::vector<std::string>>& segments,
                                       const std::vector<double>& durations_s,
                                       double min_total_s = 30.0);

// Macro F1 is the unweighted mean of per-class F1 over classes that occur in
// the truth or the predictions.
DidEvalReport evaluate(const NBModel& model, const std::vector<LabeledPhonemes>& test);

void save_model(const NBModel& model, const std::filesystem::path& path);
NBModel load_model(const std::filesystem::path& path);

// Labeled corpus files: one `label<TAB>phoneme tokens` line per example.
std::vector<LabeledPhonemes> read_labeled_corpus(const std::filesystem::path& path);
void write_labeled_corpus(const std::vector<LabeledPhonemes>& corpus,
                          const std::filesystem::path& path);

}  // namespace dialektpipe::did
