#include <doctest.h>

#include <cmath>
#include <random>

#include "dialektpipe/dialect_id.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"
#include "test_support.hpp"

using namespace dialektpipe;
using testsupport::TempDir;

TEST_SUITE_BEGIN("dialect_id");

namespace {

using Phonemes = std::vector<std::string>;

// 200 examples per class from disjoint alphabets: trivially separable.
std::vector<did::LabeledPhonemes> separable_corpus(int per_class, int length,
                                                   std::uint64_t seed) {
    const Phonemes zh = {"zh1", "zh2", "zh3", "zh4", "zh5"};
    const Phonemes be = {"be1", "be2", "be3", "be4", "be5"};
    std::mt19937_64 rng(seed);
    std::vector<did::LabeledPhonemes> corpus;
    for (int i = 0; i < per_class; ++i) {
        did::LabeledPhonemes a, b;
        a.label = DialectRegion::Zurich;
        b.label = DialectRegion::Bern;
        for (int j = 0; j < length; ++j) {
            a.phonemes.push_back(zh[rng() % zh.size()]);
            b.phonemes.push_back(be[rng() % be.size()]);
        }
        corpus.push_back(std::move(a));
        corpus.push_back(std::move(b));
    }
    return corpus;
}

}  // namespace

TEST_CASE("extract_ngrams walks every window of every order") {
    Phonemes p = {"x", "y", "z"};
    CHECK(did::extract_ngrams(p, {1}) == std::vector<std::string>{"x", "y", "z"});
    CHECK(did::extract_ngrams(p, {2}) == std::vector<std::string>{"x y", "y z"});
    CHECK(did::extract_ngrams(p, {3}) == std::vector<std::string>{"x y z"});
    CHECK(did::extract_ngrams(p, {1, 2}) ==
          std::vector<std::string>{"x", "y", "z", "x y", "y z"});
    CHECK(did::extract_ngrams({"x"}, {2}).empty());
    CHECK(did::extract_ngrams({}, {1}).empty());
    CHECK_THROWS_AS((void)did::extract_ngrams(p, {0}), ConfigError);
}

TEST_CASE("two-class posteriors match the closed-form values") {
    // Zurich: two examples of ["a"]; Bern: one example of ["b"].
    // With unigrams and alpha = 1: vocabulary {a, b}, one unseen bucket.
    //   P(Zurich) = 2/3           P(Bern) = 1/3
    //   P(a|Zurich) = 3/5         P(a|Bern) = 1/4
    std::vector<did::LabeledPhonemes> corpus = {
        {{"a"}, DialectRegion::Zurich},
        {{"a"}, DialectRegion::Zurich},
        {{"b"}, DialectRegion::Bern},
    };
    did::NBModel model =
        did::train_nb(corpus, {DialectRegion::Zurich, DialectRegion::Bern}, {1}, 1.0);

    SUBCASE("single seen token") {
        // posterior(Zurich | a) = (2/3 * 3/5) / (2/3 * 3/5 + 1/3 * 1/4) = 24/29
        did::Prediction pred = did::predict(model, {"a"});
        CHECK(pred.region == DialectRegion::Zurich);
        CHECK_FALSE(pred.prior_only);
        REQUIRE(pred.log_posterior.size() == 2);
        CHECK(pred.log_posterior[0] ==
              doctest::Approx(std::log(24.0 / 29.0)).epsilon(1e-9));
        CHECK(pred.log_posterior[1] ==
              doctest::Approx(std::log(5.0 / 29.0)).epsilon(1e-9));
    }
    SUBCASE("two tokens multiply the likelihoods") {
        // score(Zurich) = 2/3 * 3/5 * 1/5 = 2/25; score(Bern) = 1/3 * 1/4 * 1/2 = 1/24
        did::Prediction pred = did::predict(model, {"a", "b"});
        CHECK(pred.region == DialectRegion::Zurich);  // 48/73 vs 25/73
        CHECK(pred.log_posterior[0] ==
              doctest::Approx(std::log(48.0 / 73.0)).epsilon(1e-9));
    }
    SUBCASE("empty input falls back to the prior") {
        did::Prediction pred = did::predict(model, {});
        CHECK(pred.prior_only);
        CHECK(pred.region == DialectRegion::Zurich);
        CHECK(pred.log_posterior[0] ==
              doctest::Approx(std::log(2.0 / 3.0)).epsilon(1e-9));
        CHECK(pred.log_posterior[1] ==
              doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-9));
    }
    SUBCASE("unseen tokens use the shared bucket") {
        // P(unseen|Zurich) = 1/5, P(unseen|Bern) = 1/4
        did::Prediction pred = did::predict(model, {"qq"});
        double pz = (2.0 / 3.0 * 1.0 / 5.0);
        double pb = (1.0 / 3.0 * 1.0 / 4.0);
        CHECK(pred.log_posterior[0] ==
              doctest::Approx(std::log(pz / (pz + pb))).epsilon(1e-9));
    }
}

TEST_CASE("posteriors are a normalized distribution") {
    auto corpus = separable_corpus(20, 10, 31);
    did::NBModel model = did::train_nb(corpus);
    std::mt19937_64 rng(37);
    const Phonemes pool = {"zh1", "zh3", "be2", "be5", "novel"};
    for (int trial = 0; trial < 50; ++trial) {
        Phonemes input;
        for (std::size_t i = 0; i < rng() % 20; ++i) input.push_back(pool[rng() % pool.size()]);
        did::Prediction pred = did::predict(model, input);
        double total = 0;
        for (double lp : pred.log_posterior) total += std::exp(lp);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("separable corpora are classified perfectly") {
    auto train = separable_corpus(50, 30, 41);
    auto test = separable_corpus(25, 30, 43);
    did::NBModel model = did::train_nb(train);
    did::DidEvalReport report = did::evaluate(model, test);
    CHECK(report.macro_f1 == doctest::Approx(1.0));
    REQUIRE(report.confusion.classes.size() == 2);
    CHECK(report.confusion.counts[0][1] == 0);
    CHECK(report.confusion.counts[1][0] == 0);
}

TEST_CASE("predictions are invariant under a consistent token renaming") {
    auto train = separable_corpus(10, 8, 47);
    Phonemes probe = {"zh1", "be2", "zh3", "zh1"};
    did::NBModel plain = did::train_nb(train);
    did::Prediction before = did::predict(plain, probe);

    auto rename = [](Phonemes& p) {
        for (auto& tok : p) tok = "ren_" + tok + "_x";
    };
    for (auto& ex : train) rename(ex.phonemes);
    rename(probe);
    did::NBModel renamed = did::train_nb(train);
    did::Prediction after = did::predict(renamed, probe);

    CHECK(after.region == before.region);
    REQUIRE(after.log_posterior.size() == before.log_posterior.size());
    for (std::size_t c = 0; c < before.log_posterior.size(); ++c) {
        CHECK(after.log_posterior[c] ==
              doctest::Approx(before.log_posterior[c]).epsilon(1e-12));
    }
}

TEST_CASE("macro F1 averages per-class F1 over observed classes") {
    // Force the confusion matrix [[2,1],[1,2]]: each class F1 = 2/3.
    std::vector<did::LabeledPhonemes> train = {
        {{"z"}, DialectRegion::Zurich},
        {{"b"}, DialectRegion::Bern},
    };
    did::NBModel model =
        did::train_nb(train, {DialectRegion::Zurich, DialectRegion::Bern}, {1}, 1.0);
    std::vector<did::LabeledPhonemes> test = {
        {{"z"}, DialectRegion::Zurich}, {{"z"}, DialectRegion::Zurich},
        {{"b"}, DialectRegion::Zurich},  // mislabeled on purpose
        {{"b"}, DialectRegion::Bern},   {{"b"}, DialectRegion::Bern},
        {{"z"}, DialectRegion::Bern},
    };
    did::DidEvalReport report = did::evaluate(model, test);
    CHECK(report.confusion.counts[0][0] == 2);
    CHECK(report.confusion.counts[0][1] == 1);
    CHECK(report.confusion.counts[1][0] == 1);
    CHECK(report.confusion.counts[1][1] == 2);
    CHECK(report.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("training rejects bad inputs") {
    CHECK_THROWS_AS((void)did::train_nb({}), DataError);
    std::vector<did::LabeledPhonemes> corpus = {{{"a"}, DialectRegion::Zurich}};
    CHECK_THROWS_AS((void)did::train_nb(corpus, {}, {1}, 0.0), ConfigError);
    // declared class with no examples
    CHECK_THROWS_AS(
        (void)did::train_nb(corpus, {DialectRegion::Zurich, DialectRegion::Bern}),
        DataError);
    // example outside the declared classes
    CHECK_THROWS_AS((void)did::train_nb(corpus, {DialectRegion::Bern}), DataError);
}

TEST_CASE("classify_speaker concatenates segments before classifying") {
    // With bigrams only, the boundary-crossing bigram "b c" exists solely in
    // the concatenation, never inside a single segment.
    std::vector<did::LabeledPhonemes> train = {
        {{"a", "b", "c"}, DialectRegion::Zurich},
        {{"x", "y", "z"}, DialectRegion::Bern},
    };
    did::NBModel model =
        did::train_nb(train, {DialectRegion::Zurich, DialectRegion::Bern}, {2}, 1.0);

    std::vector<Phonemes> segments = {{"a", "b"}, {"c"}};
    did::SpeakerClassification sc = did::classify_speaker(model, segments, {20.0, 15.0});
    CHECK(sc.region == DialectRegion::Zurich);
    CHECK_FALSE(sc.low_confidence);
    // the same posterior as predicting the joined sequence directly
    did::Prediction joined = did::predict(model, {"a", "b", "c"});
    CHECK(sc.log_posterior[0] == joined.log_posterior[0]);

    SUBCASE("short audio is flagged low confidence") {
        did::SpeakerClassification brief =
            did::classify_speaker(model, segments, {10.0, 15.0});
        CHECK(brief.low_confidence);
        CHECK(brief.region == sc.region);  // flag does not change the answer
    }
    SUBCASE("count mismatch and empty input are errors") {
        CHECK_THROWS_AS((void)did::classify_speaker(model, segments, {1.0}), DataError);
        CHECK_THROWS_AS((void)did::classify_speaker(model, {}, {}), DataError);
    }
}

TEST_CASE("model files round-trip the exact counts") {
    TempDir dir;
    auto train = separable_corpus(12, 10, 53);
    did::NBModel model = did::train_nb(train, {}, {1, 2}, 0.5);
    did::save_model(model, dir / "m.nb");
    did::NBModel back = did::load_model(dir / "m.nb");

    CHECK(back.classes == model.classes);
    CHECK(back.ngram_orders == model.ngram_orders);
    CHECK(back.smoothing_alpha == model.smoothing_alpha);
    CHECK(back.config_hash == model.config_hash);
    CHECK(back.vocab_list == model.vocab_list);
    CHECK(back.counts == model.counts);

    // identical predictions, bit for bit
    Phonemes probe = {"zh1", "zh2", "be3"};
    did::Prediction a = did::predict(model, probe);
    did::Prediction b = did::predict(back, probe);
    CHECK(a.region == b.region);
    for (std::size_t c = 0; c < a.log_posterior.size(); ++c) {
        CHECK(a.log_posterior[c] == b.log_posterior[c]);
    }
}

TEST_CASE("model loader rejects damaged files") {
    TempDir dir;
    SUBCASE("wrong header") {
        write_text_file(dir / "m.nb", "not a model\n");
        CHECK_THROWS_WITH_AS((void)did::load_model(dir / "m.nb"),
                             doctest::Contains("unrecognized header"), DataError);
    }
    SUBCASE("truncated") {
        write_text_file(dir / "m.nb", "nbmodel 1\nconfig abc\n");
        CHECK_THROWS_WITH_AS((void)did::load_model(dir / "m.nb"),
                             doctest::Contains("truncated"), DataError);
    }
    SUBCASE("unknown class name") {
        write_text_file(dir / "m.nb",
                        "nbmodel 1\nconfig abc\nalpha 1\norders 1\nclasses 1\n"
                        "class Atlantis 1 1\nvocab 1\n1\ta\n");
        CHECK_THROWS_WITH_AS((void)did::load_model(dir / "m.nb"),
                             doctest::Contains("unknown class"), DataError);
    }
    SUBCASE("token totals disagree with the counts") {
        write_text_file(dir / "m.nb",
                        "nbmodel 1\nconfig abc\nalpha 1\norders 1\nclasses 1\n"
                        "class Zurich 1 5\nvocab 1\n1\ta\n");
        CHECK_THROWS_WITH_AS((void)did::load_model(dir / "m.nb"),
                             doctest::Contains("count total mismatch"), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS((void)did::load_model(dir / "absent.nb"), DataError);
    }
}

TEST_CASE("labeled corpus files round-trip") {
    TempDir dir;
    std::vector<did::LabeledPhonemes> corpus = {
        {{"a", "b"}, DialectRegion::Valais},
        {{"c"}, DialectRegion::EasternCH},
    };
    did::write_labeled_corpus(corpus, dir / "c.tsv");
    auto back = did::read_labeled_corpus(dir / "c.tsv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].phonemes == corpus[0].phonemes);
    CHECK(back[0].label == DialectRegion::Valais);
    CHECK(back[1].label == DialectRegion::EasternCH);

    SUBCASE("missing tab names the line") {
        write_text_file(dir / "bad.tsv", "Zurich\ta b\nBern no tab here\n");
        CHECK_THROWS_WITH_AS((void)did::read_labeled_corpus(dir / "bad.tsv"),
                             doctest::Contains("line 2"), DataError);
    }
    SUBCASE("unknown label names the line") {
        write_text_file(dir / "bad.tsv", "Narnia\ta b\n");
        CHECK_THROWS_WITH_AS((void)did::read_labeled_corpus(dir / "bad.tsv"),
                             doctest::Contains("unknown region label"), DataError);
    }
}

TEST_SUITE_END();
