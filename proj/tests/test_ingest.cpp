#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/ingest.hpp"
#include "dialektpipe/util.hpp"
#include "test_support.hpp"

using namespace dialektpipe;
using testsupport::TempDir;
using testsupport::make_sine;

TEST_SUITE_BEGIN("ingest");

namespace {

const char* kCatalogBody = R"([
    {"podcast_id": "p2", "title": "Zweites", "episode_count": 1,
     "episodes": [{"episode_id": "p2e1", "media_url": "p2e1.wav"}]},
    {"podcast_id": "p1", "title": "Erstes", "episode_count": 2,
     "episodes": [{"episode_id": "p1e1", "media_url": "p1e1.wav"},
                  {"episode_id": "p1e2", "media_url": "p1e2.wav"}]}
])";

// Catalog plus three episode wavs, everything relative to dir.
void write_local_corpus(const TempDir& dir) {
    write_text_file(dir / "catalog.json", kCatalogBody);
    audio::write_wav(make_sine(3.0, 220.0), dir / "p1e1.wav");
    audio::write_wav(make_sine(2.5, 300.0), dir / "p1e2.wav");
    audio::write_wav(make_sine(2.0, 440.0), dir / "p2e1.wav");
}

ingest::DownloadOptions fast_local(const TempDir& dir) {
    ingest::DownloadOptions opt;
    opt.local_root = dir.path();
    opt.retry.backoff_s = {0.0, 0.0, 0.0};
    return opt;
}

}  // namespace

TEST_CASE("catalog parsing validates each entry and sorts by podcast id") {
    auto catalog = ingest::parse_catalog_json(kCatalogBody);
    REQUIRE(catalog.size() == 2);
    CHECK(catalog[0].podcast_id == "p1");  // sorted despite input order
    CHECK(catalog[0].title == "Erstes");
    CHECK(catalog[0].episodes.size() == 2);
    CHECK(catalog[1].podcast_id == "p2");
    CHECK(catalog[0].language_class == LanguageClass::excluded);  // until overridden

    SUBCASE("malformed bodies") {
        CHECK_THROWS_WITH_AS((void)ingest::parse_catalog_json("not json"),
                             doctest::Contains("not valid JSON"), DataError);
        CHECK_THROWS_WITH_AS((void)ingest::parse_catalog_json("{}"),
                             doctest::Contains("expected a JSON array"), DataError);
    }
    SUBCASE("missing fields are named") {
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(R"([{"title": "x", "episode_count": 0,
                                                 "episodes": []}])"),
            doctest::Contains("podcast_id"), DataError);
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(R"([{"podcast_id": "p", "title": "x",
                                                 "episodes": []}])"),
            doctest::Contains("episode_count"), DataError);
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(
                R"([{"podcast_id": "p", "title": "x", "episode_count": 1,
                     "episodes": [{"episode_id": "e"}]}])"),
            doctest::Contains("media_url"), DataError);
    }
    SUBCASE("episode count must match the list") {
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(R"([{"podcast_id": "p", "title": "x",
                                                 "episode_count": 3, "episodes": []}])"),
            doctest::Contains("episode_count"), DataError);
    }
    SUBCASE("duplicate ids") {
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(
                R"([{"podcast_id": "p", "title": "x", "episode_count": 0, "episodes": []},
                    {"podcast_id": "p", "title": "y", "episode_count": 0, "episodes": []}])"),
            doctest::Contains("duplicate podcast_id"), DataError);
        CHECK_THROWS_WITH_AS(
            (void)ingest::parse_catalog_json(
                R"([{"podcast_id": "p", "title": "x", "episode_count": 2,
                     "episodes": [{"episode_id": "e", "media_url": "a"},
                                  {"episode_id": "e", "media_url": "b"}]}])"),
            doctest::Contains("duplicate episode_id"), DataError);
    }
}

TEST_CASE("override table maps podcast ids to language classes") {
    TempDir dir;
    write_text_file(dir / "o.tsv",
                    "# classification pass from 2026-05\n"
                    "\n"
                    "p1\tswiss\n"
                    "p2\tmixed\n"
                    "p3\tstandard\n");
    auto overrides = ingest::read_override_table(dir / "o.tsv");
    REQUIRE(overrides.size() == 3);
    CHECK(overrides.at("p1") == LanguageClass::swiss);
    CHECK(overrides.at("p2") == LanguageClass::mixed);
    CHECK(overrides.at("p3") == LanguageClass::standard);

    SUBCASE("missing tab names the line") {
        write_text_file(dir / "bad.tsv", "p1\tswiss\np2 swiss\n");
        CHECK_THROWS_WITH_AS((void)ingest::read_override_table(dir / "bad.tsv"),
                             doctest::Contains("line 2"), DataError);
    }
    SUBCASE("unknown class names the line") {
        write_text_file(dir / "bad.tsv", "p1\tklingon\n");
        CHECK_THROWS_WITH_AS((void)ingest::read_override_table(dir / "bad.tsv"),
                             doctest::Contains("unknown language class"), DataError);
    }
}

TEST_CASE("overrides classify known podcasts and warn about unknown ones") {
    auto catalog = ingest::parse_catalog_json(kCatalogBody);
    std::vector<std::string> warnings;
    auto classified = ingest::apply_overrides(
        std::move(catalog),
        {{"p1", LanguageClass::swiss}, {"ghost", LanguageClass::mixed}}, &warnings);
    CHECK(classified[0].language_class == LanguageClass::swiss);
    CHECK(classified[1].language_class == LanguageClass::excluded);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("ghost") != std::string::npos);
}

TEST_CASE("download_episode copies, verifies, and is idempotent") {
    TempDir src;
    TempDir dest;
    audio::write_wav(make_sine(2.0, 220.0), src / "e1.wav");

    ingest::EpisodeRef ref{"e1", "e1.wav"};
    Episode ep = ingest::download_episode(ref, "p1", dest.path(), fast_local(src));
    CHECK(ep.episode_id == "e1");
    CHECK(ep.podcast_id == "p1");
    CHECK(ep.duration_ms == 2000);
    CHECK(ep.sample_rate_hz == 16000);
    CHECK(std::filesystem::exists(dest / "e1.wav"));
    CHECK(std::filesystem::exists(dest / "e1.sha256"));
    CHECK_FALSE(std::filesystem::exists(dest / "e1.wav.part"));
    std::string sum_before = read_text_file(dest / "e1.sha256");

    SUBCASE("a verified file is returned without a second transfer") {
        // change the source; an idempotent second call must not pick it up
        audio::write_wav(make_sine(9.0, 100.0), src / "e1.wav");
        Episode again = ingest::download_episode(ref, "p1", dest.path(), fast_local(src));
        CHECK(again.duration_ms == 2000);
        CHECK(read_text_file(dest / "e1.sha256") == sum_before);
    }
    SUBCASE("a corrupted file is re-fetched") {
        write_text_file(dest / "e1.wav", "broken bytes");
        Episode again = ingest::download_episode(ref, "p1", dest.path(), fast_local(src));
        CHECK(again.duration_ms == 2000);
        CHECK(audio::read_wav(dest / "e1.wav").samples.size() == 32000);
    }
}

TEST_CASE("interrupted transfers resume from the part file") {
    TempDir src;
    TempDir dest;
    audio::write_wav(make_sine(2.0, 220.0), src / "e1.wav");  // 64044 bytes
    auto full_size = std::filesystem::file_size(src / "e1.wav");

    ingest::DownloadOptions opt = fast_local(src);
    opt.max_bytes_per_attempt = 30000;  // forces three attempts
    Episode ep = ingest::download_episode({"e1", "e1.wav"}, "p1", dest.path(), opt);
    CHECK(ep.duration_ms == 2000);
    CHECK(std::filesystem::file_size(dest / "e1.wav") == full_size);

    SUBCASE("too few retries to finish is a backend error") {
        TempDir dest2;
        opt.max_bytes_per_attempt = 10000;  // needs 7 attempts, policy allows 4
        CHECK_THROWS_WITH_AS(
            (void)ingest::download_episode({"e1", "e1.wav"}, "p1", dest2.path(), opt),
            doctest::Contains("failed after 4 attempts"), BackendError);
        // progress is kept for a later invocation
        CHECK(std::filesystem::exists(dest2 / "e1.wav.part"));
        CHECK(std::filesystem::file_size(dest2 / "e1.wav.part") == 40000);
        Episode ep2 = ingest::download_episode({"e1", "e1.wav"}, "p1", dest2.path(), opt);
        CHECK(ep2.duration_ms == 2000);
    }
}

TEST_CASE("non-wav media is rejected by codec sniffing") {
    TempDir src;
    TempDir dest;
    write_text_file(src / "e1.wav", "ID3\x04and some tag bytes, definitely not pcm audio");
    CHECK_THROWS_WITH_AS(
        (void)ingest::download_episode({"e1", "e1.wav"}, "p1", dest.path(), fast_local(src)),
        doctest::Contains("unsupported codec 'mp3'"), DataError);

    write_text_file(src / "e2.wav", "random stuff with no recognizable signature");
    CHECK_THROWS_WITH_AS(
        (void)ingest::download_episode({"e2", "e2.wav"}, "p1", dest.path(), fast_local(src)),
        doctest::Contains("unsupported codec 'unknown'"), DataError);
}

TEST_CASE("a wav that will not decode gets one fresh retry, then fails") {
    TempDir src;
    TempDir dest;
    // valid RIFF/WAVE magic, truncated before the sample data
    audio::write_wav(make_sine(1.0, 220.0), src / "full.wav");
    write_text_file(src / "e1.wav", read_text_file(src / "full.wav").substr(0, 100));
    CHECK_THROWS_AS(
        (void)ingest::download_episode({"e1", "e1.wav"}, "p1", dest.path(), fast_local(src)),
        DataError);
    CHECK_FALSE(std::filesystem::exists(dest / "e1.wav.part"));  // no stale half
}

TEST_CASE("missing media exhausts the retry policy") {
    TempDir src;
    TempDir dest;
    ingest::DownloadOptions opt = fast_local(src);
    opt.retry.backoff_s = {};  // single attempt
    CHECK_THROWS_WITH_AS(
        (void)ingest::download_episode({"nope", "nope.wav"}, "p1", dest.path(), opt),
        doctest::Contains("failed after 1 attempts"), BackendError);
}

TEST_CASE("local ingest runs end to end and is byte-deterministic") {
    TempDir src;
    TempDir dest;
    write_local_corpus(src);

    ingest::IngestOptions opt;
    opt.download = fast_local(src);
    std::map<std::string, LanguageClass> overrides = {{"p1", LanguageClass::swiss},
                                                      {"ghost", LanguageClass::mixed}};
    ingest::IngestReport report = ingest::run_ingest("", overrides, dest.path(), opt);

    // p2 has no override and stays excluded, so only p1's episodes are pulled
    REQUIRE(report.episodes.size() == 2);
    CHECK(report.episodes[0].episode_id == "p1e1");
    CHECK(report.episodes[1].episode_id == "p1e2");
    CHECK(report.episodes[0].language_class == LanguageClass::swiss);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("ghost") != std::string::npos);

    std::string index_one = read_text_file(dest / "episodes.jsonl");
    CHECK(index_one.find("\"audio_path\":\"audio/p1e1.wav\"") != std::string::npos);

    SUBCASE("a second run transfers nothing and writes identical bytes") {
        ingest::IngestReport again = ingest::run_ingest("", overrides, dest.path(), opt);
        CHECK(again.episodes.size() == 2);
        CHECK(read_text_file(dest / "episodes.jsonl") == index_one);
    }
    SUBCASE("include_excluded pulls the unclassified podcast too") {
        ingest::IngestOptions all = opt;
        all.include_excluded = true;
        TempDir dest2;
        ingest::IngestReport full = ingest::run_ingest("", overrides, dest2.path(), all);
        CHECK(full.episodes.size() == 3);
    }
    SUBCASE("the index file round-trips") {
        auto episodes = ingest::read_episode_index(dest / "episodes.jsonl");
        REQUIRE(episodes.size() == 2);
        CHECK(episodes[0].episode_id == "p1e1");
        CHECK(episodes[0].duration_ms == 3000);
        CHECK(episodes[0].language_class == LanguageClass::swiss);
        // stored relative, resolved against the index directory
        CHECK(std::filesystem::path(episodes[0].audio_path).is_absolute());
        CHECK(audio::read_wav(episodes[0].audio_path).sample_rate_hz == 16000);
    }
}

TEST_CASE("http ingest honors auth, ranges, and resume") {
    TempDir media;
    TempDir dest;
    audio::write_wav(make_sine(2.0, 220.0), media / "p1e1.wav");
    audio::write_wav(make_sine(2.5, 300.0), media / "p1e2.wav");
    audio::write_wav(make_sine(2.0, 440.0), media / "p2e1.wav");
    std::string catalog = kCatalogBody;

    std::atomic<int> range_requests{0};
    std::atomic<bool> auth_seen{false};
    httplib::Server server;
    server.Get("/catalog.json", [&](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("Authorization") == "Bearer sesame") auth_seen = true;
        res.set_content(catalog, "application/json");
    });
    server.Get(R"(/(p\de\d\.wav))", [&](const httplib::Request& req, httplib::Response& res) {
        if (req.has_header("Range")) ++range_requests;
        res.set_content(read_text_file(media / req.matches[1].str()), "audio/wav");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ingest::IngestOptions opt;
    opt.http.auth = "sesame";
    opt.http.retry.backoff_s = {0.0};
    opt.download.retry.backoff_s = {0.0, 0.0, 0.0};
    opt.download.max_bytes_per_attempt = 30000;  // force ranged resumes
    opt.max_parallel = 2;
    std::string endpoint = "http://127.0.0.1:" + std::to_string(port) + "/catalog.json";
    std::map<std::string, LanguageClass> overrides = {{"p1", LanguageClass::swiss},
                                                      {"p2", LanguageClass::mixed}};
    ingest::IngestReport report = ingest::run_ingest(endpoint, overrides, dest.path(), opt);

    server.stop();
    server_thread.join();

    REQUIRE(report.episodes.size() == 3);
    CHECK(report.episodes[0].episode_id == "p1e1");
    CHECK(report.episodes[2].episode_id == "p2e1");
    CHECK(auth_seen.load());
    CHECK(range_requests.load() > 0);  // at least one resume used a Range request
    for (const Episode& ep : report.episodes) {
        CHECK(audio::read_wav(ep.audio_path).samples.size() > 0);
    }
}

TEST_CASE("episode index reader reports bad lines") {
    TempDir dir;
    SUBCASE("invalid json names the line") {
        write_text_file(dir / "e.jsonl",
                        "{\"episode_id\":\"e1\",\"podcast_id\":\"p\",\"audio_path\":\"a.wav\","
                        "\"duration_s\":2.000,\"sample_rate_hz\":16000,"
                        "\"language_class\":\"swiss\"}\n"
                        "{oops\n");
        CHECK_THROWS_WITH_AS((void)ingest::read_episode_index(dir / "e.jsonl"),
                             doctest::Contains("line 2"), DataError);
    }
    SUBCASE("missing field names the line") {
        write_text_file(dir / "e.jsonl", "{\"episode_id\":\"e1\"}\n");
        CHECK_THROWS_WITH_AS((void)ingest::read_episode_index(dir / "e.jsonl"),
                             doctest::Contains("line 1"), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS((void)ingest::read_episode_index(dir / "absent.jsonl"), DataError);
    }
}

TEST_SUITE_END();
