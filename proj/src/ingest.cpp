#include "dialektpipe/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dialektpipe/audio.hpp"
#include "dialektpipe/errors.hpp"
#include "dialektpipe/util.hpp"

namespace dialektpipe::ingest {

using nlohmann::json;

namespace {

std::string quote(std::string_view s) { return json(s).dump(); }

std::string require_entry_string(const json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string()) {
        throw DataError("catalog: " + where + " is missing string field '" + field + "'");
    }
    return it->get<std::string>();
}

// "http://h:p/dir/catalog.json" + "ep.wav" -> "http://h:p/dir/ep.wav"
std::string resolve_media_url(const std::string& endpoint, const std::string& media) {
    if (media.rfind("http://", 0) == 0) return media;
    auto url = parse_http_url(endpoint);
    if (!url) return media;
    std::string origin = "http://" + url->host + ":" + std::to_string(url->port);
    if (!media.empty() && media.front() == '/') return origin + media;
    std::string dir = url->path;
    auto slash = dir.rfind('/');
    dir = slash == std::string::npos ? "/" : dir.substr(0, slash + 1);
    return origin + dir + media;
}

void sleep_s(double seconds) {
    if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

}  // namespace

std::vector<PodcastMeta> parse_catalog_json(const std::string& body) {
    json root = json::parse(body, nullptr, false);
    if (root.is_discarded()) throw DataError("catalog: body is not valid JSON");
    if (!root.is_array()) throw DataError("catalog: expected a JSON array of podcasts");

    std::vector<PodcastMeta> catalog;
    std::set<std::string> podcast_ids;
    std::set<std::string> episode_ids;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& entry = root[i];
        std::string where = "entry " + std::to_string(i);
        if (!entry.is_object()) throw DataError("catalog: " + where + " is not an object");

        PodcastMeta meta;
        meta.podcast_id = require_entry_string(entry, "podcast_id", where);
        meta.title = require_entry_string(entry, "title", where);
        auto count_it = entry.find("episode_count");
        if (count_it == entry.end() || !count_it->is_number_integer() ||
            count_it->get<int>() < 0) {
            throw DataError("catalog: " + where +
                            " is missing non-negative integer field 'episode_count'");
        }
        meta.episode_count = count_it->get<int>();
        auto eps_it = entry.find("episodes");
        if (eps_it == entry.end() || !eps_it->is_array()) {
            throw DataError("catalog: " + where + " is missing array field 'episodes'");
        }
        for (std::size_t j = 0; j < eps_it->size(); ++j) {
            const json& ep = (*eps_it)[j];
            std::string ep_where = where + " episode " + std::to_string(j);
            if (!ep.is_object()) throw DataError("catalog: " + ep_where + " is not an object");
            EpisodeRef ref;
            ref.episode_id = require_entry_string(ep, "episode_id", ep_where);
            ref.media_url = require_entry_string(ep, "media_url", ep_where);
            if (!episode_ids.insert(ref.episode_id).second) {
                throw DataError("catalog: duplicate episode_id '" + ref.episode_id + "'");
            }
            meta.episodes.push_back(std::move(ref));
        }
        if (meta.episode_count != static_cast<int>(meta.episodes.size())) {
            throw DataError("catalog: " + where + " field 'episode_count' is " +
                            std::to_string(meta.episode_count) + " but lists " +
                            std::to_string(meta.episodes.size()) + " episodes");
        }
        if (!podcast_ids.insert(meta.podcast_id).second) {
            throw DataError("catalog: duplicate podcast_id '" + meta.podcast_id + "'");
        }
        catalog.push_back(std::move(meta));
    }
    std::sort(catalog.begin(), catalog.end(),
              [](const PodcastMeta& a, const PodcastMeta& b) {
                  return a.podcast_id < b.podcast_id;
              });
    return catalog;
}

std::vector<PodcastMeta> fetch_catalog(const std::string& endpoint, const HttpOptions& options) {
    auto url = parse_http_url(endpoint);
    if (!url) throw ConfigError("catalog endpoint is not a valid http:// URL: " + endpoint);

    std::string last_error;
    for (int attempt = 0; attempt < options.retry.attempts(); ++attempt) {
        if (attempt > 0) sleep_s(options.retry.backoff_s[attempt - 1]);
        httplib::Client client(url->host, url->port);
        auto timeout = std::chrono::milliseconds(static_cast<long long>(options.timeout_s * 1000));
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        httplib::Headers headers;
        if (!options.auth.empty()) headers.emplace("Authorization", "Bearer " + options.auth);

        auto res = client.Get(url->path, headers);
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        std::vector<PodcastMeta> catalog = parse_catalog_json(res->body);
        for (PodcastMeta& meta : catalog) {
            for (EpisodeRef& ref : meta.episodes) {
                ref.media_url = resolve_media_url(endpoint, ref.media_url);
            }
        }
        return catalog;
    }
    throw BackendError("catalog fetch from " + endpoint + " failed after " +
                       std::to_string(options.retry.attempts()) + " attempts: " + last_error);
}

std::vector<PodcastMeta> load_local_catalog(const std::filesystem::path& dir) {
    return parse_catalog_json(read_text_file(dir / "catalog.json"));
}

std::map<std::string, LanguageClass> read_override_table(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::map<std::string, LanguageClass> overrides;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("override table " + path.string() + " line " +
                            std::to_string(line_no) + ": expected podcast_id<TAB>class");
        }
        std::string id = trim(line.substr(0, tab));
        auto cls = parse_language_class(trim(line.substr(tab + 1)));
        if (id.empty() || !cls) {
            throw DataError("override table " + path.string() + " line " +
                            std::to_string(line_no) + ": unknown language class");
        }
        overrides[id] = *cls;
    }
    return overrides;
}

std::vector<PodcastMeta> apply_overrides(std::vector<PodcastMeta> catalog,
                                         const std::map<std::string, LanguageClass>& overrides,
                                         std::vector<std::string>* warnings) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < catalog.size(); ++i) index[catalog[i].podcast_id] = i;
    for (const auto& [id, cls] : overrides) {
        auto it = index.find(id);
        if (it == index.end()) {
            if (warnings) {
                warnings->push_back("override for unknown podcast '" + id + "' ignored");
            }
            continue;
        }
        catalog[it->second].language_class = cls;
    }
    return catalog;
}

// ---------------------------------------------------------------------------
// Episode download

namespace {

struct AttemptOutcome {
    bool complete = false;
    bool made_progress = false;
    std::string error;
};

// One transfer attempt appending to part_path from the given offset.
AttemptOutcome attempt_http(const std::string& media_url,
                            const std::filesystem::path& part_path, std::int64_t offset,
                            const DownloadOptions& options) {
    AttemptOutcome out;
    auto url = parse_http_url(media_url);
    if (!url) {
        out.error = "not a valid http:// URL: " + media_url;
        return out;
    }
    httplib::Client client(url->host, url->port);
    auto timeout = std::chrono::milliseconds(static_cast<long long>(options.timeout_s * 1000));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);

    httplib::Headers headers;
    if (offset > 0) headers.emplace("Range", "bytes=" + std::to_string(offset) + "-");

    std::ofstream file;
    std::int64_t written = 0;
    bool limiter_hit = false;
    bool bad_status = false;
    int status_seen = 0;

    auto res = client.Get(
        url->path, headers,
        [&](const httplib::Response& response) {
            status_seen = response.status;
            if (response.status == 206) {
                file.open(part_path, std::ios::binary | std::ios::app);
            } else if (response.status == 200) {
                // Server ignored the range request: start over.
                file.open(part_path, std::ios::binary | std::ios::trunc);
                offset = 0;
            } else {
                bad_status = true;
                return false;
            }
            return static_cast<bool>(file);
        },
        [&](const char* data, std::size_t len) {
            if (options.max_bytes_per_attempt &&
                written + static_cast<std::int64_t>(len) > *options.max_bytes_per_attempt) {
                len = static_cast<std::size_t>(
                    std::max<std::int64_t>(0, *options.max_bytes_per_attempt - written));
                file.write(data, static_cast<std::streamsize>(len));
                written += static_cast<std::int64_t>(len);
                limiter_hit = true;
                return false;
            }
            file.write(data, static_cast<std::streamsize>(len));
            written += static_cast<std::int64_t>(len);
            return true;
        });
    if (file.is_open()) file.close();
    out.made_progress = written > 0;

    if (bad_status) {
        out.error = "http status " + std::to_string(status_seen);
        return out;
    }
    if (limiter_hit) {
        out.error = "transfer interrupted after " + std::to_string(written) + " bytes";
        return out;
    }
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.complete = true;
    return out;
}

AttemptOutcome attempt_local(const std::filesystem::path& source,
                             const std::filesystem::path& part_path, std::int64_t offset,
                             const DownloadOptions& options) {
    AttemptOutcome out;
    std::ifstream in(source, std::ios::binary);
    if (!in) {
        out.error = "media file not found: " + source.string();
        return out;
    }
    in.seekg(offset);
    std::ofstream file(part_path, std::ios::binary | (offset > 0 ? std::ios::app : std::ios::trunc));
    if (!file) {
        out.error = "cannot open " + part_path.string();
        return out;
    }
    char buf[65536];
    std::int64_t written = 0;
    for (;;) {
        in.read(buf, sizeof buf);
        std::streamsize n = in.gcount();
        if (n <= 0) break;
        if (options.max_bytes_per_attempt && written + n > *options.max_bytes_per_attempt) {
            n = static_cast<std::streamsize>(*options.max_bytes_per_attempt - written);
            file.write(buf, n);
            written += n;
            out.made_progress = written > 0;
            out.error = "transfer interrupted after " + std::to_string(written) + " bytes";
            return out;
        }
        file.write(buf, n);
        written += n;
    }
    out.made_progress = written > 0;
    out.complete = true;
    return out;
}

std::string sniff_codec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[12] = {};
    in.read(magic, sizeof magic);
    if (in.gcount() >= 12 && std::memcmp(magic, "RIFF", 4) == 0 &&
        std::memcmp(magic + 8, "WAVE", 4) == 0) {
        return "wav";
    }
    if (in.gcount() >= 3 && std::memcmp(magic, "ID3", 3) == 0) return "mp3";
    if (in.gcount() >= 2 && static_cast<unsigned char>(magic[0]) == 0xFF &&
        (static_cast<unsigned char>(magic[1]) & 0xE0) == 0xE0) {
        return "mp3";
    }
    if (in.gcount() >= 4 && std::memcmp(magic, "OggS", 4) == 0) return "ogg";
    if (in.gcount() >= 4 && std::memcmp(magic, "fLaC", 4) == 0) return "flac";
    return "unknown";
}

Episode episode_from_wav(const std::string& episode_id, const std::string& podcast_id,
                         const std::filesystem::path& wav_path) {
    audio::AudioBuffer buf = audio::read_wav(wav_path);
    Episode ep;
    ep.episode_id = episode_id;
    ep.podcast_id = podcast_id;
    ep.audio_path = wav_path;
    ep.duration_ms = buf.duration_ms();
    ep.sample_rate_hz = buf.sample_rate_hz;
    return ep;
}

}  // namespace

Episode download_episode(const EpisodeRef& ref, const std::string& podcast_id,
                         const std::filesystem::path& dest_dir,
                         const DownloadOptions& options) {
    std::filesystem::create_directories(dest_dir);
    std::filesystem::path dest = dest_dir / (ref.episode_id + ".wav");
    std::filesystem::path part = dest_dir / (ref.episode_id + ".wav.part");
    std::filesystem::path sha_file = dest_dir / (ref.episode_id + ".sha256");

    // Complete and verified: nothing to transfer.
    if (std::filesystem::exists(dest) && std::filesystem::exists(sha_file)) {
        std::string recorded = trim(read_text_file(sha_file));
        if (recorded == sha256_file_hex(dest)) {
            return episode_from_wav(ref.episode_id, podcast_id, dest);
        }
        std::filesystem::remove(dest);
        std::filesystem::remove(sha_file);
    }

    bool local = options.local_root && ref.media_url.rfind("http://", 0) != 0;
    std::filesystem::path local_source =
        local ? *options.local_root / ref.media_url : std::filesystem::path();

    // The raw stream lands in the .part file, resuming at its current size.
    // A parse failure afterwards restarts once from scratch in case a resume
    // glued together mismatched halves.
    for (int round = 0; round < 2; ++round) {
        std::string last_error = "no attempts made";
        bool complete = false;
        for (int attempt = 0; attempt < options.retry.attempts(); ++attempt) {
            if (attempt > 0) sleep_s(options.retry.backoff_s[attempt - 1]);
            std::int64_t offset = 0;
            if (std::filesystem::exists(part)) {
                offset = static_cast<std::int64_t>(std::filesystem::file_size(part));
            }
            AttemptOutcome outcome =
                local ? attempt_local(local_source, part, offset, options)
                      : attempt_http(ref.media_url, part, offset, options);
            if (outcome.complete) {
                complete = true;
                break;
            }
            last_error = outcome.error;
        }
        if (!complete) {
            throw BackendError("download of episode '" + ref.episode_id + "' failed after " +
                               std::to_string(options.retry.attempts()) +
                               " attempts: " + last_error);
        }

        std::string codec = sniff_codec(part);
        if (codec != "wav") {
            std::filesystem::remove(part);
            throw DataError("episode '" + ref.episode_id + "' uses unsupported codec '" +
                            codec + "', expected WAV PCM");
        }
        try {
            audio::AudioBuffer buf = audio::read_wav_downmix(part);
            write_wav(buf, dest);
        } catch (const DataError&) {
            std::filesystem::remove(part);
            if (round == 0) continue;  // fresh attempt, then give up
            throw;
        }
        std::filesystem::remove(part);
        atomic_write_text_file(sha_file, sha256_file_hex(dest) + "\n");
        return episode_from_wav(ref.episode_id, podcast_id, dest);
    }
    throw DataError("episode '" + ref.episode_id + "' could not be decoded");
}

// ---------------------------------------------------------------------------

IngestReport run_ingest(const std::string& endpoint,
                        const std::map<std::string, LanguageClass>& overrides,
                        const std::filesystem::path& dest_dir, const IngestOptions& options) {
    IngestReport report;
    std::vector<PodcastMeta> catalog =
        options.download.local_root ? load_local_catalog(*options.download.local_root)
                                    : fetch_catalog(endpoint, options.http);
    report.catalog = apply_overrides(std::move(catalog), overrides, &report.warnings);

    struct Job {
        const PodcastMeta* podcast;
        const EpisodeRef* ref;
    };
    std::vector<Job> jobs;
    for (const PodcastMeta& meta : report.catalog) {
        if (meta.language_class == LanguageClass::excluded && !options.include_excluded) {
            continue;
        }
        for (const EpisodeRef& ref : meta.episodes) jobs.push_back({&meta, &ref});
    }

    std::vector<Episode> episodes(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (!stop.load()) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            try {
                Episode ep = download_episode(*jobs[i].ref, jobs[i].podcast->podcast_id,
                                              dest_dir / "audio", options.download);
                ep.language_class = jobs[i].podcast->language_class;
                episodes[i] = std::move(ep);
            } catch (...) {
                {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
                stop = true;
                break;
            }
        }
    };
    std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, options.max_parallel)),
                              jobs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::sort(episodes.begin(), episodes.end(), [](const Episode& a, const Episode& b) {
        return std::tie(a.podcast_id, a.episode_id) < std::tie(b.podcast_id, b.episode_id);
    });
    report.episodes = std::move(episodes);
    write_episode_index(report.episodes, dest_dir / "episodes.jsonl");
    return report;
}

void write_episode_index(const std::vector<Episode>& episodes,
                         const std::filesystem::path& path) {
    std::filesystem::path base = path.parent_path();
    std::ostringstream out;
    for (const Episode& ep : episodes) {
        std::filesystem::path rel = std::filesystem::path(ep.audio_path).lexically_relative(base);
        if (rel.empty() || rel.string().rfind("..", 0) == 0) rel = ep.audio_path;
        out << "{\"episode_id\":" << quote(ep.episode_id)
            << ",\"podcast_id\":" << quote(ep.podcast_id)
            << ",\"audio_path\":" << quote(rel.generic_string())
            << ",\"duration_s\":" << format_ms_as_seconds(ep.duration_ms)
            << ",\"sample_rate_hz\":" << ep.sample_rate_hz << ",\"language_class\":"
            << quote(language_class_name(ep.language_class)) << "}\n";
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    atomic_write_text_file(path, out.str());
}

std::vector<Episode> read_episode_index(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::filesystem::path base = path.parent_path();
    std::vector<Episode> episodes;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            throw DataError("episode index " + path.string() + " line " +
                            std::to_string(line_no) + ": invalid JSON");
        }
        try {
            Episode ep;
            ep.episode_id = obj.at("episode_id").get<std::string>();
            ep.podcast_id = obj.at("podcast_id").get<std::string>();
            std::filesystem::path rel = obj.at("audio_path").get<std::string>();
            ep.audio_path = rel.is_absolute() ? rel : base / rel;
            ep.duration_ms = seconds_to_ms(obj.at("duration_s").get<double>());
            ep.sample_rate_hz = obj.at("sample_rate_hz").get<int>();
            auto cls = parse_language_class(obj.at("language_class").get<std::string>());
            if (!cls) throw DataError("unknown language class");
            ep.language_class = *cls;
            if (!ep.valid()) throw DataError("invalid episode record");
            episodes.push_back(std::move(ep));
        } catch (const json::exception& e) {
            throw DataError("episode index " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
    }
    return episodes;
}

}  // namespace dialektpipe::ingest
