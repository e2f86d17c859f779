#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialektpipe/types.hpp"

namespace dialektpipe::ingest {

struct EpisodeRef {
    std::string episode_id;
    std::string media_url;  // absolute http:// URL or a path under the local root
};

struct PodcastMeta {
    std::string podcast_id;
    std::string title;
    int episode_count = 0;
    // Stays "excluded" until the human-authored override table classifies it.
    LanguageClass language_class = LanguageClass::excluded;
    std::vector<EpisodeRef> episodes;
};

// Bounded exponential backoff between download/fetch attempts: the first
// try is free, then one retry per backoff entry.
struct RetryPolicy {
    std::vector<double> backoff_s = {1.0, 4.0, 16.0};

    int attempts() const { return static_cast<int>(backoff_s.size()) + 1; }
};

struct HttpOptions {
    double timeout_s = 30.0;
    std::string auth;  // sent as a bearer token when non-empty
    RetryPolicy retry;
};

// Parses the catalog contract: a JSON array of
// {podcast_id, title, episode_count, episodes: [{episode_id, media_url}]}.
// Malformed entries raise DataError naming the offending field; duplicate
// podcast or episode ids are errors. Output is sorted by podcast_id.
std::vector<PodcastMeta> parse_catalog_json(const std::string& body);

std::vector<PodcastMeta> fetch_catalog(const std::string& endpoint,
                                       const HttpOptions& options = {});

// Reads DIR/catalog.json; media paths stay relative to DIR.
std::vector<PodcastMeta> load_local_catalog(const std::filesystem::path& dir);

// `podcast_id<TAB>language_class` lines; '#' comments and blanks skipped.
std::map<std::string, LanguageClass> read_override_table(const std::filesystem::path& path);

// Classified entries take the override, everything else stays excluded.
// Overrides naming unknown podcasts become warnings, never errors.
std::vector<PodcastMeta> apply_overrides(std::vector<PodcastMeta> catalog,
                                         const std::map<std::string, LanguageClass>& overrides,
                                         std::vector<std::string>* warnings = nullptr);

struct DownloadOptions {
    RetryPolicy retry;
    double timeout_s = 30.0;
    std::optional<std::filesystem::path> local_root;  // serve media from a directory
    // Fault injection: cut each receive attempt after this many bytes so
    // resume handling can be exercised.
    std::optional<std::int64_t> max_bytes_per_attempt;
};

// Downloads (or copies) one episode into dest_dir, normalizes it to mono
// 16-bit PCM WAV, and records its checksum. Interrupted transfers leave a
// .part file that the next call resumes; a complete file with a matching
// checksum is returned without any transfer.
Episode download_episode(const EpisodeRef& ref, const std::string& podcast_id,
                         const std::filesystem::path& dest_dir,
                         const DownloadOptions& options = {});

struct IngestOptions {
    HttpOptions http;
    DownloadOptions download;
    int max_parallel = 4;
    bool include_excluded = false;  // normally only classified podcasts are pulled
};

struct IngestReport {
    std::vector<PodcastMeta> catalog;
    std::vector<Episode> episodes;  // sorted by (podcast_id, episode_id)
    std::vector<std::string> warnings;
};

// Catalog fetch + overrides + episode downloads + episode index write.
// `endpoint` is an http:// URL unless options.download.local_root is set, in
// which case it is ignored and DIR/catalog.json is used.
IngestReport run_ingest(const std::string& endpoint,
                        const std::map<std::string, LanguageClass>& overrides,
                        const std::filesystem::path& dest_dir,
                        const IngestOptions& options = {});

// episodes.jsonl with paths relative to its directory, sorted and
// timestamp-free so repeated ingests are byte-identical.
void write_episode_index(const std::vector<Episode>& episodes,
                         const std::filesystem::path& path);
std::vector<Episode> read_episode_index(const std::filesystem::path& path);

}  // namespace dialektpipe::ingest
