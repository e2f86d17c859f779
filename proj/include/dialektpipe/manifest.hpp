#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dialektpipe/types.hpp"

namespace dialektpipe {

inline constexpr int kManifestSchemaVersion = 1;

struct ManifestHeader {
    int schema_version = kManifestSchemaVersion;
    std::string created_utc;  // ISO-8601
    std::string config_hash;  // provenance of the pipeline config
};

// Ordered collection of segments. Records are kept sorted by
// (episode_id, start, segment_id); segment ids are globally unique.
struct Manifest {
    ManifestHeader header;
    std::vector<Segment> segments;

    void sort_records();
    // Throws DataError on the first violated invariant (duration bounds,
    // duplicate id, unsorted order, empty transcript).
    void validate() const;

    bool operator==(const Manifest& other) const;
};

std::string serialize_manifest(const Manifest& m);
Manifest parse_manifest(const std::string& text);  // errors carry line numbers

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

// One serialized record line; used by streaming writers.
std::string serialize_segment_line(const Segment& s);

}  // namespace dialektpipe
