#include "dialektpipe/manifest.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "dialektpipe/errors.hpp"

namespace dialektpipe {

namespace {

using nlohmann::json;

std::string quote(std::string_view s) { return json(s).dump(); }

[[noreturn]] void fail_line(std::size_t line_no, const std::string& msg) {
    throw DataError("manifest line " + std::to_string(line_no) + ": " + msg);
}

const json& require_field(const json& record, const char* key, std::size_t line_no) {
    auto it = record.find(key);
    if (it == record.end()) fail_line(line_no, std::string("missing field '") + key + "'");
    return *it;
}

std::string string_field(const json& record, const char* key, std::size_t line_no) {
    const json& v = require_field(record, key, line_no);
    if (!v.is_string()) fail_line(line_no, std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

Millis time_field(const json& record, const char* key, std::size_t line_no) {
    const json& v = require_field(record, key, line_no);
    if (!v.is_number()) fail_line(line_no, std::string("field '") + key + "' must be a number");
    double seconds = v.get<double>();
    if (seconds < 0) fail_line(line_no, std::string("field '") + key + "' must be >= 0");
    return seconds_to_ms(seconds);
}

}  // namespace

void Manifest::sort_records() {
    std::sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
        if (a.episode_id != b.episode_id) return a.episode_id < b.episode_id;
        if (a.start_ms != b.start_ms) return a.start_ms < b.start_ms;
        return a.segment_id < b.segment_id;
    });
}

void Manifest::validate() const {
    std::unordered_set<std::string> ids;
    ids.reserve(segments.size());
    const Segment* prev = nullptr;
    for (const Segment& s : segments) {
        if (s.segment_id.empty()) throw DataError("segment with empty segment_id");
        if (!ids.insert(s.segment_id).second) {
            throw DataError("duplicate segment_id: " + s.segment_id);
        }
        if (!segment_duration_ok(s.duration_ms())) {
            throw DataError("segment " + s.segment_id + ": duration " +
                            format_ms_as_seconds(s.duration_ms()) +
                            "s outside [2.000, 15.000]");
        }
        if (s.transcript && trim(*s.transcript).empty()) {
            throw DataError("segment " + s.segment_id + ": transcript present but empty");
        }
        if (prev != nullptr) {
            bool ordered = prev->episode_id < s.episode_id ||
                           (prev->episode_id == s.episode_id && prev->start_ms <= s.start_ms);
            if (!ordered) {
                throw DataError("segments not sorted by (episode_id, start_s) at segment " +
                                s.segment_id);
            }
        }
        prev = &s;
    }
}

bool Manifest::operator==(const Manifest& other) const {
    if (header.schema_version != other.header.schema_version ||
        header.created_utc != other.header.created_utc ||
        header.config_hash != other.header.config_hash ||
        segments.size() != other.segments.size()) {
        return false;
    }
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const Segment& a = segments[i];
        const Segment& b = other.segments[i];
        if (a.segment_id != b.segment_id || a.episode_id != b.episode_id ||
            a.podcast_id != b.podcast_id || a.speaker_tag != b.speaker_tag ||
            a.start_ms != b.start_ms || a.end_ms != b.end_ms || a.audio_path != b.audio_path ||
            a.transcript != b.transcript || a.dialect != b.dialect ||
            a.language_class != b.language_class) {
            return false;
        }
    }
    return true;
}

// Record lines are built by hand so that field order and number formatting
// are fixed; repeated serialization of one manifest is byte-identical.
std::string serialize_segment_line(const Segment& s) {
    std::string out;
    out.reserve(256);
    out += "{\"segment_id\":" + quote(s.segment_id);
    out += ",\"episode_id\":" + quote(s.episode_id);
    out += ",\"podcast_id\":" + quote(s.podcast_id);
    out += ",\"speaker_tag\":" + quote(s.speaker_tag);
    out += ",\"start_s\":" + format_ms_as_seconds(s.start_ms);
    out += ",\"end_s\":" + format_ms_as_seconds(s.end_ms);
    out += ",\"duration_s\":" + format_ms_as_seconds(s.duration_ms());
    out += ",\"audio_path\":" + quote(s.audio_path);
    out += ",\"transcript\":";
    out += s.transcript ? quote(*s.transcript) : "null";
    out += ",\"dialect\":";
    out += s.dialect ? quote(region_name(*s.dialect)) : "null";
    out += ",\"language_class\":";
    out += s.language_class ? quote(language_class_name(*s.language_class)) : "null";
    out += "}";
    return out;
}

std::string serialize_manifest(const Manifest& m) {
    std::string out;
    out.reserve(64 + m.segments.size() * 256);
    out += "{\"schema_version\":" + std::to_string(m.header.schema_version);
    out += ",\"created_utc\":" + quote(m.header.created_utc);
    out += ",\"config_hash\":" + quote(m.header.config_hash);
    out += "}\n";
    for (const Segment& s : m.segments) {
        out += serialize_segment_line(s);
        out += "\n";
    }
    return out;
}

Manifest parse_manifest(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) throw DataError("manifest is empty (header line required)");
    ++line_no;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        fail_line(line_no, std::string("header parse error: ") + e.what());
    }
    {
        const json& v = require_field(header, "schema_version", line_no);
        if (!v.is_number_integer()) fail_line(line_no, "field 'schema_version' must be an integer");
        m.header.schema_version = v.get<int>();
        if (m.header.schema_version != kManifestSchemaVersion) {
            fail_line(line_no, "unsupported schema_version " +
                                   std::to_string(m.header.schema_version));
        }
    }
    m.header.created_utc = string_field(header, "created_utc", line_no);
    m.header.config_hash = string_field(header, "config_hash", line_no);

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line(line_no, std::string("record parse error: ") + e.what());
        }
        Segment s;
        s.segment_id = string_field(rec, "segment_id", line_no);
        s.episode_id = string_field(rec, "episode_id", line_no);
        s.podcast_id = string_field(rec, "podcast_id", line_no);
        s.speaker_tag = string_field(rec, "speaker_tag", line_no);
        s.start_ms = time_field(rec, "start_s", line_no);
        s.end_ms = time_field(rec, "end_s", line_no);
        Millis duration = time_field(rec, "duration_s", line_no);
        if (duration != s.end_ms - s.start_ms) {
            fail_line(line_no, "field 'duration_s' (" + format_ms_as_seconds(duration) +
                                   ") does not equal end_s - start_s (" +
                                   format_ms_as_seconds(s.end_ms - s.start_ms) + ")");
        }
        s.audio_path = string_field(rec, "audio_path", line_no);

        const json& transcript = require_field(rec, "transcript", line_no);
        if (transcript.is_string()) {
            s.transcript = transcript.get<std::string>();
        } else if (!transcript.is_null()) {
            fail_line(line_no, "field 'transcript' must be a string or null");
        }
        const json& dialect = require_field(rec, "dialect", line_no);
        if (dialect.is_string()) {
            auto r = parse_region(dialect.get<std::string>());
            if (!r) fail_line(line_no, "unknown dialect '" + dialect.get<std::string>() + "'");
            s.dialect = *r;
        } else if (!dialect.is_null()) {
            fail_line(line_no, "field 'dialect' must be a string or null");
        }
        const json& lc = require_field(rec, "language_class", line_no);
        if (lc.is_string()) {
            auto c = parse_language_class(lc.get<std::string>());
            if (!c) fail_line(line_no, "unknown language_class '" + lc.get<std::string>() + "'");
            s.language_class = *c;
        } else if (!lc.is_null()) {
            fail_line(line_no, "field 'language_class' must be a string or null");
        }

        if (!segment_duration_ok(s.duration_ms())) {
            fail_line(line_no, "segment " + s.segment_id + ": duration " +
                                   format_ms_as_seconds(s.duration_ms()) +
                                   "s outside [2.000, 15.000]");
        }
        m.segments.push_back(std::move(s));
    }
    m.validate();
    return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
    return parse_manifest(read_text_file(path));
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
    m.validate();
    atomic_write_text_file(path, serialize_manifest(m));
}

}  // namespace dialektpipe
