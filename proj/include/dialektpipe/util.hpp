#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dialektpipe {

using Millis = std::int64_t;  // timestamps and durations, millisecond grain

// Decimal seconds <-> integer milliseconds. The manifest stores times as
// decimal seconds with exactly three fractional digits so that re-serialized
// files are byte-identical.
Millis seconds_to_ms(double seconds);
Millis parse_seconds_to_ms(std::string_view text);  // throws DataError
std::string format_ms_as_seconds(Millis ms);        // "12.345"
inline double ms_to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

// Fixed-decimal float formatting (std::format is unavailable on this
// toolchain baseline).
std::string format_fixed(double value, int decimals);

std::vector<std::string> split_whitespace(std::string_view text);
std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

// SHA-256 (FIPS 180-4). Used for content checksums, segment ids, and
// config hashes.
struct Sha256 {
    void update(const void* data, std::size_t len);
    void update(std::string_view text) { update(text.data(), text.size()); }
    std::string hex_digest();  // finalizes; 64 hex chars

  private:
    std::uint32_t state_[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                               0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    std::uint64_t bitlen_ = 0;
    unsigned char buffer_[64];
    std::size_t buffered_ = 0;
    bool finalized_ = false;
    void process_block(const unsigned char* block);
};

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);  // throws DataError

std::string read_text_file(const std::filesystem::path& path);   // throws DataError
void write_text_file(const std::filesystem::path& path, std::string_view content);
// Write to a sibling temp file then rename, so readers never observe a
// partially written file.
void atomic_write_text_file(const std::filesystem::path& path, std::string_view content);

std::optional<std::string> env_var(const char* name);

// ISO-8601 UTC timestamp. Honors SOURCE_DATE_EPOCH when set so that
// pipeline outputs can be made byte-reproducible.
std::string utc_timestamp_now();

struct HttpUrl {
    std::string host;
    int port = 80;
    std::string path = "/";  // includes any query string
};

// Splits a plain http:// URL; anything else yields nullopt.
std::optional<HttpUrl> parse_http_url(std::string_view url);

// Quotes a CSV field when it contains commas, quotes, or newlines.
std::string csv_quote(std::string_view field);
// Splits one CSV line honoring double-quote escaping.
std::vector<std::string> parse_csv_line(const std::string& line);

}  // namespace dialektpipe
