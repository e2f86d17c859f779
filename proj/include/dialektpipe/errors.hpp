#pragma once

#include <stdexcept>
#include <string>

namespace dialektpipe {

// Exit codes used by the CLI: 0 success, 1 data error, 2 config error,
// 3 backend error.
enum ExitCode {
    kExitOk = 0,
    kExitDataError = 1,
    kExitConfigError = 2,
    kExitBackendError = 3,
};

// Malformed or invariant-violating input data (manifests, RTTM, WAV, CSV).
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration, CLI usage, or workspace state.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A backend violated the wire protocol or became unusable. Per-item
// failures are data, not exceptions; this is for hard faults only.
class BackendError : public std::runtime_error {
  public:
    explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dialektpipe
