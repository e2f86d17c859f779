// Stdio wrapper around the deterministic stub backends: one JSON request
// per line on stdin, one response per line on stdout. Used as the
// subprocess-transport test double and as a protocol reference.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dialektpipe/errors.hpp"
#include "dialektpipe/stubs.hpp"
#include "dialektpipe/util.hpp"

using nlohmann::json;
namespace dp = dialektpipe;

int main(int argc, char** argv) {
    CLI::App app{"dialektpipe stub backend (newline-delimited JSON over stdio)"};
    dp::stubs::StubOptions opt;
    app.add_option("--seed", opt.seed, "deterministic seed");
    app.add_option("--fail-rate", opt.fail_rate, "per-id failure probability in [0, 1]");
    app.add_option("--fail-id", opt.fail_ids, "id that always fails (repeatable)");
    app.add_option("--delay-s", opt.delay_s, "artificial latency per request, seconds");
    app.add_option("--embed-dim", opt.embed_dim, "speaker embedding dimension");
    app.add_option("--sample-rate", opt.sample_rate_hz, "generated audio sample rate");
    app.add_option("--exit-after", opt.exit_after,
                   "exit abruptly after this many responses (crash simulation)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? dp::kExitOk : dp::kExitConfigError;
    }
    if (opt.fail_rate < 0.0 || opt.fail_rate > 1.0) {
        std::cerr << "stub backend: --fail-rate must be in [0, 1]\n";
        return dp::kExitConfigError;
    }

    long responded = 0;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (dp::trim(line).empty()) continue;
        json request = json::parse(line, nullptr, false);
        if (request.is_discarded()) {
            std::cerr << "stub backend: skipping malformed request line\n";
            continue;
        }
        json response;
        try {
            response = dp::stubs::handle_request(opt, request);
        } catch (const std::exception& e) {
            // Without a usable id there is no way to address a response.
            if (!request.is_object() || !request.contains("id") ||
                !request["id"].is_string()) {
                std::cerr << "stub backend: dropping unanswerable request: " << e.what()
                          << "\n";
                continue;
            }
            response = json{{"id", request["id"]}, {"ok", false}, {"error", e.what()}};
        }
        std::cout << response.dump() << "\n" << std::flush;
        ++responded;
        if (opt.exit_after >= 0 && responded >= opt.exit_after) {
            std::exit(0);  // mid-batch death, on purpose
        }
    }
    return dp::kExitOk;
}
