#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace synic {

// Content digest of a file (FNV-1a 64, hex). Throws DataError if unreadable.
std::string file_digest(const std::filesystem::path& path);

// Digest of a JSON value via its canonical dump.
std::string json_digest(const nlohmann::json& j);

// Provenance record written next to a command's artifacts. Everything except
// `duration_s` / `finished_at` is a pure function of the inputs, so artifacts
// themselves stay byte-identical across reruns; volatile fields live only
// here.
struct RunManifest {
    std::string command;                       // subcommand name
    std::vector<std::string> argv;             // raw command line
    nlohmann::json config;                     // resolved config after overrides
    std::map<std::string, std::string> inputs;   // label -> "path:digest"
    std::map<std::string, std::string> outputs;  // label -> path
    double duration_s = 0.0;
    std::string finished_at;  // UTC ISO-8601

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

// Current UTC time formatted as ISO-8601 with seconds.
std::string utc_timestamp();

}  // namespace synic
