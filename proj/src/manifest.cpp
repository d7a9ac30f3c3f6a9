#include "synic/manifest.hpp"

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "synic/rng.hpp"
#include "synic/types.hpp"

namespace synic {

namespace {

std::string hex64(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file_digest: cannot open " + path.string());
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    return hex64(h);
}

std::string json_digest(const nlohmann::json& j) {
    const std::string s = j.dump();
    return hex64(fnv1a(s));
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["config_digest"] = json_digest(config);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["duration_s"] = duration_s;
    j["finished_at"] = finished_at;
    return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("manifest: cannot write " + path.string());
    out << to_json().dump(2) << "\n";
}

}  // namespace synic
