#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace karmanet {

// FNV-1a 64-bit content hash; not cryptographic, used only so a manifest can
// witness that reruns produced identical artifacts.
inline std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
    char buf[17];
    static const char* hexd = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hexd[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf, 16);
}

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for hashing");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a64_hex(ss.str());
}

// Every CLI command drops one of these beside its outputs.
struct RunManifest {
    std::string command;
    nlohmann::json config;  // the effective merged configuration
    std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
    std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
    std::uint64_t seed = 0;
    double timing_s = 0.0;

    void add_input(const std::string& path) { inputs.emplace_back(path, file_hash(path)); }
    void add_output(const std::string& path) { outputs.emplace_back(path, file_hash(path)); }

    nlohmann::json to_json() const {
        auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& [p, h] : v) arr.push_back({{"path", p}, {"fnv1a64", h}});
            return arr;
        };
        return nlohmann::json{{"command", command}, {"config", config},
                              {"inputs", files(inputs)}, {"outputs", files(outputs)},
                              {"seed", seed},           {"timing_s", timing_s}};
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace karmanet
