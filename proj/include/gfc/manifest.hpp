#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/version.hpp"

namespace gfc {

namespace fs = std::filesystem;

// Content fingerprint for manifests (FNV-1a 64). Integrity marker, not
// cryptographic.
inline std::string content_hash(const std::string& bytes) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path.string());
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

inline std::string hash_file(const fs::path& path) { return content_hash(read_file(path)); }

// All output lands atomically: temp file in the same directory, then rename.
inline void atomic_write(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.parent_path() / (".tmp." + path.filename().string());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write file: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, path);
}

// Run manifest: command, arguments, and a content hash of every input and
// output file. A run can be replayed from it and must reproduce the outputs
// byte for byte.
struct Manifest {
    std::string command;
    uint64_t seed = 0;
    int threads = 1;
    json args = json::object();
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;

    void add_input(const std::string& label, const fs::path& path) {
        inputs[label + ":" + path.string()] = hash_file(path);
    }
    void add_output(const fs::path& path, const std::string& bytes) {
        outputs[path.filename().string()] = content_hash(bytes);
    }

    json to_json() const {
        json j;
        j["schema_version"] = kSchemaVersion;
        j["tool_version"] = kVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["threads"] = threads;
        j["args"] = args;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        return j;
    }

    static Manifest from_json(const json& j) {
        Manifest m;
        m.command = j.at("command").get<std::string>();
        m.seed = j.at("seed").get<uint64_t>();
        m.threads = j.value("threads", 1);
        m.args = j.value("args", json::object());
        if (j.contains("inputs"))
            for (auto it = j["inputs"].begin(); it != j["inputs"].end(); ++it)
                m.inputs[it.key()] = it.value().get<std::string>();
        if (j.contains("outputs"))
            for (auto it = j["outputs"].begin(); it != j["outputs"].end(); ++it)
                m.outputs[it.key()] = it.value().get<std::string>();
        return m;
    }
};

inline json parse_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    try {
        return json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

} // namespace gfc
