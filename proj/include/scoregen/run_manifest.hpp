#ifndef SCOREGEN_RUN_MANIFEST_HPP
#define SCOREGEN_RUN_MANIFEST_HPP

// Provenance record written alongside every artifact-producing run so a
// pipeline stage can be re-run and verified byte-for-byte: same inputs +
// seed + config => same outputs.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/version.hpp"

namespace scoregen {

struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();  // effective settings after flag merging
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version = kToolVersion;
    std::string vocab_hash;  // empty when the run involves no vocabulary
};

inline nlohmann::json run_manifest_to_json(const RunManifest& m) {
    return nlohmann::json{
        {"subcommand", m.subcommand}, {"config", m.config},   {"seed", m.seed},
        {"inputs", m.inputs},         {"outputs", m.outputs}, {"tool_version", m.tool_version},
        {"vocab_hash", m.vocab_hash},
    };
}

inline RunManifest run_manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.value("config", nlohmann::json::object());
    m.seed = j.value("seed", std::uint64_t{0});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.tool_version = j.value("tool_version", std::string{});
    m.vocab_hash = j.value("vocab_hash", std::string{});
    return m;
}

// Manifest lands next to the primary output: "<file>.run.json" for a file
// output, "<dir>/run.json" when the output is a directory.
inline std::string run_manifest_path_for(const std::string& primary_output, bool output_is_dir) {
    if (output_is_dir) {
        std::string p = primary_output;
        if (!p.empty() && p.back() != '/') p += '/';
        return p + "run.json";
    }
    return primary_output + ".run.json";
}

inline void write_run_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write run manifest: " + path);
    out << run_manifest_to_json(m).dump(2) << "\n";
    if (!out) throw IoError("short write on run manifest: " + path);
}

}  // namespace scoregen

#endif  // SCOREGEN_RUN_MANIFEST_HPP
