#pragma once

#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "menupred/errors.hpp"
#include "menupred/rng.hpp"
#include "menupred/version.hpp"

namespace menupred {

/// 16-hex-digit FNV-1a digest of a file's bytes, for manifest provenance.
inline std::string file_digest_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read input file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string bytes = buf.str();
    std::uint64_t h = fnv1a64(bytes);
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

/// A record of how a run was invoked: fully resolved configuration, input
/// digests, and the outputs the run is about to write. Deliberately carries
/// no clock or host state, so reruns produce identical manifests.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> input_digests;  // path -> digest
    std::vector<std::string> outputs;
};

inline nlohmann::json manifest_json(const RunManifest& m) {
    nlohmann::json j;
    j["artifact_version"] = kArtifactVersion;
    j["command"] = m.command;
    j["config"] = m.config;
    j["inputs"] = m.input_digests;
    j["outputs"] = m.outputs;
    return j;
}

inline void write_manifest(const RunManifest& m, std::ostream& out) {
    out << manifest_json(m).dump(2) << '\n';
}

}  // namespace menupred
