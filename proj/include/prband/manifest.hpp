#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/ensemble.hpp"
#include "prband/sha256.hpp"
#include "prband/version.hpp"

namespace prband {

struct ArtifactEntry {
    std::string sha256;
    std::string stage;
    bool deterministic = true;  // logs carry wall-clock noise and opt out
};

struct FailedMember {
    std::string group;
    int member = 0;
    std::string error;
};

/// Record of everything a run produced: per-artifact hashes keyed by path
/// relative to the run directory, derived member seeds, and stage timings.
/// The deterministic part of two manifests from identical configs must match
/// byte for byte.
struct RunManifest {
    int schema_version = 1;
    std::string created_by_version = kVersion;
    std::string config_hash;
    std::uint64_t base_seed = 0;
    std::map<std::string, ArtifactEntry> artifacts;
    std::map<std::string, std::uint64_t> member_seeds;
    std::map<std::string, double> stage_wall_ms;
    std::vector<FailedMember> failed_members;

    /// Key/hash pairs for artifacts that must reproduce across runs.
    std::map<std::string, std::string> deterministic_hashes() const {
        std::map<std::string, std::string> out;
        for (const auto& [path, entry] : artifacts)
            if (entry.deterministic) out[path] = entry.sha256;
        return out;
    }
};

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [path, e] : m.artifacts)
        artifacts[path] = {{"sha256", e.sha256}, {"stage", e.stage}, {"deterministic", e.deterministic}};
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& f : m.failed_members)
        failed.push_back({{"group", f.group}, {"member", f.member}, {"error", f.error}});
    return nlohmann::json{{"schema_version", m.schema_version},
                          {"created_by_version", m.created_by_version},
                          {"config_hash", m.config_hash},
                          {"base_seed", m.base_seed},
                          {"artifacts", artifacts},
                          {"member_seeds", m.member_seeds},
                          {"stage_wall_ms", m.stage_wall_ms},
                          {"failed_members", failed}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    m.created_by_version = j.at("created_by_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    for (const auto& [path, e] : j.at("artifacts").items())
        m.artifacts[path] = ArtifactEntry{e.at("sha256").get<std::string>(),
                                          e.at("stage").get<std::string>(),
                                          e.at("deterministic").get<bool>()};
    m.member_seeds = j.at("member_seeds").get<std::map<std::string, std::uint64_t>>();
    m.stage_wall_ms = j.at("stage_wall_ms").get<std::map<std::string, double>>();
    for (const auto& f : j.at("failed_members"))
        m.failed_members.push_back(FailedMember{f.at("group").get<std::string>(),
                                                f.at("member").get<int>(),
                                                f.at("error").get<std::string>()});
    return m;
}

inline void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
    write_json(manifest_to_json(m), path);
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    return manifest_from_json(read_json(path));
}

struct VerifyResult {
    std::vector<std::string> missing;
    std::vector<std::string> mismatched;
    std::size_t checked = 0;
    bool ok() const { return missing.empty() && mismatched.empty(); }
};

/// Recomputes every listed artifact hash under run_dir.
inline VerifyResult verify_manifest(const RunManifest& m, const std::filesystem::path& run_dir) {
    VerifyResult r;
    for (const auto& [rel, entry] : m.artifacts) {
        const auto path = run_dir / rel;
        if (!std::filesystem::exists(path)) {
            r.missing.push_back(rel);
            continue;
        }
        ++r.checked;
        if (sha256_file(path) != entry.sha256) r.mismatched.push_back(rel);
    }
    return r;
}

}  // namespace prband
