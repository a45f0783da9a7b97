#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/rng.hpp"
#include "prband/version.hpp"

namespace prband {

enum class Origin { Real, Generated };

/// Ordered collection of d-dimensional points with provenance.
struct SampleSet {
    int dim = 2;
    Origin origin = Origin::Real;
    std::string model_id;  // empty for real data
    std::vector<double> data;  // row-major, size() * dim

    std::size_t size() const { return dim > 0 ? data.size() / static_cast<std::size_t>(dim) : 0; }

    std::span<const double> point(std::size_t i) const {
        return {data.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    void push(std::span<const double> p) {
        if (static_cast<int>(p.size()) != dim)
            throw std::invalid_argument("SampleSet::push: dimension mismatch");
        data.insert(data.end(), p.begin(), p.end());
    }

    std::string label() const { return origin == Origin::Real ? "real" : "generated:" + model_id; }
};

struct RingConfig {
    std::int64_t n_samples = 20000;
    int n_clusters = 8;
    double radius = 5.0;
    std::vector<double> cluster_stds;  // empty -> defaults
    double truncation = 3.0;
    std::uint64_t seed = 0;
};

/// Evenly ramped spreads, 0.30 .. 0.65 for eight clusters.
inline std::vector<double> default_cluster_stds(int n_clusters) {
    std::vector<double> stds(static_cast<std::size_t>(n_clusters));
    for (int k = 0; k < n_clusters; ++k)
        stds[static_cast<std::size_t>(k)] =
            n_clusters > 1 ? 0.30 + 0.35 * static_cast<double>(k) / (n_clusters - 1) : 0.30;
    return stds;
}

inline std::vector<double> resolved_cluster_stds(const RingConfig& cfg) {
    return cfg.cluster_stds.empty() ? default_cluster_stds(cfg.n_clusters) : cfg.cluster_stds;
}

inline void validate(const RingConfig& cfg) {
    if (cfg.n_samples <= 0) throw std::invalid_argument("RingConfig: n_samples must be positive");
    if (cfg.n_clusters < 1) throw std::invalid_argument("RingConfig: n_clusters must be >= 1");
    if (!(cfg.radius > 0)) throw std::invalid_argument("RingConfig: radius must be positive");
    if (!(cfg.truncation > 0)) throw std::invalid_argument("RingConfig: truncation must be positive");
    const auto stds = resolved_cluster_stds(cfg);
    if (static_cast<int>(stds.size()) != cfg.n_clusters)
        throw std::invalid_argument("RingConfig: cluster_stds length must equal n_clusters");
    for (double s : stds)
        if (!(s > 0)) throw std::invalid_argument("RingConfig: all cluster stds must be positive");
}

/// Scaled Euclidean distance; the cluster covariances are isotropic sigma^2*I,
/// so the Mahalanobis distance reduces to |p - mean| / sigma.
inline double mahalanobis(std::span<const double> point, std::span<const double> mean, double std) {
    if (!(std > 0)) throw std::invalid_argument("mahalanobis: std must be positive");
    if (point.size() != mean.size()) throw std::invalid_argument("mahalanobis: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double d = point[i] - mean[i];
        s += d * d;
    }
    return std::sqrt(s) / std;
}

struct RingDataset {
    SampleSet samples;
    std::vector<std::int32_t> cluster_of;  // per accepted point
    std::uint64_t draws = 0;               // raw Gaussian draws, incl. rejected
    std::uint64_t rejections = 0;
    RingConfig config;
};

/// Truncated Gaussian ring. Cluster k sits at angle 2*pi*k/n on a circle of
/// the configured radius; each point picks a cluster uniformly at random and
/// redraws until it falls within `truncation` standard deviations of the
/// cluster mean.
inline RingDataset generate_ring(const RingConfig& cfg) {
    validate(cfg);
    const auto stds = resolved_cluster_stds(cfg);
    const double two_pi = 6.283185307179586476925286766559;

    std::vector<double> mean_x(stds.size()), mean_y(stds.size());
    for (int k = 0; k < cfg.n_clusters; ++k) {
        const double ang = two_pi * k / cfg.n_clusters;
        mean_x[static_cast<std::size_t>(k)] = cfg.radius * std::cos(ang);
        mean_y[static_cast<std::size_t>(k)] = cfg.radius * std::sin(ang);
    }

    RingDataset out;
    out.config = cfg;
    out.samples.dim = 2;
    out.samples.origin = Origin::Real;
    out.samples.data.reserve(static_cast<std::size_t>(cfg.n_samples) * 2);
    out.cluster_of.reserve(static_cast<std::size_t>(cfg.n_samples));

    Rng rng(cfg.seed);
    for (std::int64_t i = 0; i < cfg.n_samples; ++i) {
        const auto k = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.n_clusters)));
        const double sigma = stds[k];
        for (;;) {
            ++out.draws;
            const double dx = rng.normal();
            const double dy = rng.normal();
            if (dx * dx + dy * dy > cfg.truncation * cfg.truncation) {
                ++out.rejections;
                continue;
            }
            const double p[2] = {mean_x[k] + sigma * dx, mean_y[k] + sigma * dy};
            out.samples.push(p);
            out.cluster_of.push_back(static_cast<std::int32_t>(k));
            break;
        }
    }
    return out;
}

/// Disjoint partition by shuffled indices. Train size is round-half-up of
/// n * train_fraction.
inline std::pair<SampleSet, SampleSet> split(const SampleSet& set, double train_fraction,
                                             std::uint64_t seed) {
    if (set.size() == 0) throw std::invalid_argument("split: empty input");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");

    const std::size_t n = set.size();
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * train_fraction + 0.5));

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    SampleSet train, valid;
    train.dim = valid.dim = set.dim;
    train.origin = valid.origin = set.origin;
    train.model_id = valid.model_id = set.model_id;
    for (std::size_t i = 0; i < n; ++i)
        (i < n_train ? train : valid).push(set.point(idx[i]));
    return {std::move(train), std::move(valid)};
}

// ---------------------------------------------------------------------------
// CSV persistence. Header "x0,x1,...", one point per row, 17 significant
// digits so that write -> read round-trips bit-exactly.

inline void write_csv(const SampleSet& set, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open " + path.string());
    for (int d = 0; d < set.dim; ++d) f << (d ? ",x" : "x") << d;
    f << '\n';
    char buf[32];
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto p = set.point(i);
        for (int d = 0; d < set.dim; ++d) {
            std::snprintf(buf, sizeof buf, "%.17g", p[static_cast<std::size_t>(d)]);
            f << (d ? "," : "") << buf;
        }
        f << '\n';
    }
    if (!f) throw std::runtime_error("write_csv: write failed for " + path.string());
}

inline SampleSet read_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line.empty())
        throw std::runtime_error("read_csv: " + path.string() + " is empty or has no header");

    int dim = 1;
    for (char c : line)
        if (c == ',') ++dim;

    SampleSet set;
    set.dim = dim;
    std::size_t line_no = 1;
    std::vector<double> row(static_cast<std::size_t>(dim));
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t pos = 0;
        for (int d = 0; d < dim; ++d) {
            std::size_t next = line.find(',', pos);
            const std::string field =
                line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            try {
                std::size_t used = 0;
                row[static_cast<std::size_t>(d)] = std::stod(field, &used);
                if (used != field.size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv: " + path.string() + " line " +
                                         std::to_string(line_no) + ": bad field '" + field + "'");
            }
            if (next == std::string::npos) {
                if (d + 1 != dim)
                    throw std::runtime_error("read_csv: " + path.string() + " line " +
                                             std::to_string(line_no) + ": expected " +
                                             std::to_string(dim) + " fields, got " +
                                             std::to_string(d + 1));
                pos = line.size();
            } else {
                if (d + 1 == dim)
                    throw std::runtime_error("read_csv: " + path.string() + " line " +
                                             std::to_string(line_no) + ": expected " +
                                             std::to_string(dim) + " fields, got more");
                pos = next + 1;
            }
        }
        set.data.insert(set.data.end(), row.begin(), row.end());
    }
    if (set.data.empty())
        throw std::runtime_error("read_csv: " + path.string() + " has no data rows");
    return set;
}

inline nlohmann::json dataset_manifest_json(const RingConfig& cfg) {
    return nlohmann::json{{"n_samples", cfg.n_samples},
                          {"n_clusters", cfg.n_clusters},
                          {"radius", cfg.radius},
                          {"cluster_stds", resolved_cluster_stds(cfg)},
                          {"truncation", cfg.truncation},
                          {"seed", cfg.seed},
                          {"created_by_version", kVersion}};
}

inline void write_dataset_manifest(const RingConfig& cfg, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_dataset_manifest: cannot open " + path.string());
    f << dataset_manifest_json(cfg).dump(2) << '\n';
}

}  // namespace prband
