#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/dataset.hpp"
#include "prband/diffusion.hpp"
#include "prband/ensemble.hpp"
#include "prband/manifest.hpp"
#include "prband/prcurve.hpp"
#include "prband/svg.hpp"

namespace prband {

namespace fs = std::filesystem;

/// Raised for malformed configuration; the CLI maps it to exit code 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Configuration

struct TestSettings {
    bool two_sided = false;
    double level = 0.05;
    std::string correction = "holm";
    int permutation_resamples = 0;  // 0 disables the permutation alternative
};

struct EvalSettings {
    int k = 5;
    int n_phi = 500;
    std::int64_t n_generated = 0;  // 0 -> |validation set|
    double q_lo = 10.0;
    double q_hi = 90.0;
    TestSettings test;
};

struct TrainSettings {
    int batch_size = 512;
    double lr = 1e-3;
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    std::map<int, std::int64_t> epochs_by_depth;  // missing depth -> default_epochs
};

struct ExperimentConfig {
    int schema_version = 1;
    RingConfig dataset;
    std::vector<int> depths{1, 2, 4, 8};
    int ensemble_size = 30;
    TrainSettings train;
    EvalSettings eval;
    std::vector<std::int64_t> dataset_sizes;  // totals; non-empty -> size sweep
    std::uint64_t base_seed = 0;
    std::string output_dir = "runs/experiment";

    std::int64_t epochs_for(int depth) const {
        const auto it = train.epochs_by_depth.find(depth);
        return it != train.epochs_by_depth.end() ? it->second : default_epochs(depth);
    }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    static const std::set<std::string> known{"schema_version", "dataset", "depths",
                                             "ensemble_size", "train", "eval",
                                             "dataset_sizes", "base_seed", "output_dir"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    ExperimentConfig cfg;
    cfg.schema_version = detail::get_or(j, "schema_version", 1);
    if (cfg.schema_version != 1) throw ConfigError("config: unsupported schema_version");
    cfg.base_seed = detail::get_or<std::uint64_t>(j, "base_seed", 0);
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", cfg.output_dir);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        cfg.dataset.n_samples = detail::get_or<std::int64_t>(d, "n_samples", cfg.dataset.n_samples);
        cfg.dataset.n_clusters = detail::get_or(d, "n_clusters", cfg.dataset.n_clusters);
        cfg.dataset.radius = detail::get_or(d, "radius", cfg.dataset.radius);
        cfg.dataset.cluster_stds =
            detail::get_or<std::vector<double>>(d, "cluster_stds", cfg.dataset.cluster_stds);
        cfg.dataset.truncation = detail::get_or(d, "truncation", cfg.dataset.truncation);
        cfg.dataset.seed = detail::get_or<std::uint64_t>(
            d, "seed", derive_seed(cfg.base_seed, {0xDA7Au}));
    } else {
        cfg.dataset.seed = derive_seed(cfg.base_seed, {0xDA7Au});
    }

    cfg.depths = detail::get_or(j, "depths", cfg.depths);
    if (cfg.depths.empty()) throw ConfigError("config: depths must be non-empty");
    for (int d : cfg.depths)
        if (d < 1) throw ConfigError("config: depths must be >= 1");
    cfg.ensemble_size = detail::get_or(j, "ensemble_size", cfg.ensemble_size);
    if (cfg.ensemble_size < 2) throw ConfigError("config: ensemble_size must be >= 2");

    if (j.contains("train")) {
        const auto& t = j.at("train");
        cfg.train.batch_size = detail::get_or(t, "batch_size", cfg.train.batch_size);
        cfg.train.lr = detail::get_or(t, "lr", cfg.train.lr);
        cfg.train.T = detail::get_or(t, "T", cfg.train.T);
        cfg.train.beta_min = detail::get_or(t, "beta_min", cfg.train.beta_min);
        cfg.train.beta_max = detail::get_or(t, "beta_max", cfg.train.beta_max);
        if (t.contains("epochs_by_depth")) {
            for (const auto& [key, value] : t.at("epochs_by_depth").items()) {
                try {
                    cfg.train.epochs_by_depth[std::stoi(key)] = value.get<std::int64_t>();
                } catch (const std::exception&) {
                    throw ConfigError("config: bad epochs_by_depth entry '" + key + "'");
                }
            }
        }
    }

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        cfg.eval.k = detail::get_or(e, "k", cfg.eval.k);
        cfg.eval.n_phi = detail::get_or(e, "n_phi", cfg.eval.n_phi);
        cfg.eval.n_generated = detail::get_or(e, "n_generated", cfg.eval.n_generated);
        if (e.contains("quantiles")) {
            cfg.eval.q_lo = detail::get_or(e.at("quantiles"), "lo", cfg.eval.q_lo);
            cfg.eval.q_hi = detail::get_or(e.at("quantiles"), "hi", cfg.eval.q_hi);
        }
        if (e.contains("test")) {
            const auto& t = e.at("test");
            const auto sided = detail::get_or<std::string>(t, "sided", "one");
            if (sided != "one" && sided != "two")
                throw ConfigError("config: test.sided must be 'one' or 'two'");
            cfg.eval.test.two_sided = sided == "two";
            cfg.eval.test.level = detail::get_or(t, "level", cfg.eval.test.level);
            cfg.eval.test.correction =
                detail::get_or<std::string>(t, "correction", cfg.eval.test.correction);
            cfg.eval.test.permutation_resamples =
                detail::get_or(t, "permutation_resamples", cfg.eval.test.permutation_resamples);
        }
    }
    if (!(cfg.eval.q_lo < cfg.eval.q_hi)) throw ConfigError("config: quantiles.lo must be < hi");
    if (cfg.eval.k < 1) throw ConfigError("config: eval.k must be >= 1");
    if (cfg.eval.n_phi < 2) throw ConfigError("config: eval.n_phi must be >= 2");

    cfg.dataset_sizes = detail::get_or(j, "dataset_sizes", cfg.dataset_sizes);
    if (!cfg.dataset_sizes.empty()) {
        if (cfg.depths.size() != 1)
            throw ConfigError("config: the dataset-size sweep requires exactly one depth");
        for (auto s : cfg.dataset_sizes)
            if (s < 4) throw ConfigError("config: dataset_sizes entries must be >= 4");
    }

    try {
        validate(cfg.dataset);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: dataset: ") + e.what());
    }
    return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json epochs = nlohmann::json::object();
    for (const auto& [depth, e] : cfg.train.epochs_by_depth) epochs[std::to_string(depth)] = e;
    return nlohmann::json{
        {"schema_version", cfg.schema_version},
        {"base_seed", cfg.base_seed},
        {"output_dir", cfg.output_dir},
        {"dataset",
         {{"n_samples", cfg.dataset.n_samples},
          {"n_clusters", cfg.dataset.n_clusters},
          {"radius", cfg.dataset.radius},
          {"cluster_stds", resolved_cluster_stds(cfg.dataset)},
          {"truncation", cfg.dataset.truncation},
          {"seed", cfg.dataset.seed}}},
        {"depths", cfg.depths},
        {"ensemble_size", cfg.ensemble_size},
        {"train",
         {{"batch_size", cfg.train.batch_size},
          {"lr", cfg.train.lr},
          {"T", cfg.train.T},
          {"beta_min", cfg.train.beta_min},
          {"beta_max", cfg.train.beta_max},
          {"epochs_by_depth", epochs}}},
        {"eval",
         {{"k", cfg.eval.k},
          {"n_phi", cfg.eval.n_phi},
          {"n_generated", cfg.eval.n_generated},
          {"quantiles", {{"lo", cfg.eval.q_lo}, {"hi", cfg.eval.q_hi}}},
          {"test",
           {{"sided", cfg.eval.test.two_sided ? "two" : "one"},
            {"level", cfg.eval.test.level},
            {"correction", cfg.eval.test.correction},
            {"permutation_resamples", cfg.eval.test.permutation_resamples}}}}},
        {"dataset_sizes", cfg.dataset_sizes}};
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

/// Profiles: "full" runs the configured scale; "desk" shrinks every depth's
/// epoch budget to a tenth and the ensemble to ten members.
inline void apply_profile(ExperimentConfig& cfg, const std::string& profile) {
    if (profile == "full") return;
    if (profile != "desk") throw ConfigError("unknown profile '" + profile + "'");
    cfg.ensemble_size = 10;
    for (int depth : cfg.depths) {
        const std::int64_t full = cfg.epochs_for(depth);
        cfg.train.epochs_by_depth[depth] = std::max<std::int64_t>(1, full / 10);
    }
}

inline std::string config_hash(const ExperimentConfig& cfg) {
    return sha256_hex(config_to_json(cfg).dump());
}

// ---------------------------------------------------------------------------
// Runner

struct RunResult {
    RunManifest manifest;
    std::vector<std::pair<std::string, std::string>> actions;  // (stage key, run|skip)
    fs::path run_dir;
};

using RunLogger = std::function<void(const std::string&)>;

namespace detail {

inline void parallel_for(int jobs, int n, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(jobs));
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& t : workers) t.join();
}

inline std::string member_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "m%02d", index);
    return buf;
}

}  // namespace detail

class ExperimentRunner {
  public:
    ExperimentRunner(ExperimentConfig cfg, fs::path run_dir, int jobs, RunLogger log = {})
        : cfg_(std::move(cfg)), dir_(std::move(run_dir)), jobs_(std::max(1, jobs)),
          log_(std::move(log)) {}

    RunResult run() {
        fs::create_directories(dir_);
        const std::string hash = config_hash(cfg_);

        // Reuse the previous manifest only if it was produced by an
        // identical configuration; otherwise every stage recomputes.
        if (fs::exists(dir_ / "manifest.json")) {
            try {
                const auto previous = load_manifest(dir_ / "manifest.json");
                if (previous.config_hash == hash) manifest_ = previous;
            } catch (const std::exception&) {
                // Treat an unreadable manifest as absent.
            }
        }
        manifest_.config_hash = hash;
        manifest_.base_seed = cfg_.base_seed;
        manifest_.created_by_version = kVersion;
        manifest_.failed_members.clear();

        write_json(config_to_json(cfg_), dir_ / "config.resolved.json");
        record("config.resolved.json", "config");

        const auto groups = make_groups();
        for (const auto& g : groups) dataset_stage(g);
        for (const auto& g : groups) members_stage(g);
        for (const auto& g : groups) aggregate_stage(g);
        for (std::size_t a = 0; a < groups.size(); ++a)
            for (std::size_t b = a + 1; b < groups.size(); ++b)
                compare_stage(groups[a], groups[b]);
        for (const auto& g : groups) plot_stage(g);
        for (std::size_t a = 0; a < groups.size(); ++a)
            for (std::size_t b = a + 1; b < groups.size(); ++b)
                compare_plot_stage(groups[a], groups[b]);
        report_stage(groups);

        save_manifest(manifest_, dir_ / "manifest.json");
        return RunResult{manifest_, actions_, dir_};
    }

  private:
    struct Group {
        std::string key;          // "C4" or "N5000"
        int depth = 2;
        std::int64_t total_size = 0;
        std::string data_prefix;  // path fragment under data/
        std::uint64_t size_tag = 0;
    };

    std::vector<Group> make_groups() const {
        std::vector<Group> groups;
        if (cfg_.dataset_sizes.empty()) {
            for (int d : cfg_.depths)
                groups.push_back(Group{"C" + std::to_string(d), d, cfg_.dataset.n_samples,
                                       "ring", 0});
        } else {
            for (auto size : cfg_.dataset_sizes)
                groups.push_back(Group{"N" + std::to_string(size), cfg_.depths.front(), size,
                                       "N" + std::to_string(size),
                                       static_cast<std::uint64_t>(size)});
        }
        return groups;
    }

    // ---- manifest bookkeeping ----

    void record(const std::string& rel, const std::string& stage, bool deterministic = true) {
        std::lock_guard<std::mutex> lock(mu_);
        manifest_.artifacts[rel] =
            ArtifactEntry{sha256_file(dir_ / rel), stage, deterministic};
    }

    bool artifact_ok(const std::string& rel) const {
        std::string expected;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto it = manifest_.artifacts.find(rel);
            if (it == manifest_.artifacts.end()) return false;
            expected = it->second.sha256;
        }
        const auto path = dir_ / rel;
        if (!fs::exists(path)) return false;
        return sha256_file(path) == expected;
    }

    void note(const std::string& stage, bool ran) {
        std::lock_guard<std::mutex> lock(mu_);
        actions_.emplace_back(stage, ran ? "run" : "skip");
        if (log_) log_((ran ? "[run ] " : "[skip] ") + stage);
    }

    void time_stage(const std::string& key, const std::chrono::steady_clock::time_point& t0) {
        std::lock_guard<std::mutex> lock(mu_);
        manifest_.stage_wall_ms[key] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
    }

    // ---- stages ----

    std::string data_rel(const Group& g, const char* suffix) const {
        return "data/" + g.data_prefix + "_" + suffix;
    }

    void dataset_stage(const Group& g) {
        const std::string stage = g.key + "/dataset";
        const std::vector<std::string> outputs{data_rel(g, "full.csv"), data_rel(g, "train.csv"),
                                               data_rel(g, "valid.csv"),
                                               data_rel(g, "manifest.json")};
        bool ok = true;
        for (const auto& rel : outputs) ok = ok && artifact_ok(rel);
        if (ok && seen_datasets_.count(g.data_prefix)) return;
        if (ok) {
            seen_datasets_.insert(g.data_prefix);
            note(stage, false);
            return;
        }

        const auto t0 = std::chrono::steady_clock::now();
        fs::create_directories(dir_ / "data");
        RingConfig ring_cfg = cfg_.dataset;
        ring_cfg.n_samples = g.total_size;
        if (g.size_tag != 0)
            ring_cfg.seed = derive_seed(cfg_.base_seed, {0xDA7Au, g.size_tag});
        const auto ring = generate_ring(ring_cfg);
        const auto [train_set, valid_set] =
            split(ring.samples, 0.5, derive_seed(ring_cfg.seed, {0x5417u}));

        write_csv(ring.samples, dir_ / outputs[0]);
        write_csv(train_set, dir_ / outputs[1]);
        write_csv(valid_set, dir_ / outputs[2]);
        write_dataset_manifest(ring_cfg, dir_ / outputs[3]);
        for (const auto& rel : outputs) record(rel, stage);
        seen_datasets_.insert(g.data_prefix);
        time_stage(stage, t0);
        note(stage, true);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    void members_stage(const Group& g) {
        const std::string stage = g.key + "/members";
        const auto t0 = std::chrono::steady_clock::now();
        fs::create_directories(dir_ / "models" / g.key);
        fs::create_directories(dir_ / "logs" / g.key);
        fs::create_directories(dir_ / "samples" / g.key);
        fs::create_directories(dir_ / "curves" / g.key);

        const auto train_set = read_csv(dir_ / data_rel(g, "train.csv"));
        auto valid_set = read_csv(dir_ / data_rel(g, "valid.csv"));
        const std::int64_t n_generated =
            cfg_.eval.n_generated > 0 ? cfg_.eval.n_generated
                                      : static_cast<std::int64_t>(valid_set.size());

        detail::parallel_for(jobs_, cfg_.ensemble_size, [&](int m) {
            try {
                member_job(g, m, train_set, valid_set, n_generated);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu_);
                manifest_.failed_members.push_back(FailedMember{g.key, m, e.what()});
                if (log_)
                    log_("[fail] " + g.key + "/" + detail::member_name(m) + ": " + e.what());
            }
        });
        time_stage(stage, t0);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    void member_job(const Group& g, int m, const SampleSet& train_set, const SampleSet& valid_set,
                    std::int64_t n_generated) {
        const std::string name = detail::member_name(m);
        const std::string member_id = g.key + "-" + name;
        const std::string ckpt_rel = "models/" + g.key + "/" + name + ".ckpt";
        const std::string log_rel = "logs/" + g.key + "/" + name + ".train.jsonl";
        const std::string samples_rel = "samples/" + g.key + "/" + name + ".csv";
        const std::string curve_rel = "curves/" + g.key + "/" + name + ".csv";
        const std::string meta_rel = "curves/" + g.key + "/" + name + ".meta.json";

        const std::uint64_t train_seed = derive_seed(
            cfg_.base_seed, {static_cast<std::uint64_t>(g.depth), g.size_tag,
                             static_cast<std::uint64_t>(m), 1});
        const std::uint64_t sample_seed = derive_seed(
            cfg_.base_seed, {static_cast<std::uint64_t>(g.depth), g.size_tag,
                             static_cast<std::uint64_t>(m), 2});
        {
            std::lock_guard<std::mutex> lock(mu_);
            manifest_.member_seeds[g.key + "/" + name + "/train"] = train_seed;
            manifest_.member_seeds[g.key + "/" + name + "/sample"] = sample_seed;
        }

        TrainedModel model;
        bool have_model = false;

        if (!artifact_ok(ckpt_rel)) {
            TrainConfig tc;
            tc.depth = g.depth;
            tc.epochs = cfg_.epochs_for(g.depth);
            tc.batch_size = cfg_.train.batch_size;
            tc.lr = cfg_.train.lr;
            tc.T = cfg_.train.T;
            tc.beta_min = cfg_.train.beta_min;
            tc.beta_max = cfg_.train.beta_max;
            tc.seed = train_seed;

            std::ofstream log_file(dir_ / log_rel);
            model = train(train_set, tc, [&](const EpochLogEntry& e) {
                log_file << "{\"epoch\":" << e.epoch << ",\"mean_loss\":" << e.mean_loss
                         << ",\"wall_ms\":" << e.wall_ms << "}\n";
            });
            log_file.close();
            save_checkpoint(model, dir_ / ckpt_rel);
            record(ckpt_rel, g.key + "/train");
            record(log_rel, g.key + "/train", /*deterministic=*/false);
            note(g.key + "/" + name + "/train", true);
            have_model = true;
        } else {
            note(g.key + "/" + name + "/train", false);
        }

        if (!artifact_ok(samples_rel)) {
            if (!have_model) {
                model = load_checkpoint(dir_ / ckpt_rel);
                have_model = true;
            }
            const auto generated = sample(model, n_generated, sample_seed, member_id);
            write_csv(generated, dir_ / samples_rel);
            record(samples_rel, g.key + "/sample");
            note(g.key + "/" + name + "/sample", true);
        } else {
            note(g.key + "/" + name + "/sample", false);
        }

        if (!artifact_ok(curve_rel) || !artifact_ok(meta_rel)) {
            auto generated = read_csv(dir_ / samples_rel);
            generated.origin = Origin::Generated;
            generated.model_id = member_id;
            const auto grid = SlopeGrid::make(cfg_.eval.n_phi);
            const auto curve = pr_curve(valid_set, generated, cfg_.eval.k, grid);
            write_curve_csv(curve, dir_ / curve_rel);
            write_curve_meta(curve, dir_ / meta_rel,
                             nlohmann::json{{"train_seed", train_seed},
                                            {"sample_seed", sample_seed},
                                            {"dataset_seed", cfg_.dataset.seed},
                                            {"base_seed", cfg_.base_seed}});
            record(curve_rel, g.key + "/pr");
            record(meta_rel, g.key + "/pr");
            note(g.key + "/" + name + "/pr", true);
        } else {
            note(g.key + "/" + name + "/pr", false);
        }
    }

    std::vector<int> surviving_members(const Group& g) const {
        std::vector<int> out;
        for (int m = 0; m < cfg_.ensemble_size; ++m) {
            const std::string rel = "curves/" + g.key + "/" + detail::member_name(m) + ".csv";
            if (fs::exists(dir_ / rel)) out.push_back(m);
        }
        return out;
    }

    std::vector<PRCurve> load_group_curves(const Group& g, const std::vector<int>& members) const {
        std::vector<PRCurve> curves;
        curves.reserve(members.size());
        for (int m : members) {
            const std::string name = detail::member_name(m);
            auto curve = read_curve_csv(dir_ / ("curves/" + g.key + "/" + name + ".csv"));
            curve.meta.model_id = g.key + "-" + name;
            curves.push_back(std::move(curve));
        }
        return curves;
    }

    std::vector<InterpolatedCurve> interpolate_group(const std::vector<PRCurve>& curves) const {
        const auto grid = RecallGrid::make(cfg_.eval.n_phi);
        std::vector<InterpolatedCurve> out;
        out.reserve(curves.size());
        for (const auto& c : curves) out.push_back(interpolate(c, grid));
        return out;
    }

    void aggregate_stage(const Group& g) {
        const std::string stage = g.key + "/aggregate";
        const std::string band_rel = "bands/" + g.key + ".band.json";
        const std::string radial_rel = "bands/" + g.key + ".radial.json";
        if (artifact_ok(band_rel) && artifact_ok(radial_rel)) {
            note(stage, false);
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        fs::create_directories(dir_ / "bands");

        const auto members = surviving_members(g);
        if (members.size() < 2)
            throw std::runtime_error("aggregate " + g.key + ": fewer than two surviving members");
        const auto curves = load_group_curves(g, members);
        const auto interp = interpolate_group(curves);

        const auto band = aggregate(interp, cfg_.eval.q_lo, cfg_.eval.q_hi);
        write_json(band_to_json(band), dir_ / band_rel);
        record(band_rel, stage);

        const auto radial = radial_aggregate(curves, cfg_.eval.q_lo, cfg_.eval.q_hi);
        write_json(radial_to_json(radial), dir_ / radial_rel);
        record(radial_rel, stage);

        time_stage(stage, t0);
        note(stage, true);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    static std::string pair_key(const Group& a, const Group& b) {
        return a.key + "_vs_" + b.key;
    }

    void compare_stage(const Group& a, const Group& b) {
        const std::string stage = pair_key(a, b) + "/compare";
        const std::string rel = "compare/" + pair_key(a, b) + ".json";
        if (artifact_ok(rel)) {
            note(stage, false);
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        fs::create_directories(dir_ / "compare");

        // Pair members by index; drop indices that failed on either side.
        const auto ma = surviving_members(a);
        const auto mb = surviving_members(b);
        std::vector<int> common;
        std::set_intersection(ma.begin(), ma.end(), mb.begin(), mb.end(),
                              std::back_inserter(common));
        if (common.size() < 2)
            throw std::runtime_error("compare " + pair_key(a, b) +
                                     ": fewer than two paired members");

        const auto curves_a = interpolate_group(load_group_curves(a, common));
        const auto curves_b = interpolate_group(load_group_curves(b, common));
        auto rep = significance_mask(curves_a, curves_b, cfg_.eval.test.level,
                                     cfg_.eval.test.two_sided);

        nlohmann::json j = significance_to_json(
            rep, nlohmann::json{{"config_hash", manifest_.config_hash},
                                {"base_seed", cfg_.base_seed},
                                {"group_a", a.key},
                                {"group_b", b.key},
                                {"members_used", common},
                                {"ensemble_size", cfg_.ensemble_size},
                                {"k", cfg_.eval.k},
                                {"n_phi", cfg_.eval.n_phi},
                                {"correction", cfg_.eval.test.correction},
                                {"created_by_version", kVersion}});

        if (cfg_.eval.test.permutation_resamples > 0) {
            std::vector<double> p_perm(rep.grid.size());
            const auto grid_n = rep.grid.size();
            std::vector<double> va(common.size()), vb(common.size());
            for (std::size_t jdx = 0; jdx < grid_n; ++jdx) {
                for (std::size_t i = 0; i < common.size(); ++i) {
                    va[i] = curves_a[i].precisions[jdx];
                    vb[i] = curves_b[i].precisions[jdx];
                }
                p_perm[jdx] = permutation_test_p(
                    va, vb, cfg_.eval.test.permutation_resamples,
                    derive_seed(cfg_.base_seed, {0x9E42u, static_cast<std::uint64_t>(jdx)}),
                    cfg_.eval.test.two_sided);
            }
            j["p_perm"] = p_perm;
            j["permutation_resamples"] = cfg_.eval.test.permutation_resamples;
        }

        write_json(j, dir_ / rel);
        record(rel, stage);
        time_stage(stage, t0);
        note(stage, true);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    void plot_stage(const Group& g) {
        const std::string stage = g.key + "/plot";
        const std::string band_svg = "plots/band_" + g.key + ".svg";
        const std::string radial_svg = "plots/radial_" + g.key + ".svg";
        const std::string scatter_svg = "plots/scatter_" + g.key + ".svg";
        if (artifact_ok(band_svg) && artifact_ok(radial_svg) && artifact_ok(scatter_svg)) {
            note(stage, false);
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        fs::create_directories(dir_ / "plots");

        const auto band = band_from_json(read_json(dir_ / ("bands/" + g.key + ".band.json")));
        plot_band(band, g.key).write(dir_ / band_svg);
        record(band_svg, stage);

        const auto radial = radial_from_json(read_json(dir_ / ("bands/" + g.key + ".radial.json")));
        plot_radial(radial, g.key + " (radial)").write(dir_ / radial_svg);
        record(radial_svg, stage);

        // Best and worst members by the area under the interpolated curve.
        const auto members = surviving_members(g);
        if (members.size() != band.auc_per_model.size())
            throw std::runtime_error("plot " + g.key + ": band is stale, remove " + g.key +
                                     ".band.json and re-run");
        std::size_t best = 0, worst = 0;
        for (std::size_t i = 1; i < band.auc_per_model.size(); ++i) {
            if (band.auc_per_model[i] > band.auc_per_model[best]) best = i;
            if (band.auc_per_model[i] < band.auc_per_model[worst]) worst = i;
        }
        const auto valid_set = read_csv(dir_ / data_rel(g, "valid.csv"));
        auto load_samples = [&](std::size_t rank) {
            auto s = read_csv(dir_ / ("samples/" + g.key + "/" +
                                      detail::member_name(members[rank]) + ".csv"));
            s.origin = Origin::Generated;
            s.model_id = g.key + "-" + detail::member_name(members[rank]);
            return s;
        };
        plot_scatter(valid_set, load_samples(best), load_samples(worst), g.key)
            .write(dir_ / scatter_svg);
        record(scatter_svg, stage);

        time_stage(stage, t0);
        note(stage, true);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    void compare_plot_stage(const Group& a, const Group& b) {
        const std::string stage = pair_key(a, b) + "/plot";
        const std::string rel = "plots/compare_" + pair_key(a, b) + ".svg";
        if (artifact_ok(rel)) {
            note(stage, false);
            return;
        }
        const auto band_a = band_from_json(read_json(dir_ / ("bands/" + a.key + ".band.json")));
        const auto band_b = band_from_json(read_json(dir_ / ("bands/" + b.key + ".band.json")));
        const auto sig =
            significance_from_json(read_json(dir_ / ("compare/" + pair_key(a, b) + ".json")));
        plot_compare(band_a, band_b, sig, a.key, b.key, a.key + " vs " + b.key).write(dir_ / rel);
        record(rel, stage);
        note(stage, true);
        save_manifest(manifest_, dir_ / "manifest.json");
    }

    void report_stage(const std::vector<Group>& groups) {
        const std::string stage = "report";
        if (artifact_ok("report.json") && artifact_ok("report.txt")) {
            note(stage, false);
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();

        nlohmann::json jgroups = nlohmann::json::array();
        struct Row {
            std::string key;
            double auc_mean, auc_std, mean_width;
            std::string best, worst;
            std::int64_t train_size;
        };
        std::vector<Row> rows;
        for (const auto& g : groups) {
            const auto band = band_from_json(read_json(dir_ / ("bands/" + g.key + ".band.json")));
            std::size_t best = 0, worst = 0;
            for (std::size_t i = 1; i < band.auc_per_model.size(); ++i) {
                if (band.auc_per_model[i] > band.auc_per_model[best]) best = i;
                if (band.auc_per_model[i] < band.auc_per_model[worst]) worst = i;
            }
            Row row{g.key,
                    band.auc_mean,
                    std::sqrt(band.auc_variance),
                    band.mean_width(),
                    band.model_ids.empty() ? "" : band.model_ids[best],
                    band.model_ids.empty() ? "" : band.model_ids[worst],
                    g.total_size / 2};
            rows.push_back(row);
            jgroups.push_back({{"group", g.key},
                               {"depth", g.depth},
                               {"train_size", row.train_size},
                               {"auc_mean", band.auc_mean},
                               {"auc_std", row.auc_std},
                               {"auc_variance", band.auc_variance},
                               {"mean_band_width", row.mean_width},
                               {"n_members", band.auc_per_model.size()},
                               {"best_member", row.best},
                               {"worst_member", row.worst}});
        }

        nlohmann::json jpairs = nlohmann::json::array();
        for (std::size_t a = 0; a < groups.size(); ++a)
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                const auto sig = read_json(
                    dir_ / ("compare/" + pair_key(groups[a], groups[b]) + ".json"));
                std::size_t holm_count = 0;
                for (bool v : sig.at("mask_holm").get<std::vector<bool>>()) holm_count += v;
                jpairs.push_back(
                    {{"a", groups[a].key},
                     {"b", groups[b].key},
                     {"fraction_significant", sig.at("fraction").get<double>()},
                     {"fraction_significant_holm",
                      static_cast<double>(holm_count) /
                          static_cast<double>(sig.at("mask_holm").size())}});
            }

        nlohmann::json report{{"config_hash", manifest_.config_hash},
                              {"created_by_version", kVersion},
                              {"groups", jgroups},
                              {"pairwise", jpairs}};

        // Size sweeps get a monotonicity summary over ascending train sizes.
        if (!cfg_.dataset_sizes.empty()) {
            auto sorted = rows;
            std::sort(sorted.begin(), sorted.end(),
                      [](const Row& x, const Row& y) { return x.train_size < y.train_size; });
            bool auc_ok = true, width_ok = true;
            for (std::size_t i = 1; i < sorted.size(); ++i) {
                auc_ok = auc_ok && sorted[i].auc_mean >= sorted[i - 1].auc_mean;
                width_ok = width_ok && sorted[i].mean_width <= sorted[i - 1].mean_width;
            }
            report["size_trend"] = {{"auc_nondecreasing", auc_ok},
                                    {"width_nonincreasing", width_ok}};
        }

        nlohmann::json jfailed = nlohmann::json::array();
        for (const auto& f : manifest_.failed_members)
            jfailed.push_back({{"group", f.group}, {"member", f.member}, {"error", f.error}});
        report["failed_members"] = jfailed;

        write_json(report, dir_ / "report.json");
        record("report.json", stage);

        std::ofstream txt(dir_ / "report.txt");
        char line[256];
        txt << "group      train_n   auc mean +- std        mean width   best         worst\n";
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%-10s %-9lld %.4f +- %.4f       %.4f       %-12s %s\n",
                          r.key.c_str(), static_cast<long long>(r.train_size), r.auc_mean,
                          r.auc_std, r.mean_width, r.best.c_str(), r.worst.c_str());
            txt << line;
        }
        if (!jpairs.empty()) {
            txt << "\npairwise significance (one-sided fraction of recall grid)\n";
            for (const auto& p : jpairs) {
                std::snprintf(line, sizeof line, "%s > %s : %.4f (holm %.4f)\n",
                              p.at("b").get<std::string>().c_str(),
                              p.at("a").get<std::string>().c_str(),
                              p.at("fraction_significant").get<double>(),
                              p.at("fraction_significant_holm").get<double>());
                txt << line;
            }
        }
        if (report.contains("size_trend")) {
            txt << "\nsize trend: auc non-decreasing = "
                << (report["size_trend"]["auc_nondecreasing"].get<bool>() ? "pass" : "fail")
                << ", width non-increasing = "
                << (report["size_trend"]["width_nonincreasing"].get<bool>() ? "pass" : "fail")
                << "\n";
        }
        txt.close();
        record("report.txt", stage);

        time_stage(stage, t0);
        note(stage, true);
    }

    ExperimentConfig cfg_;
    fs::path dir_;
    int jobs_;
    RunLogger log_;
    RunManifest manifest_;
    std::vector<std::pair<std::string, std::string>> actions_;
    std::set<std::string> seen_datasets_;
    mutable std::mutex mu_;
};

inline RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& run_dir, int jobs,
                                const RunLogger& log = {}) {
    ExperimentRunner runner(cfg, run_dir, jobs, log);
    return runner.run();
}

}  // namespace prband
