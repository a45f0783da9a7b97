// prband: ensemble PR-curve uncertainty pipeline for toy diffusion models.
//
// Subcommands cover the individual pipeline stages (gen-data, train, sample,
// pr, aggregate, compare, plot, report) plus the orchestrated run-experiment
// and manifest verify. Exit codes: 0 success, 1 runtime failure, 2 usage or
// configuration error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "prband/dataset.hpp"
#include "prband/diffusion.hpp"
#include "prband/ensemble.hpp"
#include "prband/experiment.hpp"
#include "prband/manifest.hpp"
#include "prband/prcurve.hpp"
#include "prband/svg.hpp"
#include "prband/version.hpp"

namespace fs = std::filesystem;
using namespace prband;

namespace {

int default_jobs() {
    if (const char* env = std::getenv("PRBAND_JOBS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

std::vector<fs::path> curve_files_in(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw std::invalid_argument("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("no curve csv files in " + dir.string());
    return files;
}

std::vector<PRCurve> load_curves(const fs::path& dir) {
    std::vector<PRCurve> curves;
    for (const auto& f : curve_files_in(dir)) {
        auto c = read_curve_csv(f);
        c.meta.model_id = f.stem().string();
        curves.push_back(std::move(c));
    }
    return curves;
}

struct CmdGenData {
    std::string config_path;
    std::string out_dir = "data";
    std::optional<std::int64_t> n_override;
    std::optional<std::uint64_t> seed_override;

    int run() const {
        const auto cfg = load_config(config_path);
        RingConfig ring_cfg = cfg.dataset;
        if (n_override) ring_cfg.n_samples = *n_override;
        if (seed_override) ring_cfg.seed = *seed_override;
        validate(ring_cfg);

        fs::create_directories(out_dir);
        const auto ring = generate_ring(ring_cfg);
        const auto [train_set, valid_set] =
            split(ring.samples, 0.5, derive_seed(ring_cfg.seed, {0x5417u}));
        write_csv(ring.samples, fs::path(out_dir) / "ring_full.csv");
        write_csv(train_set, fs::path(out_dir) / "ring_train.csv");
        write_csv(valid_set, fs::path(out_dir) / "ring_valid.csv");
        write_dataset_manifest(ring_cfg, fs::path(out_dir) / "ring_manifest.json");
        std::printf("wrote %zu points (%zu train / %zu valid) to %s\n", ring.samples.size(),
                    train_set.size(), valid_set.size(), out_dir.c_str());
        return 0;
    }
};

struct CmdTrain {
    std::string data_path;
    std::string out_path = "model.ckpt";
    std::string log_path;
    int depth = 2;
    std::optional<std::int64_t> epochs;
    int batch_size = 512;
    double lr = 1e-3;
    int T = 1000;
    std::uint64_t seed = 0;
    bool quiet = false;

    int run() const {
        auto data = read_csv(data_path);
        TrainConfig tc;
        tc.depth = depth;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.lr = lr;
        tc.T = T;
        tc.seed = seed;

        std::ofstream log_file;
        if (!log_path.empty()) log_file.open(log_path);
        const auto t0 = std::chrono::steady_clock::now();
        const auto model = train(data, tc, [&](const EpochLogEntry& e) {
            if (log_file.is_open())
                log_file << "{\"epoch\":" << e.epoch << ",\"mean_loss\":" << e.mean_loss
                         << ",\"wall_ms\":" << e.wall_ms << "}\n";
            if (!quiet && (e.epoch % 500 == 0 || e.epoch + 1 == tc.resolved_epochs()))
                std::printf("epoch %lld  mean_loss %.6f\n", static_cast<long long>(e.epoch),
                            e.mean_loss);
        });
        save_checkpoint(model, out_path);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("trained depth=%d epochs=%lld final_loss=%.6f in %.1fs -> %s\n", depth,
                    static_cast<long long>(tc.resolved_epochs()), model.final_loss, secs,
                    out_path.c_str());
        return 0;
    }
};

struct CmdSample {
    std::string model_path;
    std::string out_path = "samples.csv";
    std::int64_t n = 10000;
    std::uint64_t seed = 0;
    std::string model_id;

    int run() const {
        const auto model = load_checkpoint(model_path);
        const auto id = model_id.empty() ? fs::path(model_path).stem().string() : model_id;
        const auto s = sample(model, n, seed, id);
        write_csv(s, out_path);
        std::printf("sampled %lld points from %s -> %s\n", static_cast<long long>(n),
                    model_path.c_str(), out_path.c_str());
        return 0;
    }
};

struct CmdPr {
    std::string real_path;
    std::string gen_path;
    std::string out_path = "curve.csv";
    int k = 5;
    int n_phi = 500;
    std::string model_id;

    int run() const {
        const auto real = read_csv(real_path);
        auto gen = read_csv(gen_path);
        gen.origin = Origin::Generated;
        gen.model_id = model_id.empty() ? fs::path(gen_path).stem().string() : model_id;
        const auto curve = pr_curve(real, gen, k, SlopeGrid::make(n_phi));
        write_curve_csv(curve, out_path);
        write_curve_meta(curve, fs::path(out_path).replace_extension(".meta.json"));
        std::printf("pr curve (%d points, k=%d) -> %s\n", n_phi, k, out_path.c_str());
        return 0;
    }
};

struct CmdAggregate {
    std::string curves_dir;
    std::string out_path = "band.json";
    std::string radial_path;
    double q_lo = 10.0, q_hi = 90.0;
    int n_phi = 0;  // 0 -> match the curve grid size

    int run() const {
        const auto curves = load_curves(curves_dir);
        const int grid_n = n_phi > 0 ? n_phi : static_cast<int>(curves.front().grid.size());
        const auto grid = RecallGrid::make(grid_n);
        std::vector<InterpolatedCurve> interp;
        for (const auto& c : curves) interp.push_back(interpolate(c, grid));
        const auto band = aggregate(interp, q_lo, q_hi);
        write_json(band_to_json(band), out_path);
        std::printf("band over %zu curves -> %s (auc %.4f +- %.4f, mean width %.4f)\n",
                    curves.size(), out_path.c_str(), band.auc_mean, std::sqrt(band.auc_variance),
                    band.mean_width());
        if (!radial_path.empty()) {
            const auto radial = radial_aggregate(curves, q_lo, q_hi);
            write_json(radial_to_json(radial), radial_path);
            std::printf("radial band -> %s\n", radial_path.c_str());
        }
        return 0;
    }
};

struct CmdCompare {
    std::string curves_a;
    std::string curves_b;
    std::string out_path = "significance.json";
    int n_phi = 0;
    double level = 0.05;
    bool two_sided = false;
    int permutation_resamples = 0;
    std::uint64_t seed = 0;

    int run() const {
        const auto raw_a = load_curves(curves_a);
        const auto raw_b = load_curves(curves_b);
        if (raw_a.size() != raw_b.size())
            throw std::invalid_argument("compare: ensembles differ in size (" +
                                        std::to_string(raw_a.size()) + " vs " +
                                        std::to_string(raw_b.size()) + ")");
        const int grid_n = n_phi > 0 ? n_phi : static_cast<int>(raw_a.front().grid.size());
        const auto grid = RecallGrid::make(grid_n);
        std::vector<InterpolatedCurve> a, b;
        for (const auto& c : raw_a) a.push_back(interpolate(c, grid));
        for (const auto& c : raw_b) b.push_back(interpolate(c, grid));
        const auto rep = significance_mask(a, b, level, two_sided);

        nlohmann::json j = significance_to_json(
            rep, nlohmann::json{{"curves_a", curves_a},
                                {"curves_b", curves_b},
                                {"members", raw_a.size()},
                                {"n_phi", grid_n},
                                {"created_by_version", kVersion}});
        if (permutation_resamples > 0) {
            std::vector<double> p_perm(grid.size());
            std::vector<double> va(a.size()), vb(b.size());
            for (std::size_t jdx = 0; jdx < grid.size(); ++jdx) {
                for (std::size_t i = 0; i < a.size(); ++i) {
                    va[i] = a[i].precisions[jdx];
                    vb[i] = b[i].precisions[jdx];
                }
                p_perm[jdx] = permutation_test_p(va, vb, permutation_resamples,
                                                 derive_seed(seed, {0x9E42u, jdx}), two_sided);
            }
            j["p_perm"] = p_perm;
            j["permutation_resamples"] = permutation_resamples;
        }
        write_json(j, out_path);
        std::printf("significant fraction %.4f -> %s\n", rep.fraction_significant,
                    out_path.c_str());
        return 0;
    }
};

struct CmdPlot {
    std::string kind;
    std::string in_path;
    std::string in_b;
    std::string sig_path;
    std::string real_path;
    std::string best_path;
    std::string worst_path;
    std::string out_path = "plot.svg";
    std::string title;

    int run() const {
        if (kind == "band") {
            const auto band = band_from_json(read_json(in_path));
            plot_band(band, title).write(out_path);
        } else if (kind == "radial") {
            const auto radial = radial_from_json(read_json(in_path));
            plot_radial(radial, title).write(out_path);
        } else if (kind == "compare") {
            const auto a = band_from_json(read_json(in_path));
            const auto b = band_from_json(read_json(in_b));
            const auto sig = significance_from_json(read_json(sig_path));
            plot_compare(a, b, sig, fs::path(in_path).stem().string(),
                         fs::path(in_b).stem().string(), title)
                .write(out_path);
        } else if (kind == "scatter") {
            const auto real = read_csv(real_path);
            auto best = read_csv(best_path);
            best.model_id = fs::path(best_path).stem().string();
            auto worst = read_csv(worst_path);
            worst.model_id = fs::path(worst_path).stem().string();
            plot_scatter(real, best, worst, title).write(out_path);
        } else {
            throw std::invalid_argument("plot: unknown kind '" + kind + "'");
        }
        std::printf("%s plot -> %s\n", kind.c_str(), out_path.c_str());
        return 0;
    }
};

struct CmdReport {
    std::string run_dir;

    int run() const {
        const auto path = fs::path(run_dir) / "report.txt";
        std::ifstream f(path);
        if (!f) throw std::invalid_argument("report: no report.txt under " + run_dir);
        std::cout << f.rdbuf();
        return 0;
    }
};

struct CmdRunExperiment {
    std::string config_path;
    std::string profile = "full";
    std::string out_dir;
    int jobs = default_jobs();
    bool quiet = false;

    int run() const {
        auto cfg = load_config(config_path);
        apply_profile(cfg, profile);
        const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
        RunLogger logger;
        if (!quiet) logger = [](const std::string& line) { std::puts(line.c_str()); };
        const auto result = run_experiment(cfg, dir, jobs, logger);
        std::size_t ran = 0;
        for (const auto& [stage, action] : result.actions) ran += action == "run";
        std::printf("experiment complete: %zu stages run, %zu skipped, %zu failed members -> %s\n",
                    ran, result.actions.size() - ran, result.manifest.failed_members.size(),
                    dir.string().c_str());
        return result.manifest.failed_members.empty() ? 0 : 1;
    }
};

struct CmdVerify {
    std::string run_dir;

    int run() const {
        const auto manifest = load_manifest(fs::path(run_dir) / "manifest.json");
        const auto result = verify_manifest(manifest, run_dir);
        std::printf("checked %zu artifacts: %zu missing, %zu mismatched\n", result.checked,
                    result.missing.size(), result.mismatched.size());
        for (const auto& p : result.missing) std::printf("  missing: %s\n", p.c_str());
        for (const auto& p : result.mismatched) std::printf("  mismatch: %s\n", p.c_str());
        return result.ok() ? 0 : 1;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble PR-curve uncertainty for toy diffusion models"};
    app.set_version_flag("--version", std::string("prband ") + kVersion);
    app.require_subcommand(1);

    CmdGenData gen_data;
    auto* c_gen = app.add_subcommand("gen-data", "generate the ring dataset and its split");
    c_gen->add_option("--config", gen_data.config_path, "experiment config json")->required();
    c_gen->add_option("--out", gen_data.out_dir, "output directory");
    c_gen->add_option("--n", gen_data.n_override, "override the sample count");
    c_gen->add_option("--seed", gen_data.seed_override, "override the dataset seed");

    CmdTrain train_cmd;
    auto* c_train = app.add_subcommand("train", "train one diffusion model");
    c_train->add_option("--data", train_cmd.data_path, "training csv")->required();
    c_train->add_option("--out", train_cmd.out_path, "checkpoint path");
    c_train->add_option("--log", train_cmd.log_path, "epoch log (json lines)");
    c_train->add_option("--depth", train_cmd.depth, "residual block count");
    c_train->add_option("--epochs", train_cmd.epochs, "epoch count (default depends on depth)");
    c_train->add_option("--batch", train_cmd.batch_size, "minibatch size");
    c_train->add_option("--lr", train_cmd.lr, "learning rate");
    c_train->add_option("--T", train_cmd.T, "diffusion steps");
    c_train->add_option("--seed", train_cmd.seed, "training seed");
    c_train->add_flag("--quiet", train_cmd.quiet, "suppress progress lines");

    CmdSample sample_cmd;
    auto* c_sample = app.add_subcommand("sample", "draw samples from a checkpoint");
    c_sample->add_option("--model", sample_cmd.model_path, "checkpoint path")->required();
    c_sample->add_option("--n", sample_cmd.n, "sample count");
    c_sample->add_option("--seed", sample_cmd.seed, "sampling seed");
    c_sample->add_option("--out", sample_cmd.out_path, "output csv");
    c_sample->add_option("--model-id", sample_cmd.model_id, "provenance tag");

    CmdPr pr_cmd;
    auto* c_pr = app.add_subcommand("pr", "estimate a PR curve between two sample sets");
    c_pr->add_option("--real", pr_cmd.real_path, "real samples csv")->required();
    c_pr->add_option("--gen", pr_cmd.gen_path, "generated samples csv")->required();
    c_pr->add_option("--k", pr_cmd.k, "kNN neighborhood size");
    c_pr->add_option("--n-phi", pr_cmd.n_phi, "slope grid size");
    c_pr->add_option("--out", pr_cmd.out_path, "curve csv path");
    c_pr->add_option("--model-id", pr_cmd.model_id, "provenance tag");

    CmdAggregate agg_cmd;
    auto* c_agg = app.add_subcommand("aggregate", "aggregate an ensemble of PR curves");
    c_agg->add_option("--curves", agg_cmd.curves_dir, "directory of curve csvs")->required();
    c_agg->add_option("--out", agg_cmd.out_path, "band report json");
    c_agg->add_option("--radial", agg_cmd.radial_path, "also write the radial band json");
    c_agg->add_option("--q-lo", agg_cmd.q_lo, "lower quantile (percent)");
    c_agg->add_option("--q-hi", agg_cmd.q_hi, "upper quantile (percent)");
    c_agg->add_option("--n-phi", agg_cmd.n_phi, "recall grid size (default: curve grid size)");

    CmdCompare cmp_cmd;
    auto* c_cmp = app.add_subcommand("compare", "paired significance between two ensembles");
    c_cmp->add_option("--curves-a", cmp_cmd.curves_a, "baseline ensemble directory")->required();
    c_cmp->add_option("--curves-b", cmp_cmd.curves_b, "challenger ensemble directory")->required();
    c_cmp->add_option("--out", cmp_cmd.out_path, "significance report json");
    c_cmp->add_option("--n-phi", cmp_cmd.n_phi, "recall grid size");
    c_cmp->add_option("--level", cmp_cmd.level, "significance level");
    c_cmp->add_flag("--two-sided", cmp_cmd.two_sided, "two-sided test");
    c_cmp->add_option("--perm", cmp_cmd.permutation_resamples,
                      "also run a sign-flip permutation test with this many resamples");
    c_cmp->add_option("--seed", cmp_cmd.seed, "permutation seed");

    CmdPlot plot_cmd;
    auto* c_plot = app.add_subcommand("plot", "render svg reports");
    c_plot->add_option("--kind", plot_cmd.kind, "band | radial | compare | scatter")->required();
    c_plot->add_option("--in", plot_cmd.in_path, "band/radial json (or band A for compare)");
    c_plot->add_option("--b", plot_cmd.in_b, "band B json (compare)");
    c_plot->add_option("--sig", plot_cmd.sig_path, "significance json (compare)");
    c_plot->add_option("--real", plot_cmd.real_path, "real samples csv (scatter)");
    c_plot->add_option("--best", plot_cmd.best_path, "best member samples csv (scatter)");
    c_plot->add_option("--worst", plot_cmd.worst_path, "worst member samples csv (scatter)");
    c_plot->add_option("--out", plot_cmd.out_path, "svg path");
    c_plot->add_option("--title", plot_cmd.title, "plot title");

    CmdReport report_cmd;
    auto* c_report = app.add_subcommand("report", "print the summary table of a run");
    c_report->add_option("--run", report_cmd.run_dir, "run directory")->required();

    CmdRunExperiment run_cmd;
    auto* c_run = app.add_subcommand("run-experiment", "run the full ensemble experiment");
    c_run->add_option("--config", run_cmd.config_path, "experiment config json")->required();
    c_run->add_option("--profile", run_cmd.profile, "full | desk")
        ->check(CLI::IsMember({"full", "desk"}));
    c_run->add_option("--out", run_cmd.out_dir, "run directory (default: config output_dir)");
    c_run->add_option("--jobs", run_cmd.jobs, "parallel member jobs (env PRBAND_JOBS)");
    c_run->add_flag("--quiet", run_cmd.quiet, "suppress stage lines");

    CmdVerify verify_cmd;
    auto* c_verify = app.add_subcommand("verify", "recompute and check manifest hashes");
    c_verify->add_option("--run", verify_cmd.run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (c_gen->parsed()) return gen_data.run();
        if (c_train->parsed()) return train_cmd.run();
        if (c_sample->parsed()) return sample_cmd.run();
        if (c_pr->parsed()) return pr_cmd.run();
        if (c_agg->parsed()) return agg_cmd.run();
        if (c_cmp->parsed()) return cmp_cmd.run();
        if (c_plot->parsed()) return plot_cmd.run();
        if (c_report->parsed()) return report_cmd.run();
        if (c_run->parsed()) return run_cmd.run();
        if (c_verify->parsed()) return verify_cmd.run();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
