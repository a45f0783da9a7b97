#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "prband/diffusion.hpp"

using namespace prband;
namespace fs = std::filesystem;

namespace {

SampleSet gaussian_cloud(std::size_t n, std::uint64_t seed) {
    SampleSet s;
    s.dim = 2;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double p[2] = {rng.normal(), rng.normal()};
        s.push(p);
    }
    return s;
}

std::vector<double> flatten(const ScoreNetParams& p) {
    std::vector<double> v;
    for_each_tensor(p, [&](const auto& t) { v.insert(v.end(), t.data(), t.data() + t.size()); });
    return v;
}

}  // namespace

TEST_CASE("train validates its configuration") {
    const auto data = gaussian_cloud(64, 1);
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(data, cfg), std::invalid_argument);
    cfg.epochs = 2;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(data, cfg), std::invalid_argument);
    cfg.batch_size = 32;
    CHECK_THROWS_AS(train(SampleSet{}, cfg), std::invalid_argument);
}

TEST_CASE("per-depth epoch defaults") {
    CHECK(default_epochs(1) == 10000);
    CHECK(default_epochs(2) == 10000);
    CHECK(default_epochs(4) == 15000);
    CHECK(default_epochs(8) == 20000);
    TrainConfig cfg;
    cfg.depth = 8;
    CHECK(cfg.resolved_epochs() == 20000);
    cfg.epochs = 7;
    CHECK(cfg.resolved_epochs() == 7);
}

TEST_CASE("training is bitwise deterministic") {
    const auto data = gaussian_cloud(128, 2);
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.T = 50;
    cfg.seed = 123;
    cfg.dims = NetDims{2, 16, 24, 8};
    const auto m1 = train(data, cfg);
    const auto m2 = train(data, cfg);
    CHECK(flatten(m1.params) == flatten(m2.params));
    CHECK(m1.final_loss == m2.final_loss);
}

TEST_CASE("loss decreases on the gaussian smoke task") {
    const auto data = gaussian_cloud(512, 3);
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.epochs = 40;
    cfg.batch_size = 128;
    cfg.T = 100;
    cfg.seed = 7;
    cfg.dims = NetDims{2, 16, 24, 8};

    std::vector<double> losses;
    const auto model = train(data, cfg, [&](const EpochLogEntry& e) { losses.push_back(e.mean_loss); });
    REQUIRE(losses.size() == 40);
    CHECK(losses.back() < losses.front());
    CHECK(model.final_loss == losses.back());
}

TEST_CASE("sampling the zero network equals the pure-noise recursion") {
    // With all-zero parameters the predicted noise vanishes, so the reverse
    // chain is x_{t-1} = x_t / sqrt(alpha_t) + sqrt(beta_t) * z. Replay the
    // same seeded stream through an independent implementation of that
    // recursion and demand bitwise identity.
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.T = 1000;
    cfg.dims = NetDims{2, 8, 12, 4};
    TrainedModel model;
    model.config = cfg;
    model.schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    model.params = init(cfg.depth, 0, cfg.dims);
    for_each_tensor(model.params, [](auto& t) { t.setZero(); });

    const std::size_t n = 200;
    const auto got = sample(model, static_cast<std::int64_t>(n), 55, "zero");

    Rng rng(55);
    std::vector<double> x(n * 2);
    for (auto& v : x) v = rng.normal();
    for (int t = cfg.T - 1; t >= 0; --t) {
        const auto ut = static_cast<std::size_t>(t);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(model.schedule.alphas[ut]);
        const double coef = model.schedule.betas[ut] /
                            std::sqrt(1.0 - model.schedule.alpha_bars[ut]);
        for (auto& v : x) v = inv_sqrt_alpha * (v - coef * 0.0);
        if (t > 0) {
            const double sigma = std::sqrt(model.schedule.betas[ut]);
            for (auto& v : x) v += sigma * rng.normal();
        }
    }
    CHECK(got.data == x);
    CHECK(got.origin == Origin::Generated);
    CHECK(got.model_id == "zero");
}

TEST_CASE("zero-network samples are centered") {
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.T = 100;
    cfg.dims = NetDims{2, 8, 12, 4};
    TrainedModel model;
    model.config = cfg;
    model.schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    model.params = init(cfg.depth, 0, cfg.dims);
    for_each_tensor(model.params, [](auto& t) { t.setZero(); });

    const auto s = sample(model, 10000, 77, "zero");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        mx += s.point(i)[0];
        my += s.point(i)[1];
    }
    mx /= static_cast<double>(s.size());
    my /= static_cast<double>(s.size());
    CHECK(std::fabs(mx) < 0.1);
    CHECK(std::fabs(my) < 0.1);
}

TEST_CASE("sample rejects bad counts and repeats deterministically") {
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.T = 20;
    cfg.dims = NetDims{2, 8, 12, 4};
    TrainedModel model;
    model.config = cfg;
    model.schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    model.params = init(cfg.depth, 4, cfg.dims);

    CHECK_THROWS_AS(sample(model, 0, 1), std::invalid_argument);
    const auto a = sample(model, 50, 9, "m");
    const auto b = sample(model, 50, 9, "m");
    CHECK(a.data == b.data);
}

TEST_CASE("non-finite trajectories are reported") {
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.T = 20;
    cfg.dims = NetDims{2, 8, 12, 4};
    TrainedModel model;
    model.config = cfg;
    model.schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    model.params = init(cfg.depth, 4, cfg.dims);
    for_each_tensor(model.params, [](auto& t) { t.setConstant(1e200); });
    CHECK_THROWS_AS(sample(model, 10, 1), std::runtime_error);
}

TEST_CASE("training aborts with a diagnostic on numeric failure") {
    const auto data = gaussian_cloud(64, 5);
    TrainConfig cfg;
    cfg.depth = 1;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.T = 20;
    cfg.lr = 1e60;  // drives the parameters to overflow within a few steps
    cfg.dims = NetDims{2, 8, 12, 4};
    CHECK_THROWS_WITH(train(data, cfg), Catch::Matchers::ContainsSubstring("epoch"));
}

TEST_CASE("checkpoints round-trip bitwise") {
    const auto data = gaussian_cloud(96, 6);
    TrainConfig cfg;
    cfg.depth = 2;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.T = 30;
    cfg.seed = 17;
    cfg.dims = NetDims{2, 8, 12, 4};
    const auto model = train(data, cfg);

    const auto dir = fs::temp_directory_path() / "prband_ckpt_tests";
    fs::create_directories(dir);
    const auto path = dir / "model.ckpt";
    save_checkpoint(model, path);
    const auto back = load_checkpoint(path);

    CHECK(flatten(back.params) == flatten(model.params));
    CHECK(back.schedule.betas == model.schedule.betas);
    CHECK(back.config.depth == 2);
    CHECK(back.config.T == 30);
    CHECK(back.config.seed == 17);
    CHECK(back.final_loss == model.final_loss);

    // Sampling from the reloaded model reproduces the original stream.
    CHECK(sample(back, 20, 3, "x").data == sample(model, 20, 3, "x").data);
}

TEST_CASE("corrupt checkpoints are rejected") {
    const auto dir = fs::temp_directory_path() / "prband_ckpt_tests";
    fs::create_directories(dir);

    const auto bogus = dir / "bogus.ckpt";
    std::ofstream(bogus) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(bogus), std::runtime_error);

    TrainConfig cfg;
    cfg.depth = 1;
    cfg.T = 10;
    cfg.dims = NetDims{2, 8, 12, 4};
    TrainedModel model;
    model.config = cfg;
    model.schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    model.params = init(1, 2, cfg.dims);
    const auto path = dir / "trunc.ckpt";
    save_checkpoint(model, path);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 64);
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}
