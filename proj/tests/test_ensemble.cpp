#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "prband/ensemble.hpp"
#include "prband/rng.hpp"

using namespace prband;

namespace {

PRCurve synthetic_curve(const std::vector<double>& betas, const std::vector<double>& alphas,
                        const std::string& id = "") {
    PRCurve c;
    c.grid.lambdas.resize(betas.size(), 1.0);
    c.grid.phis.resize(betas.size(), 0.785);
    c.betas = betas;
    c.alphas = alphas;
    c.meta.model_id = id;
    return c;
}

InterpolatedCurve constant_curve(const RecallGrid& grid, double value, const std::string& id = "") {
    InterpolatedCurve c;
    c.grid = grid;
    c.precisions.assign(grid.size(), value);
    c.model_id = id;
    return c;
}

}  // namespace

TEST_CASE("recall grid spans [0,1] inclusively") {
    const auto g = RecallGrid::make(500);
    REQUIRE(g.size() == 500);
    CHECK(g.betas.front() == 0.0);
    CHECK(g.betas.back() == 1.0);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g.betas[i] > g.betas[i - 1]);
    CHECK_THROWS_AS(RecallGrid::make(1), std::invalid_argument);
}

TEST_CASE("interpolation is exact at knots") {
    const std::vector<double> betas{0.1, 0.3, 0.6, 0.9};
    const std::vector<double> alphas{0.9, 0.7, 0.5, 0.2};
    const auto curve = synthetic_curve(betas, alphas);
    RecallGrid grid;
    grid.betas = betas;
    const auto interp = interpolate(curve, grid);
    CHECK(interp.precisions == alphas);
}

TEST_CASE("interpolation of a straight segment") {
    const auto curve = synthetic_curve({0.0, 1.0}, {1.0, 0.0});
    RecallGrid grid;
    grid.betas = {0.0, 0.5, 1.0};
    const auto interp = interpolate(curve, grid);
    CHECK(interp.precisions == std::vector<double>{1.0, 0.5, 0.0});
}

TEST_CASE("duplicate recall values collapse to the best precision") {
    const auto curve = synthetic_curve({0.2, 0.4, 0.4, 0.8}, {0.9, 0.2, 0.6, 0.1});
    RecallGrid grid;
    grid.betas = {0.4};
    const auto interp = interpolate(curve, grid);
    CHECK(interp.precisions == std::vector<double>{0.6});
}

TEST_CASE("interpolation clamps beyond the observed recall range") {
    const auto curve = synthetic_curve({0.3, 0.7}, {0.8, 0.4});
    const auto grid = RecallGrid::make(11);  // 0, 0.1, ..., 1
    const auto interp = interpolate(curve, grid);
    CHECK(interp.precisions.front() == 0.8);
    CHECK(interp.precisions.back() == 0.4);
    CHECK(interp.precisions[3] == Catch::Approx(0.8).epsilon(1e-12));  // beta = 0.3
    CHECK(interp.precisions[5] == Catch::Approx(0.6).epsilon(1e-12));  // beta = 0.5
}

TEST_CASE("interpolated values stay within the hull of adjacent knots") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> betas, alphas;
        double b = 0.0;
        for (int i = 0; i < 12; ++i) {
            b += rng.uniform(0.01, 0.1);
            betas.push_back(std::min(b, 1.0));
            alphas.push_back(rng.uniform(0.0, 1.0));
        }
        const auto curve = synthetic_curve(betas, alphas);
        const auto grid = RecallGrid::make(101);
        const auto interp = interpolate(curve, grid);
        double lo = 1e300, hi = -1e300;
        for (double a : alphas) {
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        for (double v : interp.precisions) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("aggregating identical curves gives zero width and variance") {
    const auto grid = RecallGrid::make(21);
    Rng rng(5);
    InterpolatedCurve base = constant_curve(grid, 0.0, "m0");
    for (auto& p : base.precisions) p = rng.uniform(0.2, 0.9);

    std::vector<InterpolatedCurve> curves(7, base);
    const auto band = aggregate(curves);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        CHECK(band.width[j] == 0.0);
        CHECK(band.mean[j] == Catch::Approx(base.precisions[j]).epsilon(1e-12));
    }
    CHECK(band.auc_variance == 0.0);
    CHECK(band.mean_width() == 0.0);
}

TEST_CASE("two-member band matches hand-applied type-7 quantiles") {
    const auto grid = RecallGrid::make(5);
    const std::vector<InterpolatedCurve> curves{constant_curve(grid, 0.2, "a"),
                                                constant_curve(grid, 0.8, "b")};
    const auto band = aggregate(curves, 10, 90);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        CHECK(band.mean[j] == Catch::Approx(0.5).epsilon(1e-12));
        CHECK(band.q_lo[j] == Catch::Approx(0.26).epsilon(1e-12));
        CHECK(band.q_hi[j] == Catch::Approx(0.74).epsilon(1e-12));
        CHECK(band.width[j] == Catch::Approx(0.48).epsilon(1e-12));
    }
    CHECK(band.auc_per_model[0] == Catch::Approx(0.2).epsilon(1e-12));
    CHECK(band.auc_per_model[1] == Catch::Approx(0.8).epsilon(1e-12));
    CHECK(band.auc_mean == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(band.auc_variance == Catch::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("aggregate rejects bad inputs") {
    const auto grid = RecallGrid::make(5);
    const std::vector<InterpolatedCurve> one{constant_curve(grid, 0.5)};
    CHECK_THROWS_AS(aggregate(one), std::invalid_argument);

    std::vector<InterpolatedCurve> mismatched{constant_curve(grid, 0.5),
                                              constant_curve(RecallGrid::make(7), 0.5)};
    CHECK_THROWS_AS(aggregate(mismatched), std::invalid_argument);

    const std::vector<InterpolatedCurve> two{constant_curve(grid, 0.4),
                                             constant_curve(grid, 0.6)};
    CHECK_THROWS_AS(aggregate(two, 90, 10), std::invalid_argument);
}

TEST_CASE("radial aggregation widths follow the two-member quantile rule") {
    const auto grid = SlopeGrid::make(9);
    PRCurve a, b;
    a.grid = b.grid = grid;
    Rng rng(6);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        a.alphas.push_back(rng.uniform(0.1, 0.9));
        b.alphas.push_back(rng.uniform(0.1, 0.9));
        a.betas.push_back(0.5);
        b.betas.push_back(0.5);
    }
    const std::vector<PRCurve> curves{a, b};
    const auto band = radial_aggregate(curves);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CHECK(band.width[i] ==
              Catch::Approx(std::fabs(a.alphas[i] - b.alphas[i]) * 0.8).epsilon(1e-12));
        CHECK(band.width[i] >= 0.0);
    }
    CHECK(band.overlay_stride == 5);
    REQUIRE(band.member_alphas.size() == 2);
    CHECK(band.member_alphas[0] == a.alphas);

    const std::vector<PRCurve> same{a, a, a};
    const auto flat = radial_aggregate(same);
    for (double w : flat.width) CHECK(w == 0.0);

    PRCurve other = a;
    other.grid = SlopeGrid::make(7);
    other.alphas.resize(7);
    other.betas.resize(7);
    const std::vector<PRCurve> bad{a, other};
    CHECK_THROWS_AS(radial_aggregate(bad), std::invalid_argument);
}

TEST_CASE("identical ensembles are never significant") {
    const auto grid = RecallGrid::make(50);
    Rng rng(7);
    std::vector<InterpolatedCurve> ens;
    for (int m = 0; m < 10; ++m) {
        auto c = constant_curve(grid, 0.0);
        for (auto& p : c.precisions) p = rng.uniform(0.3, 0.9);
        ens.push_back(c);
    }
    const auto rep = significance_mask(ens, ens, 0.05);
    CHECK(rep.fraction_significant == 0.0);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        CHECK(rep.p_values[j] == 0.5);
        CHECK(rep.mask[j] == 0);
    }
}

TEST_CASE("a large uniform shift is significant everywhere") {
    const auto grid = RecallGrid::make(40);
    Rng rng(8);
    std::vector<InterpolatedCurve> a, b;
    for (int m = 0; m < 10; ++m) {
        auto base = constant_curve(grid, 0.0);
        for (auto& p : base.precisions) p = 0.4 + 0.02 * rng.normal();
        a.push_back(base);
        auto shifted = base;
        for (auto& p : shifted.precisions) p += 0.3;  // ten times the spread
        b.push_back(shifted);
    }
    const auto rep = significance_mask(a, b, 0.05);
    CHECK(rep.fraction_significant == 1.0);

    // Reversed direction: the one-sided test must not fire.
    const auto rev = significance_mask(b, a, 0.05);
    CHECK(rev.fraction_significant == 0.0);
}

TEST_CASE("significance fraction equals mask popcount over grid size") {
    const auto grid = RecallGrid::make(30);
    Rng rng(9);
    std::vector<InterpolatedCurve> a, b;
    for (int m = 0; m < 12; ++m) {
        auto ca = constant_curve(grid, 0.0);
        auto cb = constant_curve(grid, 0.0);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            ca.precisions[j] = 0.5 + 0.05 * rng.normal();
            // Half the grid gets a real effect.
            cb.precisions[j] = ca.precisions[j] + (j < 15 ? 0.2 : 0.0) + 0.05 * rng.normal();
        }
        a.push_back(ca);
        b.push_back(cb);
    }
    const auto rep = significance_mask(a, b, 0.05);
    std::size_t count = 0;
    for (char m : rep.mask) count += static_cast<std::size_t>(m);
    CHECK(rep.fraction_significant ==
          static_cast<double>(count) / static_cast<double>(grid.size()));
    // Holm is never more permissive than the raw mask.
    for (std::size_t j = 0; j < grid.size(); ++j) {
        CHECK(rep.p_holm[j] >= rep.p_values[j]);
        if (rep.mask_holm[j]) CHECK(rep.mask[j]);
    }
}

TEST_CASE("band reports round-trip through json") {
    const auto grid = RecallGrid::make(9);
    const std::vector<InterpolatedCurve> curves{constant_curve(grid, 0.3, "m0"),
                                                constant_curve(grid, 0.7, "m1")};
    const auto band = aggregate(curves);
    const auto j = band_to_json(band);
    const auto back = band_from_json(j);
    CHECK(back.grid.betas == band.grid.betas);
    CHECK(back.mean == band.mean);
    CHECK(back.q_lo == band.q_lo);
    CHECK(back.q_hi == band.q_hi);
    CHECK(back.width == band.width);
    CHECK(back.auc_per_model == band.auc_per_model);
    CHECK(back.auc_mean == band.auc_mean);
    CHECK(back.auc_variance == band.auc_variance);
    CHECK(back.model_ids == band.model_ids);
}

TEST_CASE("significance reports round-trip through json with provenance") {
    const auto grid = RecallGrid::make(12);
    Rng rng(10);
    std::vector<InterpolatedCurve> a, b;
    for (int m = 0; m < 5; ++m) {
        auto ca = constant_curve(grid, 0.0);
        for (auto& p : ca.precisions) p = rng.uniform(0.2, 0.8);
        a.push_back(ca);
        auto cb = ca;
        for (auto& p : cb.precisions) p += rng.uniform(0.0, 0.1);
        b.push_back(cb);
    }
    const auto rep = significance_mask(a, b, 0.05);
    const auto j = significance_to_json(rep, nlohmann::json{{"config_hash", "abc"}});
    CHECK(j.at("provenance").at("config_hash") == "abc");

    const auto back = significance_from_json(j);
    CHECK(back.p_values == rep.p_values);
    CHECK(back.fraction_significant == rep.fraction_significant);
    CHECK(back.level == rep.level);
    CHECK(back.two_sided == rep.two_sided);
    CHECK(back.mask == rep.mask);
}

TEST_CASE("radial band json round-trip") {
    const auto grid = SlopeGrid::make(7);
    PRCurve a, b;
    a.grid = b.grid = grid;
    a.alphas.assign(7, 0.4);
    a.betas.assign(7, 0.4);
    b.alphas.assign(7, 0.6);
    b.betas.assign(7, 0.6);
    const std::vector<PRCurve> curves{a, b};
    const auto band = radial_aggregate(curves);
    const auto back = radial_from_json(radial_to_json(band));
    CHECK(back.grid.lambdas == band.grid.lambdas);
    CHECK(back.mean == band.mean);
    CHECK(back.width == band.width);
    CHECK(back.member_alphas == band.member_alphas);
}
