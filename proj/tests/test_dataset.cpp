#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "prband/dataset.hpp"

using namespace prband;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "prband_dataset_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("ring clusters sit on the configured circle") {
    RingConfig cfg;
    cfg.n_samples = 20000;
    cfg.seed = 11;
    const auto ring = generate_ring(cfg);
    REQUIRE(ring.samples.size() == 20000);

    const auto stds = resolved_cluster_stds(cfg);
    std::vector<double> sum_x(8, 0.0), sum_y(8, 0.0);
    std::vector<int> count(8, 0);
    for (std::size_t i = 0; i < ring.samples.size(); ++i) {
        const auto k = static_cast<std::size_t>(ring.cluster_of[i]);
        sum_x[k] += ring.samples.point(i)[0];
        sum_y[k] += ring.samples.point(i)[1];
        ++count[k];
    }
    for (int k = 0; k < 8; ++k) {
        REQUIRE(count[static_cast<std::size_t>(k)] > 0);
        const double cx = 5.0 * std::cos(2.0 * M_PI * k / 8);
        const double cy = 5.0 * std::sin(2.0 * M_PI * k / 8);
        const auto uk = static_cast<std::size_t>(k);
        CHECK(std::fabs(sum_x[uk] / count[uk] - cx) < 0.05);
        CHECK(std::fabs(sum_y[uk] / count[uk] - cy) < 0.05);
    }
}

TEST_CASE("truncation holds exactly for every accepted point") {
    RingConfig cfg;
    cfg.n_samples = 20000;
    cfg.seed = 12;
    const auto ring = generate_ring(cfg);
    const auto stds = resolved_cluster_stds(cfg);
    for (std::size_t i = 0; i < ring.samples.size(); ++i) {
        const auto k = static_cast<std::size_t>(ring.cluster_of[i]);
        const double ang = 2.0 * M_PI * static_cast<double>(k) / 8;
        const double mean[2] = {5.0 * std::cos(ang), 5.0 * std::sin(ang)};
        REQUIRE(mahalanobis(ring.samples.point(i), mean, stds[k]) <= cfg.truncation);
    }
}

TEST_CASE("same seed reproduces the dataset bitwise") {
    RingConfig cfg;
    cfg.n_samples = 5000;
    cfg.seed = 77;
    const auto a = generate_ring(cfg);
    const auto b = generate_ring(cfg);
    CHECK(a.samples.data == b.samples.data);
    CHECK(a.cluster_of == b.cluster_of);
}

TEST_CASE("cluster assignment is uniform (chi-square at 0.001)") {
    RingConfig cfg;
    cfg.n_samples = 20000;
    cfg.seed = 13;
    const auto ring = generate_ring(cfg);
    std::vector<int> count(8, 0);
    for (auto k : ring.cluster_of) ++count[static_cast<std::size_t>(k)];
    const double expected = 20000.0 / 8.0;
    double chi2 = 0.0;
    for (int c : count) chi2 += (c - expected) * (c - expected) / expected;
    // 0.999 quantile of chi-square with 7 degrees of freedom.
    CHECK(chi2 < 24.322);
}

TEST_CASE("rejection fraction matches the chi-square tail") {
    // For an isotropic 2-d Gaussian, P(|z| > t) = exp(-t^2/2); at t = 3 the
    // rejection fraction is 0.011109.
    RingConfig cfg;
    cfg.n_samples = 100000;
    cfg.seed = 14;
    const auto ring = generate_ring(cfg);
    const double fraction =
        static_cast<double>(ring.rejections) / static_cast<double>(ring.draws);
    CHECK(std::fabs(fraction - std::exp(-4.5)) < 0.005);
}

TEST_CASE("degenerate std collapses points onto the cluster mean") {
    RingConfig cfg;
    cfg.n_samples = 100;
    cfg.n_clusters = 1;
    cfg.cluster_stds = {1e-9};
    cfg.seed = 3;
    const auto ring = generate_ring(cfg);
    for (std::size_t i = 0; i < ring.samples.size(); ++i) {
        CHECK(std::fabs(ring.samples.point(i)[0] - 5.0) < 1e-6);
        CHECK(std::fabs(ring.samples.point(i)[1] - 0.0) < 1e-6);
    }
}

TEST_CASE("ring config is validated") {
    RingConfig cfg;
    cfg.n_samples = 0;
    CHECK_THROWS_AS(generate_ring(cfg), std::invalid_argument);
    cfg.n_samples = 10;
    cfg.cluster_stds = {0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, -0.5};
    CHECK_THROWS_AS(generate_ring(cfg), std::invalid_argument);
    cfg.cluster_stds.clear();
    cfg.truncation = 0.0;
    CHECK_THROWS_AS(generate_ring(cfg), std::invalid_argument);
}

TEST_CASE("mahalanobis distance") {
    const double origin[2] = {0, 0};
    const double p[2] = {3, 4};
    CHECK(mahalanobis(p, p, 1.0) == 0.0);
    CHECK(mahalanobis(p, origin, 1.0) == 5.0);
    CHECK(mahalanobis(p, origin, 2.0) == 2.5);
    CHECK_THROWS_AS(mahalanobis(p, origin, 0.0), std::invalid_argument);
}

TEST_CASE("split partitions with round-half-up sizes") {
    RingConfig cfg;
    cfg.n_samples = 20000;
    cfg.seed = 21;
    const auto ring = generate_ring(cfg);
    const auto [train, valid] = split(ring.samples, 0.5, 99);
    CHECK(train.size() == 10000);
    CHECK(valid.size() == 10000);

    // Union as a multiset equals the input; the halves are disjoint.
    std::multiset<std::pair<double, double>> all, parts;
    for (std::size_t i = 0; i < ring.samples.size(); ++i)
        all.insert({ring.samples.point(i)[0], ring.samples.point(i)[1]});
    std::set<std::pair<double, double>> train_pts;
    for (std::size_t i = 0; i < train.size(); ++i) {
        parts.insert({train.point(i)[0], train.point(i)[1]});
        train_pts.insert({train.point(i)[0], train.point(i)[1]});
    }
    bool disjoint = true;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        parts.insert({valid.point(i)[0], valid.point(i)[1]});
        disjoint = disjoint && !train_pts.count({valid.point(i)[0], valid.point(i)[1]});
    }
    CHECK(all == parts);
    CHECK(disjoint);
}

TEST_CASE("split of seven points rounds half up") {
    SampleSet s;
    s.dim = 2;
    for (int i = 0; i < 7; ++i) {
        const double p[2] = {static_cast<double>(i), 0.0};
        s.push(p);
    }
    const auto [train, valid] = split(s, 0.5, 1);
    CHECK(train.size() == 4);
    CHECK(valid.size() == 3);
}

TEST_CASE("split is deterministic and rejects bad input") {
    SampleSet s;
    s.dim = 2;
    for (int i = 0; i < 10; ++i) {
        const double p[2] = {static_cast<double>(i), -static_cast<double>(i)};
        s.push(p);
    }
    const auto [a1, b1] = split(s, 0.5, 5);
    const auto [a2, b2] = split(s, 0.5, 5);
    CHECK(a1.data == a2.data);
    CHECK(b1.data == b2.data);

    SampleSet empty;
    CHECK_THROWS_AS(split(empty, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(split(s, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(split(s, 1.0, 0), std::invalid_argument);
}

TEST_CASE("csv round-trips bitwise") {
    RingConfig cfg;
    cfg.n_samples = 500;
    cfg.seed = 31;
    const auto ring = generate_ring(cfg);
    const auto path = temp_dir() / "roundtrip.csv";
    write_csv(ring.samples, path);
    const auto back = read_csv(path);
    CHECK(back.dim == 2);
    CHECK(back.data == ring.samples.data);
}

TEST_CASE("csv rejects empty and malformed files") {
    const auto dir = temp_dir();

    const auto empty = dir / "empty.csv";
    std::ofstream(empty).close();
    CHECK_THROWS_AS(read_csv(empty), std::runtime_error);

    const auto header_only = dir / "header_only.csv";
    std::ofstream(header_only) << "x0,x1\n";
    CHECK_THROWS_AS(read_csv(header_only), std::runtime_error);

    const auto bad = dir / "bad.csv";
    std::ofstream(bad) << "x0,x1\n1.0,2.0\n3.0,4.0,5.0\n";
    CHECK_THROWS_WITH(read_csv(bad), Catch::Matchers::ContainsSubstring("line 3"));

    const auto junk = dir / "junk.csv";
    std::ofstream(junk) << "x0,x1\n1.0,abc\n";
    CHECK_THROWS_WITH(read_csv(junk), Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("dataset manifest records the generating config") {
    RingConfig cfg;
    cfg.n_samples = 123;
    cfg.seed = 9;
    const auto j = dataset_manifest_json(cfg);
    CHECK(j.at("n_samples").get<std::int64_t>() == 123);
    CHECK(j.at("n_clusters").get<int>() == 8);
    CHECK(j.at("radius").get<double>() == 5.0);
    CHECK(j.at("truncation").get<double>() == 3.0);
    CHECK(j.at("seed").get<std::uint64_t>() == 9);
    CHECK(j.at("cluster_stds").size() == 8);
    CHECK(j.contains("created_by_version"));
}
