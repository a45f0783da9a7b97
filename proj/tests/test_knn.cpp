#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include "prband/knn.hpp"
#include "prband/rng.hpp"

using namespace prband;

namespace {

// All-pairs oracle: full sort of (distance^2, index) per query.
std::vector<std::uint32_t> all_knn_oracle(const std::vector<double>& pts, std::size_t n, int dim,
                                          int k) {
    std::vector<std::uint32_t> out(n * static_cast<std::size_t>(k));
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<std::pair<double, std::uint32_t>> cand;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == q) continue;
            double d2 = 0;
            for (int d = 0; d < dim; ++d) {
                const double diff = pts[q * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] -
                                    pts[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)];
                d2 += diff * diff;
            }
            cand.emplace_back(d2, static_cast<std::uint32_t>(i));
        }
        std::sort(cand.begin(), cand.end());
        for (int j = 0; j < k; ++j)
            out[q * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] =
                cand[static_cast<std::size_t>(j)].second;
    }
    return out;
}

std::vector<double> random_points(std::size_t n, int dim, std::uint64_t seed) {
    std::vector<double> pts(n * static_cast<std::size_t>(dim));
    Rng rng(seed);
    for (auto& v : pts) v = rng.uniform(-10, 10);
    return pts;
}

}  // namespace

TEST_CASE("brute force equals the all-pairs oracle") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto pts = random_points(40, 2, seed);
        for (int k : {1, 3, 5}) {
            CHECK(all_knn(pts, 40, 2, k, NeighborSearch::Brute) == all_knn_oracle(pts, 40, 2, k));
        }
    }
}

TEST_CASE("kd-tree equals brute force, ties included") {
    for (std::size_t n : {5u, 64u, 300u, 1500u}) {
        const auto pts = random_points(n, 2, 17 + n);
        for (int k : {1, 5}) {
            if (static_cast<std::size_t>(k) >= n) continue;
            CHECK(all_knn(pts, n, 2, k, NeighborSearch::KdTree) ==
                  all_knn(pts, n, 2, k, NeighborSearch::Brute));
        }
    }
}

TEST_CASE("kd-tree handles duplicated coordinates deterministically") {
    // Ten distinct points, each duplicated once: every query has exact
    // distance ties that must resolve by index.
    std::vector<double> pts;
    Rng rng(5);
    std::vector<double> base;
    for (int i = 0; i < 10; ++i) {
        base.push_back(rng.uniform(-3, 3));
        base.push_back(rng.uniform(-3, 3));
    }
    pts = base;
    pts.insert(pts.end(), base.begin(), base.end());

    for (int k : {1, 2, 4}) {
        const auto brute = all_knn(pts, 20, 2, k, NeighborSearch::Brute);
        const auto tree = all_knn(pts, 20, 2, k, NeighborSearch::KdTree);
        CHECK(brute == tree);
        CHECK(brute == all_knn_oracle(pts, 20, 2, k));
    }

    // The duplicate of each point is its nearest neighbor at distance zero.
    const auto nn = all_knn(pts, 20, 2, 1, NeighborSearch::KdTree);
    for (std::uint32_t q = 0; q < 20; ++q) CHECK(nn[q] == (q + 10) % 20);
}

TEST_CASE("identical points everywhere still work") {
    std::vector<double> pts(16, 1.5);  // eight copies of (1.5, 1.5)
    const auto brute = all_knn(pts, 8, 2, 3, NeighborSearch::Brute);
    const auto tree = all_knn(pts, 8, 2, 3, NeighborSearch::KdTree);
    CHECK(brute == tree);
    // Neighbors of query q are the lowest indices other than q.
    for (std::uint32_t q = 0; q < 8; ++q) {
        std::vector<std::uint32_t> expect;
        for (std::uint32_t i = 0; expect.size() < 3; ++i)
            if (i != q) expect.push_back(i);
        for (int j = 0; j < 3; ++j)
            CHECK(brute[q * 3 + static_cast<std::uint32_t>(j)] == expect[static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("all_knn validates arguments") {
    const auto pts = random_points(10, 2, 1);
    CHECK_THROWS_AS(all_knn(pts, 10, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(all_knn(pts, 10, 2, 10), std::invalid_argument);
    CHECK_THROWS_AS(all_knn(pts, 9, 2, 3), std::invalid_argument);  // buffer mismatch
}
