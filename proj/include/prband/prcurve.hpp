#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/dataset.hpp"
#include "prband/knn.hpp"

namespace prband {

/// Discrete slope set: lambda_k = tan(phi_k) with phi_k = k*(pi/2)/(n+1)
/// for k = 1..n. The open interval keeps every tangent finite.
struct SlopeGrid {
    std::vector<double> phis;
    std::vector<double> lambdas;

    std::size_t size() const { return lambdas.size(); }

    static SlopeGrid make(int n_phi) {
        if (n_phi < 2) throw std::invalid_argument("SlopeGrid: n_phi must be >= 2");
        SlopeGrid g;
        g.phis.resize(static_cast<std::size_t>(n_phi));
        g.lambdas.resize(static_cast<std::size_t>(n_phi));
        const double half_pi = 1.5707963267948966192313216916398;
        for (int k = 1; k <= n_phi; ++k) {
            const double phi = half_pi * k / (n_phi + 1);
            g.phis[static_cast<std::size_t>(k - 1)] = phi;
            g.lambdas[static_cast<std::size_t>(k - 1)] = std::tan(phi);
        }
        return g;
    }
};

/// Pooled leave-one-out kNN scores: for every point of real+gen, the
/// fraction of its k nearest pool neighbors that are real.
struct KnnScores {
    std::vector<double> real;
    std::vector<double> gen;
    int k = 0;
};

inline KnnScores knn_scores(const SampleSet& real, const SampleSet& gen, int k,
                            NeighborSearch method = NeighborSearch::Auto) {
    if (real.dim != gen.dim) throw std::invalid_argument("knn_scores: dimension mismatch");
    const std::size_t n_real = real.size();
    const std::size_t n_gen = gen.size();
    const std::size_t n = n_real + n_gen;
    if (n_real == 0 || n_gen == 0) throw std::invalid_argument("knn_scores: empty sample set");
    if (k < 1 || static_cast<std::size_t>(k) >= n - 1)
        throw std::invalid_argument("knn_scores: need 1 <= k < |real| + |gen| - 1");

    // Pool order: real points first, then generated; index ties resolve in
    // this order.
    std::vector<double> pool;
    pool.reserve(n * static_cast<std::size_t>(real.dim));
    pool.insert(pool.end(), real.data.begin(), real.data.end());
    pool.insert(pool.end(), gen.data.begin(), gen.data.end());

    const auto neighbors = all_knn(pool, n, real.dim, k, method);

    KnnScores out;
    out.k = k;
    out.real.resize(n_real);
    out.gen.resize(n_gen);
    for (std::size_t q = 0; q < n; ++q) {
        int real_count = 0;
        for (int j = 0; j < k; ++j)
            if (neighbors[q * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] < n_real)
                ++real_count;
        const double score = static_cast<double>(real_count) / k;
        if (q < n_real)
            out.real[q] = score;
        else
            out.gen[q - n_real] = score;
    }
    return out;
}

struct CurveMeta {
    int k = 0;
    std::size_t n_real = 0;
    std::size_t n_gen = 0;
    std::string model_id;
};

/// Discrete PR curve {(alpha_lambda, beta_lambda)} over a slope grid.
struct PRCurve {
    SlopeGrid grid;
    std::vector<double> alphas;
    std::vector<double> betas;
    CurveMeta meta;
};

namespace detail {

struct RatePoint {
    double fpr;  // fraction of real scores <= threshold
    double fnr;  // fraction of gen scores > threshold
};

/// Threshold candidates: a sentinel below the smallest observed score,
/// midpoints between consecutive distinct score levels, and a sentinel
/// above the largest. The sentinels pin the exact bounds
/// alpha <= min(lambda, 1) and beta <= min(1/lambda, 1).
inline std::vector<RatePoint> rate_points(const KnnScores& scores) {
    std::vector<double> levels;
    levels.reserve(scores.real.size() + scores.gen.size());
    levels.insert(levels.end(), scores.real.begin(), scores.real.end());
    levels.insert(levels.end(), scores.gen.begin(), scores.gen.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    std::vector<double> thresholds;
    thresholds.reserve(levels.size() + 1);
    thresholds.push_back(levels.front() - 1.0);
    for (std::size_t i = 0; i + 1 < levels.size(); ++i)
        thresholds.push_back(0.5 * (levels[i] + levels[i + 1]));
    thresholds.push_back(levels.back() + 1.0);

    std::vector<double> sr = scores.real;
    std::vector<double> sg = scores.gen;
    std::sort(sr.begin(), sr.end());
    std::sort(sg.begin(), sg.end());

    std::vector<RatePoint> pts;
    pts.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto real_le =
            static_cast<double>(std::upper_bound(sr.begin(), sr.end(), t) - sr.begin());
        const auto gen_gt =
            static_cast<double>(sg.end() - std::upper_bound(sg.begin(), sg.end(), t));
        pts.push_back({real_le / static_cast<double>(sr.size()),
                       gen_gt / static_cast<double>(sg.size())});
    }
    return pts;
}

}  // namespace detail

inline PRCurve pr_curve_from_scores(const KnnScores& scores, const SlopeGrid& grid,
                                    CurveMeta meta = {}) {
    const auto pts = detail::rate_points(scores);
    PRCurve curve;
    curve.grid = grid;
    curve.meta = meta;
    curve.meta.k = scores.k;
    curve.alphas.resize(grid.size());
    curve.betas.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double lambda = grid.lambdas[i];
        double alpha = std::numeric_limits<double>::infinity();
        double beta = std::numeric_limits<double>::infinity();
        for (const auto& rp : pts) {
            alpha = std::min(alpha, lambda * rp.fpr + rp.fnr);
            beta = std::min(beta, rp.fpr + rp.fnr / lambda);
        }
        curve.alphas[i] = std::clamp(alpha, 0.0, 1.0);
        curve.betas[i] = std::clamp(beta, 0.0, 1.0);
    }
    return curve;
}

/// Classifier-based PR curve between two sample sets: threshold rules on the
/// pooled kNN score, with alpha_lambda = min_t {lambda*fpr + fnr} and
/// beta_lambda = min_t {fpr + fnr/lambda}.
inline PRCurve pr_curve(const SampleSet& real, const SampleSet& gen, int k, const SlopeGrid& grid,
                        NeighborSearch method = NeighborSearch::Auto) {
    const KnnScores scores = knn_scores(real, gen, k, method);
    return pr_curve_from_scores(scores, grid,
                                CurveMeta{k, real.size(), gen.size(), gen.model_id});
}

/// Trapezoidal integral of y over x. x must be sorted ascending.
inline double trapezoid_auc(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("trapezoid_auc: need two or more matching points");
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        if (x[i + 1] < x[i]) throw std::invalid_argument("trapezoid_auc: grid not sorted");
        acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Curve persistence: CSV with one row per grid point plus a JSON sidecar.

inline void write_curve_csv(const PRCurve& curve, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_curve_csv: cannot open " + path.string());
    f << "phi,lambda,alpha,beta\n";
    char buf[144];
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", curve.grid.phis[i],
                      curve.grid.lambdas[i], curve.alphas[i], curve.betas[i]);
        f << buf;
    }
    if (!f) throw std::runtime_error("write_curve_csv: write failed for " + path.string());
}

inline void write_curve_meta(const PRCurve& curve, const std::filesystem::path& path,
                             const nlohmann::json& seed_lineage = {}) {
    nlohmann::json j{{"k", curve.meta.k},
                     {"n_real", curve.meta.n_real},
                     {"n_gen", curve.meta.n_gen},
                     {"model_id", curve.meta.model_id},
                     {"n_phi", curve.grid.size()}};
    if (!seed_lineage.is_null()) j["seed_lineage"] = seed_lineage;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_curve_meta: cannot open " + path.string());
    f << j.dump(2) << '\n';
}

inline PRCurve read_curve_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_curve_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != "phi,lambda,alpha,beta")
        throw std::runtime_error("read_curve_csv: " + path.string() + ": bad or missing header");
    PRCurve curve;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        double phi = 0, lambda = 0, alpha = 0, beta = 0;
        if (std::sscanf(line.c_str(), "%lg,%lg,%lg,%lg", &phi, &lambda, &alpha, &beta) != 4)
            throw std::runtime_error("read_curve_csv: " + path.string() + " line " +
                                     std::to_string(line_no) + ": expected 4 numeric fields");
        curve.grid.phis.push_back(phi);
        curve.grid.lambdas.push_back(lambda);
        curve.alphas.push_back(alpha);
        curve.betas.push_back(beta);
    }
    if (curve.grid.size() == 0)
        throw std::runtime_error("read_curve_csv: " + path.string() + " has no data rows");
    return curve;
}

}  // namespace prband
