#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/prcurve.hpp"
#include "prband/stats.hpp"

namespace prband {

/// Common recall grid B: linearly spaced values spanning [0, 1] inclusive.
struct RecallGrid {
    std::vector<double> betas;

    std::size_t size() const { return betas.size(); }

    static RecallGrid make(int n) {
        if (n < 2) throw std::invalid_argument("RecallGrid: need at least two points");
        RecallGrid g;
        g.betas.resize(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j)
            g.betas[static_cast<std::size_t>(j)] = static_cast<double>(j) / (n - 1);
        return g;
    }
};

struct InterpolatedCurve {
    RecallGrid grid;
    std::vector<double> precisions;  // alpha_m(beta_j)
    std::string model_id;
};

/// Resamples a PR curve onto a common recall grid: sort by recall, collapse
/// duplicate recall values to their best precision, interpolate linearly,
/// and clamp beyond the observed recall range to the edge precision.
inline InterpolatedCurve interpolate(const PRCurve& curve, const RecallGrid& grid) {
    if (curve.alphas.empty()) throw std::invalid_argument("interpolate: empty curve");

    std::vector<std::pair<double, double>> knots;  // (beta, alpha)
    knots.reserve(curve.alphas.size());
    for (std::size_t i = 0; i < curve.alphas.size(); ++i)
        knots.emplace_back(curve.betas[i], curve.alphas[i]);
    std::sort(knots.begin(), knots.end());

    std::vector<std::pair<double, double>> collapsed;
    collapsed.reserve(knots.size());
    for (const auto& kn : knots) {
        if (!collapsed.empty() && collapsed.back().first == kn.first)
            collapsed.back().second = std::max(collapsed.back().second, kn.second);
        else
            collapsed.push_back(kn);
    }

    InterpolatedCurve out;
    out.grid = grid;
    out.model_id = curve.meta.model_id;
    out.precisions.resize(grid.size());
    std::size_t seg = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double beta = grid.betas[j];
        double alpha;
        if (beta <= collapsed.front().first) {
            alpha = collapsed.front().second;
        } else if (beta >= collapsed.back().first) {
            alpha = collapsed.back().second;
        } else {
            while (collapsed[seg + 1].first < beta) ++seg;
            const auto& [b0, a0] = collapsed[seg];
            const auto& [b1, a1] = collapsed[seg + 1];
            alpha = a0 + (a1 - a0) * (beta - b0) / (b1 - b0);
        }
        out.precisions[j] = std::clamp(alpha, 0.0, 1.0);
    }
    return out;
}

inline double auc(const InterpolatedCurve& curve) {
    return trapezoid_auc(curve.grid.betas, curve.precisions);
}

// ---------------------------------------------------------------------------
// Ensemble aggregation

struct EnsembleBand {
    RecallGrid grid;
    std::vector<double> mean;
    std::vector<double> q_lo;
    std::vector<double> q_hi;
    std::vector<double> width;  // U_{beta_j} = q_hi - q_lo
    double q_lo_pct = 10.0;
    double q_hi_pct = 90.0;
    std::vector<double> auc_per_model;
    std::vector<std::string> model_ids;
    double auc_mean = 0.0;
    double auc_variance = 0.0;

    double mean_width() const {
        double s = 0.0;
        for (double w : width) s += w;
        return width.empty() ? 0.0 : s / static_cast<double>(width.size());
    }
};

inline EnsembleBand aggregate(std::span<const InterpolatedCurve> curves, double q_lo_pct = 10.0,
                              double q_hi_pct = 90.0) {
    if (curves.size() < 2) throw std::invalid_argument("aggregate: need at least two curves");
    if (!(q_lo_pct < q_hi_pct)) throw std::invalid_argument("aggregate: quantiles out of order");
    const auto& grid = curves.front().grid;
    for (const auto& c : curves)
        if (c.grid.betas != grid.betas) throw std::invalid_argument("aggregate: mismatched grids");

    EnsembleBand band;
    band.grid = grid;
    band.q_lo_pct = q_lo_pct;
    band.q_hi_pct = q_hi_pct;
    const std::size_t n = grid.size();
    const std::size_t m = curves.size();
    band.mean.resize(n);
    band.q_lo.resize(n);
    band.q_hi.resize(n);
    band.width.resize(n);

    std::vector<double> column(m);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) column[i] = curves[i].precisions[j];
        band.mean[j] = mean_variance(column).first;
        band.q_lo[j] = quantile(column, q_lo_pct);
        band.q_hi[j] = quantile(column, q_hi_pct);
        band.width[j] = band.q_hi[j] - band.q_lo[j];
    }

    band.auc_per_model.resize(m);
    band.model_ids.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        band.auc_per_model[i] = auc(curves[i]);
        band.model_ids[i] = curves[i].model_id;
    }
    const auto [auc_mean, auc_var] = mean_variance(band.auc_per_model);
    band.auc_mean = auc_mean;
    band.auc_variance = auc_var;
    return band;
}

/// Appendix-style aggregation at each slope: quantile intervals of the M
/// precision values per lambda_k, plus the raw member values for the
/// every-fifth-index overlay.
struct RadialBand {
    SlopeGrid grid;
    std::vector<double> mean;
    std::vector<double> q_lo;
    std::vector<double> q_hi;
    std::vector<double> width;  // U_{lambda_k}
    std::vector<std::vector<double>> member_alphas;  // M x n_phi
    double q_lo_pct = 10.0;
    double q_hi_pct = 90.0;
    int overlay_stride = 5;
};

inline RadialBand radial_aggregate(std::span<const PRCurve> curves, double q_lo_pct = 10.0,
                                   double q_hi_pct = 90.0) {
    if (curves.size() < 2) throw std::invalid_argument("radial_aggregate: need at least two curves");
    const auto& grid = curves.front().grid;
    for (const auto& c : curves)
        if (c.grid.lambdas != grid.lambdas)
            throw std::invalid_argument("radial_aggregate: mismatched slope grids");

    RadialBand band;
    band.grid = grid;
    band.q_lo_pct = q_lo_pct;
    band.q_hi_pct = q_hi_pct;
    const std::size_t n = grid.size();
    const std::size_t m = curves.size();
    band.mean.resize(n);
    band.q_lo.resize(n);
    band.q_hi.resize(n);
    band.width.resize(n);
    band.member_alphas.resize(m);
    for (std::size_t i = 0; i < m; ++i) band.member_alphas[i] = curves[i].alphas;

    std::vector<double> column(m);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) column[i] = curves[i].alphas[k];
        band.mean[k] = mean_variance(column).first;
        band.q_lo[k] = quantile(column, q_lo_pct);
        band.q_hi[k] = quantile(column, q_hi_pct);
        band.width[k] = band.q_hi[k] - band.q_lo[k];
    }
    return band;
}

// ---------------------------------------------------------------------------
// Significance

struct SignificanceReport {
    RecallGrid grid;
    std::vector<double> t_stats;
    std::vector<double> p_values;
    std::vector<char> mask;        // raw p < level
    std::vector<double> p_holm;    // Holm-adjusted p-values
    std::vector<char> mask_holm;
    double fraction_significant = 0.0;
    double level = 0.05;
    bool two_sided = false;
};

/// Per-recall paired test of (B - A) > 0 across ensemble members. The
/// reported fraction uses the raw mask; a Holm-corrected mask is emitted
/// alongside.
inline SignificanceReport significance_mask(std::span<const InterpolatedCurve> ens_a,
                                            std::span<const InterpolatedCurve> ens_b,
                                            double level = 0.05, bool two_sided = false) {
    if (ens_a.size() != ens_b.size() || ens_a.size() < 2)
        throw std::invalid_argument("significance_mask: need two equally sized ensembles");
    const auto& grid = ens_a.front().grid;
    for (const auto& c : ens_a)
        if (c.grid.betas != grid.betas) throw std::invalid_argument("significance_mask: mismatched grids");
    for (const auto& c : ens_b)
        if (c.grid.betas != grid.betas) throw std::invalid_argument("significance_mask: mismatched grids");
    if (!(level > 0 && level < 1)) throw std::invalid_argument("significance_mask: bad level");

    const std::size_t n = grid.size();
    const std::size_t m = ens_a.size();
    SignificanceReport rep;
    rep.grid = grid;
    rep.level = level;
    rep.two_sided = two_sided;
    rep.t_stats.resize(n);
    rep.p_values.resize(n);
    rep.mask.resize(n);

    std::vector<double> a(m), b(m);
    std::size_t significant = 0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = ens_a[i].precisions[j];
            b[i] = ens_b[i].precisions[j];
        }
        const TTestResult r = paired_t_test(a, b, two_sided);
        rep.t_stats[j] = r.t;
        rep.p_values[j] = r.p;
        rep.mask[j] = r.p < level ? 1 : 0;
        significant += rep.mask[j];
    }
    rep.fraction_significant = static_cast<double>(significant) / static_cast<double>(n);
    rep.p_holm = holm_adjust(rep.p_values);
    rep.mask_holm.resize(n);
    for (std::size_t j = 0; j < n; ++j) rep.mask_holm[j] = rep.p_holm[j] < level ? 1 : 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Report serialization

namespace detail {

inline double json_safe(double v) {
    if (std::isnan(v)) return 0.0;
    if (std::isinf(v)) return v > 0 ? 1e300 : -1e300;
    return v;
}

inline std::vector<double> json_safe(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = json_safe(v[i]);
    return out;
}

}  // namespace detail

inline nlohmann::json band_to_json(const EnsembleBand& band) {
    return nlohmann::json{{"grid", band.grid.betas},
                          {"mean", band.mean},
                          {"q_lo", band.q_lo},
                          {"q_hi", band.q_hi},
                          {"width", band.width},
                          {"quantiles", {{"lo", band.q_lo_pct}, {"hi", band.q_hi_pct}}},
                          {"auc",
                           {{"per_model", band.auc_per_model},
                            {"mean", band.auc_mean},
                            {"variance", band.auc_variance}}},
                          {"model_ids", band.model_ids}};
}

inline EnsembleBand band_from_json(const nlohmann::json& j) {
    EnsembleBand band;
    band.grid.betas = j.at("grid").get<std::vector<double>>();
    band.mean = j.at("mean").get<std::vector<double>>();
    band.q_lo = j.at("q_lo").get<std::vector<double>>();
    band.q_hi = j.at("q_hi").get<std::vector<double>>();
    band.width = j.at("width").get<std::vector<double>>();
    band.q_lo_pct = j.at("quantiles").at("lo").get<double>();
    band.q_hi_pct = j.at("quantiles").at("hi").get<double>();
    band.auc_per_model = j.at("auc").at("per_model").get<std::vector<double>>();
    band.auc_mean = j.at("auc").at("mean").get<double>();
    band.auc_variance = j.at("auc").at("variance").get<double>();
    if (j.contains("model_ids")) band.model_ids = j.at("model_ids").get<std::vector<std::string>>();
    return band;
}

inline nlohmann::json radial_to_json(const RadialBand& band) {
    return nlohmann::json{{"phi", band.grid.phis},
                          {"lambda", band.grid.lambdas},
                          {"mean", band.mean},
                          {"q_lo", band.q_lo},
                          {"q_hi", band.q_hi},
                          {"width", band.width},
                          {"quantiles", {{"lo", band.q_lo_pct}, {"hi", band.q_hi_pct}}},
                          {"member_alphas", band.member_alphas},
                          {"overlay_stride", band.overlay_stride}};
}

inline RadialBand radial_from_json(const nlohmann::json& j) {
    RadialBand band;
    band.grid.phis = j.at("phi").get<std::vector<double>>();
    band.grid.lambdas = j.at("lambda").get<std::vector<double>>();
    band.mean = j.at("mean").get<std::vector<double>>();
    band.q_lo = j.at("q_lo").get<std::vector<double>>();
    band.q_hi = j.at("q_hi").get<std::vector<double>>();
    band.width = j.at("width").get<std::vector<double>>();
    band.q_lo_pct = j.at("quantiles").at("lo").get<double>();
    band.q_hi_pct = j.at("quantiles").at("hi").get<double>();
    band.member_alphas = j.at("member_alphas").get<std::vector<std::vector<double>>>();
    band.overlay_stride = j.at("overlay_stride").get<int>();
    return band;
}

inline nlohmann::json significance_to_json(const SignificanceReport& rep,
                                           const nlohmann::json& provenance = {}) {
    std::vector<bool> mask(rep.mask.begin(), rep.mask.end());
    std::vector<bool> mask_holm(rep.mask_holm.begin(), rep.mask_holm.end());
    nlohmann::json j{{"grid", rep.grid.betas},
                     {"t", detail::json_safe(rep.t_stats)},
                     {"p", rep.p_values},
                     {"mask", mask},
                     {"p_holm", rep.p_holm},
                     {"mask_holm", mask_holm},
                     {"fraction", rep.fraction_significant},
                     {"level", rep.level},
                     {"sided", rep.two_sided ? "two" : "one"}};
    if (!provenance.is_null()) j["provenance"] = provenance;
    return j;
}

inline SignificanceReport significance_from_json(const nlohmann::json& j) {
    SignificanceReport rep;
    rep.grid.betas = j.at("grid").get<std::vector<double>>();
    rep.t_stats = j.at("t").get<std::vector<double>>();
    rep.p_values = j.at("p").get<std::vector<double>>();
    const auto mask = j.at("mask").get<std::vector<bool>>();
    rep.mask.assign(mask.begin(), mask.end());
    rep.p_holm = j.at("p_holm").get<std::vector<double>>();
    const auto mh = j.at("mask_holm").get<std::vector<bool>>();
    rep.mask_holm.assign(mh.begin(), mh.end());
    rep.fraction_significant = j.at("fraction").get<double>();
    rep.level = j.at("level").get<double>();
    rep.two_sided = j.at("sided").get<std::string>() == "two";
    return rep;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_json: cannot open " + path.string());
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("write_json: write failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_json: cannot open " + path.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("read_json: " + path.string() + ": " + e.what());
    }
}

}  // namespace prband
