#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace prband {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// DDPM variance schedule. alphas[t] = 1 - betas[t],
/// alpha_bars[t] = prod_{s<=t} alphas[s].
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
};

inline NoiseSchedule linear_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
    if (!(beta_min > 0 && beta_min <= beta_max && beta_max < 1))
        throw std::invalid_argument("linear_schedule: need 0 < beta_min <= beta_max < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double bar = 1.0;
    for (int t = 0; t < T; ++t) {
        const double beta =
            T == 1 ? beta_min : beta_min + (beta_max - beta_min) * static_cast<double>(t) / (T - 1);
        s.betas[static_cast<std::size_t>(t)] = beta;
        s.alphas[static_cast<std::size_t>(t)] = 1.0 - beta;
        bar *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(t)] = bar;
    }
    return s;
}

/// Forward noising: x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
/// Rows of x0/eps are samples; t gives the per-row timestep.
inline Matrix q_sample(const Matrix& x0, const std::vector<int>& t, const Matrix& eps,
                       const NoiseSchedule& schedule) {
    if (x0.rows() != eps.rows() || x0.cols() != eps.cols() ||
        static_cast<std::size_t>(x0.rows()) != t.size())
        throw std::invalid_argument("q_sample: shape mismatch");
    Matrix xt(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
        const int ti = t[static_cast<std::size_t>(i)];
        if (ti < 0 || ti >= schedule.T) throw std::invalid_argument("q_sample: t out of range");
        const double abar = schedule.alpha_bars[static_cast<std::size_t>(ti)];
        xt.row(i) = std::sqrt(abar) * x0.row(i) + std::sqrt(1.0 - abar) * eps.row(i);
    }
    return xt;
}

}  // namespace prband
