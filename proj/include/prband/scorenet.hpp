#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prband/rng.hpp"
#include "prband/schedule.hpp"

namespace prband {

struct NetDims {
    int input = 2;
    int width = 128;   // residual trunk width
    int hidden = 256;  // inner layer of each block
    int embed = 128;   // time embedding size, must be even
};

/// One residual block: h' = h + W2 * silu(W1 * h + b1 + We * t_e) + b2.
struct ResidualBlockParams {
    Matrix w1;  // hidden x width
    Vector b1;  // hidden
    Matrix we;  // hidden x embed
    Matrix w2;  // width x hidden
    Vector b2;  // width
};

struct ScoreNetParams {
    NetDims dims;
    Matrix w_in;   // width x input
    Vector b_in;   // width
    std::vector<ResidualBlockParams> blocks;
    Matrix w_out;  // input x width (projects back to sample space)
    Vector b_out;  // input

    int depth() const { return static_cast<int>(blocks.size()); }
};

using ScoreNetGrads = ScoreNetParams;

/// Applies f to every parameter tensor in a fixed, documented order:
/// w_in, b_in, (w1, b1, we, w2, b2) per block, w_out, b_out. The checkpoint
/// layout and the initializer draw order both follow this traversal.
template <typename Params, typename F>
void for_each_tensor(Params&& p, F&& f) {
    f(p.w_in);
    f(p.b_in);
    for (auto& b : p.blocks) {
        f(b.w1);
        f(b.b1);
        f(b.we);
        f(b.w2);
        f(b.b2);
    }
    f(p.w_out);
    f(p.b_out);
}

inline std::int64_t parameter_count(const ScoreNetParams& p) {
    std::int64_t n = 0;
    for_each_tensor(p, [&](const auto& t) { n += t.size(); });
    return n;
}

inline ScoreNetParams zeros_like(const ScoreNetParams& p) {
    ScoreNetParams z = p;
    for_each_tensor(z, [](auto& t) { t.setZero(); });
    return z;
}

inline bool all_finite(const ScoreNetParams& p) {
    bool ok = true;
    for_each_tensor(p, [&](const auto& t) { ok = ok && t.allFinite(); });
    return ok;
}

// ---------------------------------------------------------------------------
// Time embedding

/// Sinusoidal embedding: pairs (sin(t*w_j), cos(t*w_j)) with
/// w_j = 10000^(-2j/embed_dim).
inline Vector time_embedding(int t, int total_steps, int embed_dim) {
    if (embed_dim < 2 || embed_dim % 2 != 0)
        throw std::invalid_argument("time_embedding: embed_dim must be even and >= 2");
    if (t < 0 || t >= total_steps) throw std::invalid_argument("time_embedding: t out of range");
    Vector e(embed_dim);
    for (int j = 0; j < embed_dim / 2; ++j) {
        const double omega = std::pow(10000.0, -2.0 * j / embed_dim);
        e[2 * j] = std::sin(t * omega);
        e[2 * j + 1] = std::cos(t * omega);
    }
    return e;
}

/// Row t holds time_embedding(t). Precomputed once per training run.
inline Matrix embedding_table(int total_steps, int embed_dim) {
    Matrix table(total_steps, embed_dim);
    for (int t = 0; t < total_steps; ++t) table.row(t) = time_embedding(t, total_steps, embed_dim);
    return table;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline Matrix silu(const Matrix& z) {
    return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

inline Matrix silu_grad(const Matrix& z) {
    return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

}  // namespace detail

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
    Matrix emb;             // n x embed
    std::vector<Matrix> h;  // trunk states h_0 .. h_C, each n x width
    std::vector<Matrix> z;  // block pre-activations, n x hidden
    std::vector<Matrix> s;  // silu(z), n x hidden
};

/// Batch forward pass. Rows of x are samples, t gives per-row timesteps into
/// emb_table. Returns the predicted noise, n x input.
inline Matrix forward(const ScoreNetParams& p, const Matrix& x, const std::vector<int>& t,
                      const Matrix& emb_table, ForwardCache* cache = nullptr) {
    const auto n = x.rows();
    if (x.cols() != p.dims.input) throw std::invalid_argument("forward: input dim mismatch");
    if (static_cast<std::size_t>(n) != t.size())
        throw std::invalid_argument("forward: batch/timestep size mismatch");

    Matrix emb(n, p.dims.embed);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int ti = t[static_cast<std::size_t>(i)];
        if (ti < 0 || ti >= emb_table.rows())
            throw std::invalid_argument("forward: timestep out of range");
        emb.row(i) = emb_table.row(ti);
    }

    Matrix h = x * p.w_in.transpose();
    h.rowwise() += p.b_in.transpose();
    if (!h.allFinite()) throw std::runtime_error("scorenet forward: non-finite activation in input projection");

    if (cache) {
        cache->emb = emb;
        cache->h.clear();
        cache->z.clear();
        cache->s.clear();
        cache->h.push_back(h);
    }

    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        const auto& blk = p.blocks[i];
        Matrix z = h * blk.w1.transpose() + emb * blk.we.transpose();
        z.rowwise() += blk.b1.transpose();
        Matrix s = detail::silu(z);
        h += s * blk.w2.transpose();
        h.rowwise() += blk.b2.transpose();
        if (!h.allFinite())
            throw std::runtime_error("scorenet forward: non-finite activation in block " +
                                     std::to_string(i));
        if (cache) {
            cache->z.push_back(std::move(z));
            cache->s.push_back(std::move(s));
            cache->h.push_back(h);
        }
    }

    Matrix y = h * p.w_out.transpose();
    y.rowwise() += p.b_out.transpose();
    if (!y.allFinite()) throw std::runtime_error("scorenet forward: non-finite activation in output projection");
    return y;
}

// ---------------------------------------------------------------------------
// Loss and analytic gradients

struct LossGrad {
    double loss = 0.0;
    ScoreNetGrads grads;
};

/// DDPM noise-prediction loss: mean squared error between eps and the
/// network output at x_t = q_sample(x0, t, eps). Gradients are exact
/// analytic derivatives with respect to every parameter tensor.
inline LossGrad loss_and_grad(const ScoreNetParams& p, const Matrix& x0, const Matrix& eps,
                              const std::vector<int>& t, const NoiseSchedule& schedule,
                              const Matrix& emb_table) {
    const auto n = x0.rows();
    if (n == 0) throw std::invalid_argument("loss_and_grad: empty batch");
    const Matrix xt = q_sample(x0, t, eps, schedule);

    ForwardCache cache;
    const Matrix y = forward(p, xt, t, emb_table, &cache);

    const Matrix resid = y - eps;
    const double denom = static_cast<double>(n) * static_cast<double>(p.dims.input);
    LossGrad out;
    out.loss = resid.squaredNorm() / denom;
    if (!std::isfinite(out.loss)) throw std::runtime_error("loss_and_grad: non-finite loss");

    out.grads = zeros_like(p);
    const Matrix g_y = (2.0 / denom) * resid;

    out.grads.w_out.noalias() = g_y.transpose() * cache.h.back();
    out.grads.b_out = g_y.colwise().sum().transpose();

    Matrix d = g_y * p.w_out;  // dL/dh_C
    for (int i = p.depth() - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        const auto& blk = p.blocks[ui];
        auto& gblk = out.grads.blocks[ui];

        gblk.w2.noalias() = d.transpose() * cache.s[ui];
        gblk.b2 = d.colwise().sum().transpose();

        Matrix dz = (d * blk.w2).cwiseProduct(detail::silu_grad(cache.z[ui]));
        gblk.w1.noalias() = dz.transpose() * cache.h[ui];
        gblk.b1 = dz.colwise().sum().transpose();
        gblk.we.noalias() = dz.transpose() * cache.emb;

        d += dz * blk.w1;  // residual passthrough plus branch
    }

    out.grads.w_in.noalias() = d.transpose() * xt;
    out.grads.b_in = d.colwise().sum().transpose();
    if (!all_finite(out.grads)) throw std::runtime_error("loss_and_grad: non-finite gradient");
    return out;
}

// ---------------------------------------------------------------------------
// Initialization

/// Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases. The draw
/// order follows for_each_tensor, row-major within each matrix, so a given
/// seed always produces the same parameters.
inline ScoreNetParams init(int depth, std::uint64_t seed, const NetDims& dims = {}) {
    if (depth < 1) throw std::invalid_argument("init: depth must be >= 1");
    ScoreNetParams p;
    p.dims = dims;
    p.w_in.resize(dims.width, dims.input);
    p.b_in = Vector::Zero(dims.width);
    p.blocks.resize(static_cast<std::size_t>(depth));
    for (auto& b : p.blocks) {
        b.w1.resize(dims.hidden, dims.width);
        b.b1 = Vector::Zero(dims.hidden);
        b.we.resize(dims.hidden, dims.embed);
        b.w2.resize(dims.width, dims.hidden);
        b.b2 = Vector::Zero(dims.width);
    }
    p.w_out.resize(dims.input, dims.width);
    p.b_out = Vector::Zero(dims.input);

    Rng rng(seed);
    auto fill = [&rng](Matrix& m) {
        const double bound = std::sqrt(6.0 / static_cast<double>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
    };
    fill(p.w_in);
    for (auto& b : p.blocks) {
        fill(b.w1);
        fill(b.we);
        fill(b.w2);
    }
    fill(p.w_out);
    return p;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    ScoreNetParams m;  // first moments, shape-congruent with the params
    ScoreNetParams v;  // second moments
    std::int64_t step = 0;
};

inline AdamState adam_init(const ScoreNetParams& p) {
    return AdamState{zeros_like(p), zeros_like(p), 0};
}

/// Standard bias-corrected Adam update, in place. The trainer owns one
/// mutable (params, state) pair per ensemble member.
inline void adam_step(ScoreNetParams& p, const ScoreNetGrads& g, AdamState& st,
                      const AdamConfig& cfg = {}) {
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));

    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * grad.array();
        v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square();
        param.array() -=
            cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
    };

    update(p.w_in, g.w_in, st.m.w_in, st.v.w_in);
    update(p.b_in, g.b_in, st.m.b_in, st.v.b_in);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        update(p.blocks[i].w1, g.blocks[i].w1, st.m.blocks[i].w1, st.v.blocks[i].w1);
        update(p.blocks[i].b1, g.blocks[i].b1, st.m.blocks[i].b1, st.v.blocks[i].b1);
        update(p.blocks[i].we, g.blocks[i].we, st.m.blocks[i].we, st.v.blocks[i].we);
        update(p.blocks[i].w2, g.blocks[i].w2, st.m.blocks[i].w2, st.v.blocks[i].w2);
        update(p.blocks[i].b2, g.blocks[i].b2, st.m.blocks[i].b2, st.v.blocks[i].b2);
    }
    update(p.w_out, g.w_out, st.m.w_out, st.v.w_out);
    update(p.b_out, g.b_out, st.m.b_out, st.v.b_out);
}

}  // namespace prband
