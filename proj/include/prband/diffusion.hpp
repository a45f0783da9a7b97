#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prband/dataset.hpp"
#include "prband/rng.hpp"
#include "prband/schedule.hpp"
#include "prband/scorenet.hpp"
#include "prband/sha256.hpp"
#include "prband/version.hpp"

namespace prband {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

/// Paper-scale epoch budget per depth; deeper nets train longer.
inline std::int64_t default_epochs(int depth) {
    if (depth <= 2) return 10000;
    if (depth <= 4) return 15000;
    return 20000;
}

struct TrainConfig {
    int depth = 2;
    std::optional<std::int64_t> epochs;  // unset -> default_epochs(depth)
    int batch_size = 512;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    NetDims dims;

    std::int64_t resolved_epochs() const { return epochs.value_or(default_epochs(depth)); }
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.depth < 1) throw std::invalid_argument("TrainConfig: depth must be >= 1");
    if (cfg.resolved_epochs() < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(cfg.lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
    if (cfg.T < 1) throw std::invalid_argument("TrainConfig: T must be >= 1");
}

struct TrainedModel {
    ScoreNetParams params;
    NoiseSchedule schedule;
    TrainConfig config;
    double final_loss = 0.0;
};

struct EpochLogEntry {
    std::int64_t epoch = 0;
    double mean_loss = 0.0;
    double wall_ms = 0.0;
};

using EpochLogger = std::function<void(const EpochLogEntry&)>;

/// Trains one DDPM on the given 2-d samples. One epoch is a full pass over
/// shuffled minibatches; per batch the timesteps and noise are drawn from a
/// single seeded stream, so a (data, config) pair fully determines the
/// resulting model.
inline TrainedModel train(const SampleSet& data, const TrainConfig& cfg,
                          const EpochLogger& log = {}) {
    validate(cfg);
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.dim != cfg.dims.input) throw std::invalid_argument("train: data dimension mismatch");

    const auto n = data.size();
    const NoiseSchedule schedule = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
    const Matrix emb_table = embedding_table(cfg.T, cfg.dims.embed);

    ScoreNetParams params = init(cfg.depth, derive_seed(cfg.seed, {0x1417u}), cfg.dims);
    AdamState adam = adam_init(params);
    const AdamConfig adam_cfg{cfg.lr, 0.9, 0.999, 1e-8};
    Rng rng(derive_seed(cfg.seed, {0x7247u}));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    const std::int64_t epochs = cfg.resolved_epochs();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    std::deque<double> loss_tail;
    double epoch_loss = 0.0;

    for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t m = std::min(bs, n - start);
            Matrix x0(m, cfg.dims.input);
            Matrix eps(m, cfg.dims.input);
            std::vector<int> t(m);
            for (std::size_t i = 0; i < m; ++i) {
                const auto p = data.point(order[start + i]);
                for (int d = 0; d < cfg.dims.input; ++d)
                    x0(static_cast<Eigen::Index>(i), d) = p[static_cast<std::size_t>(d)];
                t[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.T)));
                for (int d = 0; d < cfg.dims.input; ++d)
                    eps(static_cast<Eigen::Index>(i), d) = rng.normal();
            }

            LossGrad lg;
            try {
                lg = loss_and_grad(params, x0, eps, t, schedule, emb_table);
            } catch (const std::runtime_error& e) {
                std::ostringstream msg;
                msg << "train: numeric failure at epoch " << epoch << ", batch " << start / bs
                    << " (" << e.what() << "); recent epoch losses:";
                for (double l : loss_tail) msg << ' ' << l;
                throw std::runtime_error(msg.str());
            }
            adam_step(params, lg.grads, adam, adam_cfg);
            loss_sum += lg.loss * static_cast<double>(m);
        }

        epoch_loss = loss_sum / static_cast<double>(n);
        loss_tail.push_back(epoch_loss);
        if (loss_tail.size() > 8) loss_tail.pop_front();
        if (log) {
            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t_start)
                                  .count();
            log(EpochLogEntry{epoch, epoch_loss, ms});
        }
    }

    return TrainedModel{std::move(params), schedule, cfg, epoch_loss};
}

/// Ancestral sampling: start from pure noise and walk the reverse chain
/// x_{t-1} = (x_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z,
/// with sigma_t^2 = beta_t and z = 0 at the final step.
inline SampleSet sample(const TrainedModel& model, std::int64_t n, std::uint64_t seed,
                        const std::string& model_id = "") {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    const auto& sch = model.schedule;
    const int dim = model.params.dims.input;
    const Matrix emb_table = embedding_table(sch.T, model.params.dims.embed);

    Rng rng(seed);
    Matrix x(n, dim);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int d = 0; d < dim; ++d) x(i, d) = rng.normal();

    std::vector<int> t_vec(static_cast<std::size_t>(n));
    for (int t = sch.T - 1; t >= 0; --t) {
        const auto ut = static_cast<std::size_t>(t);
        std::fill(t_vec.begin(), t_vec.end(), t);
        const Matrix eps_hat = forward(model.params, x, t_vec, emb_table);

        const double beta = sch.betas[ut];
        const double coef = beta / std::sqrt(1.0 - sch.alpha_bars[ut]);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sch.alphas[ut]);
        x = inv_sqrt_alpha * (x - coef * eps_hat);
        if (t > 0) {
            const double sigma = std::sqrt(beta);
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                for (int d = 0; d < dim; ++d) x(i, d) += sigma * rng.normal();
        }
        if (!x.allFinite())
            throw std::runtime_error("sample: non-finite trajectory at step " + std::to_string(t));
    }

    SampleSet out;
    out.dim = dim;
    out.origin = Origin::Generated;
    out.model_id = model_id;
    out.data.resize(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (int d = 0; d < dim; ++d)
            out.data[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
                     static_cast<std::size_t>(d)] = x(i, d);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format: 8-byte magic, u32 little-endian header length, JSON
// header, then all parameter tensors as little-endian float64 in
// for_each_tensor order, row-major within each tensor.

inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'B', 'A', 'N', 'D', 'C', '1'};

inline std::string schedule_hash(const NoiseSchedule& s) {
    Sha256 h;
    h.update(&s.T, sizeof s.T);
    h.update(s.betas.data(), s.betas.size() * sizeof(double));
    return h.hex();
}

inline void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
    nlohmann::json header{
        {"schema_version", 1},
        {"created_by_version", kVersion},
        {"depth", model.config.depth},
        {"dims",
         {{"input", model.params.dims.input},
          {"width", model.params.dims.width},
          {"hidden", model.params.dims.hidden},
          {"embed", model.params.dims.embed}}},
        {"T", model.config.T},
        {"beta_min", model.config.beta_min},
        {"beta_max", model.config.beta_max},
        {"seed", model.config.seed},
        {"epochs", model.config.resolved_epochs()},
        {"batch_size", model.config.batch_size},
        {"lr", model.config.lr},
        {"final_loss", model.final_loss},
        {"schedule_sha256", schedule_hash(model.schedule)},
        {"param_count", parameter_count(model.params)}};
    const std::string hdr = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    f.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const auto len = static_cast<std::uint32_t>(hdr.size());
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));

    std::vector<double> buf;
    for_each_tensor(model.params, [&](const auto& tensor) {
        buf.clear();
        buf.reserve(static_cast<std::size_t>(tensor.size()));
        for (Eigen::Index r = 0; r < tensor.rows(); ++r)
            for (Eigen::Index c = 0; c < tensor.cols(); ++c) buf.push_back(tensor(r, c));
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(double)));
    });
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());

    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint");
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string hdr(len, '\0');
    f.read(hdr.data(), static_cast<std::streamsize>(len));
    if (!f) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hdr);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: bad header in " + path.string() + ": " +
                                 e.what());
    }

    TrainedModel model;
    model.config.depth = header.at("depth").get<int>();
    model.config.T = header.at("T").get<int>();
    model.config.beta_min = header.at("beta_min").get<double>();
    model.config.beta_max = header.at("beta_max").get<double>();
    model.config.seed = header.at("seed").get<std::uint64_t>();
    model.config.epochs = header.at("epochs").get<std::int64_t>();
    model.config.batch_size = header.at("batch_size").get<int>();
    model.config.lr = header.at("lr").get<double>();
    model.final_loss = header.at("final_loss").get<double>();
    const auto& d = header.at("dims");
    model.config.dims = NetDims{d.at("input").get<int>(), d.at("width").get<int>(),
                                d.at("hidden").get<int>(), d.at("embed").get<int>()};

    model.schedule = linear_schedule(model.config.T, model.config.beta_min, model.config.beta_max);
    if (schedule_hash(model.schedule) != header.at("schedule_sha256").get<std::string>())
        throw std::runtime_error("load_checkpoint: schedule hash mismatch in " + path.string());

    ScoreNetParams p = init(model.config.depth, 0, model.config.dims);
    std::vector<double> buf;
    for_each_tensor(p, [&](auto& tensor) {
        buf.resize(static_cast<std::size_t>(tensor.size()));
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(double)));
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < tensor.rows(); ++r)
            for (Eigen::Index c = 0; c < tensor.cols(); ++c) tensor(r, c) = buf[i++];
    });
    if (!f) throw std::runtime_error("load_checkpoint: truncated parameter block in " + path.string());
    if (parameter_count(p) != header.at("param_count").get<std::int64_t>())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path.string());
    f.peek();
    if (!f.eof())
        throw std::runtime_error("load_checkpoint: trailing bytes in " + path.string());

    model.params = std::move(p);
    return model;
}

}  // namespace prband
