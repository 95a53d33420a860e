#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ldmx/numerics.hpp"

namespace ldmx {

/// Diagonal Gaussian moments (μ, log σ²) of equal shape.
struct MomentPair {
    Tensor mu;
    Tensor logvar;

    MomentPair(Tensor m, Tensor lv) : mu(std::move(m)), logvar(std::move(lv)) {
        require_same_shape(mu, logvar, "MomentPair");
    }
};

/// Single affine encoder (data → 2·latent moments) and affine decoder.
struct ToyAutoencoderParams {
    Tensor enc_w;  // (2L, D)
    Tensor enc_b;  // (2L)
    Tensor dec_w;  // (D, L)
    Tensor dec_b;  // (D)

    static ToyAutoencoderParams zeros(std::size_t data_width, std::size_t latent_width) {
        return {Tensor(Shape{2 * latent_width, data_width}), Tensor(Shape{2 * latent_width}),
                Tensor(Shape{data_width, latent_width}), Tensor(Shape{data_width})};
    }

    static ToyAutoencoderParams initialized(std::size_t data_width, std::size_t latent_width, std::uint64_t seed) {
        RngStream rng = RngStream(seed).child("toy-ae-init");
        const double se = 0.5 / std::sqrt(static_cast<double>(data_width));
        const double sd = 0.5 / std::sqrt(static_cast<double>(latent_width));
        return {se * gaussian(Shape{2 * latent_width, data_width}, rng), Tensor(Shape{2 * latent_width}),
                sd * gaussian(Shape{data_width, latent_width}, rng), Tensor(Shape{data_width})};
    }

    std::size_t data_width() const { return dec_w.shape()[0]; }
    std::size_t latent_width() const { return dec_w.shape()[1]; }

    void validate() const {
        if (enc_w.shape().size() != 2 || dec_w.shape().size() != 2) throw ShapeError("autoencoder weights must be matrices");
        const auto D = data_width(), L = latent_width();
        if (enc_w.shape() != Shape{2 * L, D} || enc_b.shape() != Shape{2 * L} || dec_b.shape() != Shape{D})
            throw ShapeError("autoencoder parameter shapes are inconsistent");
    }
};

/// Affine encoder output split channel-wise: first half μ, second half log σ².
inline MomentPair encode_moments(const Tensor& x, const ToyAutoencoderParams& p) {
    p.validate();
    if (x.size() != p.data_width()) throw ShapeError("encode_moments: input width mismatch");
    const auto L = p.latent_width();
    std::vector<double> raw(p.enc_b.data());
    gemv(view_of(p.enc_w), x.values(), raw, true);
    return {Tensor(Shape{L}, std::vector<double>(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(L))),
            Tensor(Shape{L}, std::vector<double>(raw.begin() + static_cast<std::ptrdiff_t>(L), raw.end()))};
}

inline Tensor decode(const Tensor& z, const ToyAutoencoderParams& p) {
    p.validate();
    if (z.size() != p.latent_width()) throw ShapeError("decode: latent width mismatch");
    std::vector<double> out(p.dec_b.data());
    gemv(view_of(p.dec_w), z.values(), out, true);
    return Tensor(Shape{p.data_width()}, std::move(out));
}

/// μ + exp(logvar/2)·ε.
inline Tensor reparam_sample(const MomentPair& m, RngStream& rng) {
    const Tensor eps = gaussian(m.mu.shape(), rng);
    return Tensor::generate(m.mu.shape(), [&](std::size_t i) { return m.mu[i] + std::exp(0.5 * m.logvar[i]) * eps[i]; });
}

/// Σ (μ² + σ² − 1 − log σ²)/2 over every element.
inline double kl_loss(const MomentPair& m) {
    std::vector<double> terms(m.mu.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const double lv = m.logvar[i];
        terms[i] = 0.5 * (m.mu[i] * m.mu[i] + std::exp(lv) - 1.0 - lv);
    }
    return pairwise_sum(terms);
}

/// ‖x − x̂‖² summed over elements.
inline double recon_loss(const Tensor& x, const Tensor& x_hat) {
    require_same_shape(x, x_hat, "recon_loss");
    return squared_norm(x - x_hat);
}

inline constexpr double kProbabilityClamp = 1e-12;

/// Batch mean of log D(x) + log(1 − D(G(·))). Probabilities are clamped to
/// [1e-12, 1 − 1e-12] before taking logs.
inline double gan_loss_component(std::span<const double> d_real, std::span<const double> d_fake) {
    if (d_real.size() != d_fake.size() || d_real.empty())
        throw ShapeError("gan_loss_component: need equal, nonempty batches");
    auto clamp = [](double p) {
        if (std::isnan(p)) throw NumericError("gan_loss_component: NaN probability");
        return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    };
    std::vector<double> terms(d_real.size());
    for (std::size_t i = 0; i < terms.size(); ++i)
        terms[i] = std::log(clamp(d_real[i])) + std::log(1.0 - clamp(d_fake[i]));
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

struct AeTrainConfig {
    std::size_t steps = 2000;
    double learning_rate = 0.05;
    double kl_weight = 1e-3;
};

struct AeTrainResult {
    ToyAutoencoderParams params;
    std::vector<double> losses;
};

/// Per-sample objective E_ε‖x − G(μ + σε)‖² + kl_weight·KL. The decoder is
/// affine, so the expectation is ‖x − G(μ)‖² + Σ_j ‖G_{:,j}‖²·σ_j², which is
/// what gets minimized (full-batch gradient descent, batch mean).
inline double ae_objective(const ToyAutoencoderParams& p, std::span<const Tensor> data, double kl_weight,
                           ToyAutoencoderParams* grad = nullptr) {
    const auto D = p.data_width(), L = p.latent_width();
    const auto& ew = p.enc_w.data();
    const auto& dw = p.dec_w.data();
    std::vector<double> col_norm(L, 0.0);
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = 0; j < L; ++j) col_norm[j] += dw[i * L + j] * dw[i * L + j];

    std::vector<double> g_ew(ew.size(), 0.0), g_eb(2 * L, 0.0), g_dw(dw.size(), 0.0), g_db(D, 0.0);
    std::vector<double> losses(data.size());
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto m = encode_moments(data[s], p);
        const Tensor xr = decode(m.mu, p);
        double loss = 0.0;
        std::vector<double> r(D), g_raw(2 * L, 0.0);
        for (std::size_t i = 0; i < D; ++i) {
            r[i] = data[s][i] - xr[i];
            loss += r[i] * r[i];
        }
        for (std::size_t j = 0; j < L; ++j) {
            const double var = std::exp(m.logvar[j]);
            loss += col_norm[j] * var + 0.5 * kl_weight * (m.mu[j] * m.mu[j] + var - 1.0 - m.logvar[j]);
            if (grad) {
                double g_mu = kl_weight * m.mu[j];
                for (std::size_t i = 0; i < D; ++i) g_mu -= 2.0 * dw[i * L + j] * r[i];
                g_raw[j] = g_mu * inv_n;
                g_raw[L + j] = (col_norm[j] * var + 0.5 * kl_weight * (var - 1.0)) * inv_n;
                for (std::size_t i = 0; i < D; ++i)
                    g_dw[i * L + j] += (-2.0 * r[i] * m.mu[j] + 2.0 * dw[i * L + j] * var) * inv_n;
            }
        }
        if (grad) {
            for (std::size_t i = 0; i < D; ++i) g_db[i] -= 2.0 * r[i] * inv_n;
            outer_acc(g_raw, data[s].values(), g_ew);
            for (std::size_t k = 0; k < 2 * L; ++k) g_eb[k] += g_raw[k];
        }
        losses[s] = loss;
    }
    if (grad) {
        grad->enc_w = Tensor(p.enc_w.shape(), std::move(g_ew));
        grad->enc_b = Tensor(p.enc_b.shape(), std::move(g_eb));
        grad->dec_w = Tensor(p.dec_w.shape(), std::move(g_dw));
        grad->dec_b = Tensor(p.dec_b.shape(), std::move(g_db));
    }
    return pairwise_sum(losses) * inv_n;
}

inline AeTrainResult train_toy_ae(ToyAutoencoderParams params, std::span<const Tensor> dataset,
                                  const AeTrainConfig& config) {
    if (dataset.empty()) throw ConfigError("train_toy_ae: empty dataset");
    if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    params.validate();
    std::vector<double> losses;
    losses.reserve(config.steps);
    ToyAutoencoderParams g = params;
    for (std::size_t step = 0; step < config.steps; ++step) {
        double loss = 0.0;
        try {
            loss = ae_objective(params, dataset, config.kl_weight, &g);
            const double lr = config.learning_rate;
            params.enc_w = axpby(1.0, params.enc_w, -lr, g.enc_w);
            params.enc_b = axpby(1.0, params.enc_b, -lr, g.enc_b);
            params.dec_w = axpby(1.0, params.dec_w, -lr, g.dec_w);
            params.dec_b = axpby(1.0, params.dec_b, -lr, g.dec_b);
        } catch (const NumericError& e) {
            throw TrainingDiverged(std::string("autoencoder training diverged: ") + e.what());
        }
        if (!std::isfinite(loss)) throw TrainingDiverged("autoencoder training diverged");
        losses.push_back(loss);
    }
    return {std::move(params), std::move(losses)};
}

/// Mean per-element squared error of decode(μ(x)) against x.
inline double reconstruction_mse(const ToyAutoencoderParams& p, std::span<const Tensor> data) {
    std::vector<double> errs(data.size());
    for (std::size_t s = 0; s < data.size(); ++s)
        errs[s] = mean_squared_difference(data[s], decode(encode_moments(data[s], p).mu, p));
    return pairwise_sum(errs) / static_cast<double>(data.size());
}

}  // namespace ldmx
