#pragma once

#include <cmath>
#include <functional>

#include "ldmx/numerics.hpp"
#include "ldmx/predictor.hpp"
#include "ldmx/schedule.hpp"

namespace ldmx {

/// Closed-form jump x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε.
inline Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    require_same_shape(x0, eps, "q_sample");
    schedule.require_timestep(t);
    const double ab = schedule.alpha_bar(t);
    return axpby(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

/// One forward transition with an explicit standard-normal draw.
inline Tensor q_step_with_noise(const Tensor& x_prev, int t, const Tensor& noise, const NoiseSchedule& schedule) {
    require_same_shape(x_prev, noise, "q_step");
    const double b = schedule.beta(t);
    return axpby(std::sqrt(1.0 - b), x_prev, std::sqrt(b), noise);
}

/// Draw from N(√(1-β_t)·x_prev, β_t·I).
inline Tensor q_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, RngStream& rng) {
    schedule.require_timestep(t);
    return q_step_with_noise(x_prev, t, gaussian(x_prev.shape(), rng), schedule);
}

struct PosteriorParams {
    Tensor mean;      // μ̃_t
    double variance;  // β̃_t
};

/// q(x_{t-1} | x_t, x0) in the x0-parameterization.
inline PosteriorParams posterior_params(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& schedule) {
    require_same_shape(x0, xt, "posterior_params");
    const double ab = schedule.alpha_bar(t);  // validates t >= 0
    schedule.require_timestep(t);
    const double ab_prev = schedule.alpha_bar(t - 1);
    const double b = schedule.beta(t);
    const double c0 = std::sqrt(ab_prev) * b / (1.0 - ab);
    const double ct = std::sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
    return {axpby(c0, x0, ct, xt), schedule.posterior_variance(t)};
}

/// ε-form of the posterior mean: (x_t − (1-α_t)/√(1-ᾱ_t)·ε)/√α_t.
inline Tensor posterior_mean_from_eps(const Tensor& xt, const Tensor& eps, int t, const NoiseSchedule& schedule) {
    require_same_shape(xt, eps, "posterior_mean_from_eps");
    const double a = schedule.alpha(t);
    const double ab = schedule.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(a);
    return axpby(inv, xt, -inv * (1.0 - a) / std::sqrt(1.0 - ab), eps);
}

/// Mean over elements of (ε - ε_θ(q_sample(x0, t, ε), t, c))².
inline double loss_simple(const EpsilonPredictor& predictor, const Tensor& x0, int t, const Tensor& eps,
                          const NoiseSchedule& schedule, const ConditionTokens* condition = nullptr) {
    const Tensor xt = q_sample(x0, t, eps, schedule);
    const Tensor pred = predictor.predict(xt, t, condition);
    require_same_shape(pred, eps, "loss_simple: predictor output");
    return mean_squared_difference(eps, pred);
}

using Encoder = std::function<Tensor(const Tensor&)>;

/// loss_simple on the latent z0 = encode(x0). `eps` has the latent's shape.
inline double latent_loss(const EpsilonPredictor& predictor, const Encoder& encoder, const Tensor& x0, int t,
                          const Tensor& eps, const NoiseSchedule& schedule,
                          const ConditionTokens* condition = nullptr) {
    return loss_simple(predictor, encoder(x0), t, eps, schedule, condition);
}

/// KL between N(mu_a, v·I) and N(mu_b, v·I): ‖mu_a − mu_b‖²/(2v).
inline double kl_same_variance_gaussians(const Tensor& mu_a, const Tensor& mu_b, double variance) {
    require_same_shape(mu_a, mu_b, "kl_same_variance_gaussians");
    if (!(variance > 0.0)) throw NumericError("kl_same_variance_gaussians: variance must be positive");
    return squared_norm(mu_a - mu_b) / (2.0 * variance);
}

}  // namespace ldmx
