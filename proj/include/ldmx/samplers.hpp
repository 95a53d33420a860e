#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/diffusion.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/predictor.hpp"
#include "ldmx/schedule.hpp"

namespace ldmx {

enum class SamplerKind { ddpm, ddim, plms };

inline std::string_view to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::ddpm: return "ddpm";
        case SamplerKind::ddim: return "ddim";
        case SamplerKind::plms: return "plms";
    }
    return "?";
}

inline SamplerKind parse_sampler_kind(std::string_view s) {
    if (s == "ddpm") return SamplerKind::ddpm;
    if (s == "ddim") return SamplerKind::ddim;
    if (s == "plms") return SamplerKind::plms;
    throw ConfigError("unknown sampler '" + std::string(s) + "' (expected ddpm, ddim or plms)");
}

/// Everything needed to reproduce a sampling run. Defaults mirror the
/// reference inference settings: η = 1, 200 steps, guidance 5.
struct SamplingPlan {
    SamplingTimeline timeline;
    SamplerKind kind = SamplerKind::ddim;
    double eta = 1.0;
    double guidance_scale = 5.0;
    std::uint64_t seed = 0;
    std::size_t batch = 1;
    Shape shape{2};

    void validate(const NoiseSchedule& schedule) const {
        for (int t : timeline.steps())
            if (t > schedule.steps()) throw ConfigError("timeline exceeds schedule length");
        if (kind == SamplerKind::ddpm && !timeline.is_identity(schedule.steps()))
            throw ConfigError("ddpm sampling requires the full timeline (T, T-1, ..., 1)");
        if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
        if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale))
            throw ConfigError("guidance scale must be >= 0");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        require_valid_shape(shape);
    }
};

/// f_θ: the x0 estimate obtained by inverting the closed-form jump.
inline Tensor predict_x0(const Tensor& xt, const Tensor& eps, int t, const NoiseSchedule& schedule) {
    require_same_shape(xt, eps, "predict_x0");
    schedule.require_timestep(t);
    const double ab = schedule.alpha_bar(t);
    if (!(ab > 0.0)) throw NumericError("predict_x0: alpha_bar is zero at t=" + std::to_string(t));
    const double inv = 1.0 / std::sqrt(ab);
    return axpby(inv, xt, -inv * std::sqrt(1.0 - ab), eps);
}

/// η-parameterized DDIM noise level for the transition t_cur → t_next (t_next = 0 is the end).
inline double ddim_sigma(double eta, int t_cur, int t_next, const NoiseSchedule& schedule) {
    if (!(t_cur > t_next && t_next >= 0)) throw ShapeError("ddim_sigma requires t_cur > t_next >= 0");
    schedule.require_timestep(t_cur);
    if (eta == 0.0) return 0.0;
    const double ab_cur = schedule.alpha_bar(t_cur);
    const double ab_next = schedule.alpha_bar(t_next);
    return eta * std::sqrt((1.0 - ab_next) / (1.0 - ab_cur)) * std::sqrt(1.0 - ab_cur / ab_next);
}

struct DdimStepResult {
    Tensor x_next;
    Tensor x0_pred;
};

/// One DDIM transfer. No random draw is consumed when sigma == 0.
inline DdimStepResult ddim_step(const Tensor& xt, const Tensor& eps, int t_cur, int t_next, double sigma,
                                const NoiseSchedule& schedule, RngStream& rng) {
    require_same_shape(xt, eps, "ddim_step");
    if (!(sigma >= 0.0)) throw NumericError("ddim_step: sigma must be >= 0");
    if (!(t_cur > t_next && t_next >= 0)) throw ShapeError("ddim_step requires t_cur > t_next >= 0");
    Tensor x0 = predict_x0(xt, eps, t_cur, schedule);
    const double ab_next = schedule.alpha_bar(t_next);
    const double dir2 = 1.0 - ab_next - sigma * sigma;
    // Allow rounding noise at the η = 1 boundary, reject anything larger.
    if (dir2 < -1e-12) throw NumericError("ddim_step: sigma too large (1 - alpha_bar_next - sigma^2 < 0)");
    Tensor x_next = axpby(std::sqrt(ab_next), x0, std::sqrt(std::max(dir2, 0.0)), eps);
    if (sigma > 0.0) x_next = axpby(1.0, x_next, sigma, gaussian(xt.shape(), rng));
    return {std::move(x_next), std::move(x0)};
}

/// Ancestral step from a precomputed ε: N(μ̃_t(x_t, ε), β̃_t·I). Deterministic at t = 1.
inline Tensor ddpm_step_from_eps(const Tensor& xt, const Tensor& eps, int t, const NoiseSchedule& schedule,
                                 RngStream& rng) {
    Tensor mean = posterior_mean_from_eps(xt, eps, t, schedule);
    const double var = schedule.posterior_variance(t);
    if (var <= 0.0) return mean;
    return axpby(1.0, mean, std::sqrt(var), gaussian(xt.shape(), rng));
}

inline Tensor ddpm_step(const EpsilonPredictor& predictor, const Tensor& xt, int t, const ConditionTokens* condition,
                        const NoiseSchedule& schedule, RngStream& rng) {
    schedule.require_timestep(t);
    return ddpm_step_from_eps(xt, predictor.predict(xt, t, condition), t, schedule, rng);
}

/// Previous ε predictions, most recent first, at most three kept.
class EpsHistory {
  public:
    static constexpr std::size_t capacity = 3;

    void push(Tensor e) {
        if (!entries_.empty()) require_same_shape(entries_.front(), e, "EpsHistory");
        entries_.push_front(std::move(e));
        if (entries_.size() > capacity) entries_.pop_back();
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const Tensor& operator[](std::size_t i) const { return entries_.at(i); }
    void clear() noexcept { entries_.clear(); }

  private:
    std::deque<Tensor> entries_;
};

/// Adams-Bashforth combination of the current ε with the history.
/// Coefficient rows: (3, -1)/2, (23, -16, 5)/12, (55, -59, 37, -9)/24.
inline Tensor plms_combine(const Tensor& e_t, const EpsHistory& history) {
    static constexpr std::array<int, 2> ab2{3, -1};
    static constexpr std::array<int, 3> ab3{23, -16, 5};
    static constexpr std::array<int, 4> ab4{55, -59, 37, -9};

    std::span<const int> coeffs;
    int divisor = 1;
    switch (history.size()) {
        case 0: throw ConfigError("plms_combine needs at least one history entry");
        case 1: coeffs = ab2, divisor = 2; break;
        case 2: coeffs = ab3, divisor = 12; break;
        default: coeffs = ab4, divisor = 24; break;
    }
    for (std::size_t k = 0; k + 1 < coeffs.size(); ++k) require_same_shape(e_t, history[k], "plms_combine");

    std::array<double, 4> column{};
    return Tensor::generate(e_t.shape(), [&](std::size_t i) {
        column[0] = e_t[i];
        for (std::size_t k = 1; k < coeffs.size(); ++k) column[k] = history[k - 1][i];
        return exact_combination(coeffs, std::span<const double>(column.data(), coeffs.size()), divisor);
    });
}

/// ε_u + s·(ε_c − ε_u).
inline Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double scale) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    return Tensor::generate(eps_cond.shape(),
                            [&](std::size_t i) { return eps_uncond[i] + scale * (eps_cond[i] - eps_uncond[i]); });
}

/// Applies classifier-free guidance ahead of any sampler transfer. Without a
/// condition, or with scale 1, it forwards to the wrapped predictor.
class GuidedPredictor final : public EpsilonPredictor {
  public:
    GuidedPredictor(const EpsilonPredictor& base, double scale) : base_(base), scale_(scale) {}

    Tensor predict(const Tensor& xt, int t, const ConditionTokens* condition) const override {
        if (condition == nullptr || scale_ == 1.0) return base_.predict(xt, t, condition);
        return cfg_combine(base_.predict(xt, t, nullptr), base_.predict(xt, t, condition), scale_);
    }

  private:
    const EpsilonPredictor& base_;
    double scale_;
};

/// Called after every transfer with the step index, the new timestep and the new state.
using StepObserver = std::function<void(std::size_t step, int t_next, const Tensor& x)>;

/// Runs one chain from x_T along the plan's timeline. The predictor is used
/// as given; wrap it in GuidedPredictor for guidance.
inline Tensor run_chain(const EpsilonPredictor& predictor, const SamplingPlan& plan, const NoiseSchedule& schedule,
                        const ConditionTokens* condition, Tensor x, RngStream& rng,
                        const StepObserver& observe = {}) {
    const auto& tl = plan.timeline;
    switch (plan.kind) {
        case SamplerKind::ddpm:
            for (std::size_t i = 0; i < tl.size(); ++i) {
                x = ddpm_step(predictor, x, tl[i], condition, schedule, rng);
                if (observe) observe(i, tl.next_after(i), x);
            }
            break;
        case SamplerKind::ddim:
            for (std::size_t i = 0; i < tl.size(); ++i) {
                const int t = tl[i], t_next = tl.next_after(i);
                const Tensor e = predictor.predict(x, t, condition);
                const double sigma = ddim_sigma(plan.eta, t, t_next, schedule);
                x = ddim_step(x, e, t, t_next, sigma, schedule, rng).x_next;
                if (observe) observe(i, t_next, x);
            }
            break;
        case SamplerKind::plms: {
            // Deterministic transfer throughout; η does not apply to PLMS.
            EpsHistory history;
            for (std::size_t i = 0; i < tl.size(); ++i) {
                const int t = tl[i], t_next = tl.next_after(i);
                Tensor e = predictor.predict(x, t, condition);
                Tensor e_prime = e;
                if (history.empty()) {
                    // Pseudo improved Euler: trial transfer, re-evaluate, average.
                    if (t_next > 0) {
                        const Tensor x_trial = ddim_step(x, e, t, t_next, 0.0, schedule, rng).x_next;
                        const Tensor e_next = predictor.predict(x_trial, t_next, condition);
                        e_prime = 0.5 * (e + e_next);
                    }
                } else {
                    e_prime = plms_combine(e, history);
                }
                history.push(std::move(e));
                x = ddim_step(x, e_prime, t, t_next, 0.0, schedule, rng).x_next;
                if (observe) observe(i, t_next, x);
            }
            break;
        }
    }
    return x;
}

/// Draws x_T from the element's stream and runs the chain.
inline Tensor sample_one(const EpsilonPredictor& predictor, const SamplingPlan& plan, const NoiseSchedule& schedule,
                         const ConditionTokens* condition, RngStream& rng, const StepObserver& observe = {}) {
    Tensor x = gaussian(plan.shape, rng);
    return run_chain(predictor, plan, schedule, condition, std::move(x), rng, observe);
}

/// Stream used by batch element `index` of a plan.
inline RngStream element_stream(std::uint64_t seed, std::size_t index) {
    return RngStream(seed).child("sample", index);
}

/// Full batch: element i uses its own child stream of plan.seed, so results
/// do not depend on evaluation order. Guidance is applied when a condition is
/// given and the scale differs from 1.
inline std::vector<Tensor> sample(const EpsilonPredictor& predictor, const SamplingPlan& plan,
                                  const NoiseSchedule& schedule, const ConditionTokens* condition = nullptr) {
    plan.validate(schedule);
    const GuidedPredictor guided(predictor, plan.guidance_scale);
    std::vector<Tensor> out;
    out.reserve(plan.batch);
    for (std::size_t i = 0; i < plan.batch; ++i) {
        RngStream rng = element_stream(plan.seed, i);
        out.push_back(sample_one(guided, plan, schedule, condition, rng));
    }
    return out;
}

inline std::vector<Tensor> plms_sample(const EpsilonPredictor& predictor, const SamplingPlan& plan,
                                       const NoiseSchedule& schedule, const ConditionTokens* condition = nullptr) {
    if (plan.kind != SamplerKind::plms) throw ConfigError("plms_sample requires a plms plan");
    return sample(predictor, plan, schedule, condition);
}

}  // namespace ldmx
