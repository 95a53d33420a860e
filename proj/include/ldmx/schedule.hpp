#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ldmx/error.hpp"

namespace ldmx {

/// Variance schedule β₁..β_T with the derived tables. Indices are 1-based
/// timesteps; alpha_bar(0) is defined as 1 so the t = 1 posterior variance is 0.
class NoiseSchedule {
  public:
    explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
        if (betas_.empty()) throw ConfigError("schedule needs at least one step");
        const std::size_t n = betas_.size();
        alphas_.resize(n);
        alpha_bars_.resize(n + 1);
        posterior_vars_.resize(n);
        alpha_bars_[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double b = betas_[i];
            if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0, 1)");
            alphas_[i] = 1.0 - b;
            alpha_bars_[i + 1] = alpha_bars_[i] * alphas_[i];
            posterior_vars_[i] = (1.0 - alpha_bars_[i]) / (1.0 - alpha_bars_[i + 1]) * b;
        }
    }

    int steps() const noexcept { return static_cast<int>(betas_.size()); }

    double beta(int t) const { return betas_[index(t)]; }
    double alpha(int t) const { return alphas_[index(t)]; }
    double posterior_variance(int t) const { return posterior_vars_[index(t)]; }

    /// ᾱ_t for t in [0, T]; ᾱ_0 = 1.
    double alpha_bar(int t) const {
        if (t < 0 || t > steps()) throw ShapeError("timestep " + std::to_string(t) + " outside [0, T]");
        return alpha_bars_[static_cast<std::size_t>(t)];
    }

    void require_timestep(int t) const { (void)index(t); }

    const std::vector<double>& betas() const noexcept { return betas_; }

  private:
    std::size_t index(int t) const {
        if (t < 1 || t > steps())
            throw ShapeError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
    std::vector<double> posterior_vars_;
};

struct ScheduleDefaults {
    static constexpr int steps = 1000;
    static constexpr double beta_start = 1e-4;
    static constexpr double beta_end = 0.02;
};

/// β_t interpolated linearly from beta_start (t = 1) to beta_end (t = T).
inline NoiseSchedule linear_schedule(int steps = ScheduleDefaults::steps, double beta_start = ScheduleDefaults::beta_start,
                                     double beta_end = ScheduleDefaults::beta_end) {
    if (steps < 1) throw ConfigError("schedule step count must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
        betas[static_cast<std::size_t>(t - 1)] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

/// Strictly decreasing timesteps drawn from [1, T].
class SamplingTimeline {
  public:
    SamplingTimeline(std::vector<int> steps, int max_step) : steps_(std::move(steps)) {
        if (steps_.empty()) throw ConfigError("timeline must be nonempty");
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            if (steps_[i] < 1 || steps_[i] > max_step) throw ConfigError("timeline entry outside [1, T]");
            if (i && steps_[i] >= steps_[i - 1]) throw ConfigError("timeline must be strictly decreasing");
        }
    }

    const std::vector<int>& steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return steps_.size(); }
    int operator[](std::size_t i) const { return steps_[i]; }

    /// Timestep following entry i; 0 after the last entry.
    int next_after(std::size_t i) const { return i + 1 < steps_.size() ? steps_[i + 1] : 0; }

    bool is_identity(int max_step) const {
        if (static_cast<int>(steps_.size()) != max_step) return false;
        for (std::size_t i = 0; i < steps_.size(); ++i)
            if (steps_[i] != max_step - static_cast<int>(i)) return false;
        return true;
    }

  private:
    std::vector<int> steps_;
};

/// Uniformly strided timeline: entry i is T - floor(i·T / num_steps).
inline SamplingTimeline subsequence(const NoiseSchedule& schedule, int num_steps) {
    const int T = schedule.steps();
    if (num_steps < 1 || num_steps > T)
        throw ConfigError("num_steps must lie in [1, " + std::to_string(T) + "], got " + std::to_string(num_steps));
    std::vector<int> steps(static_cast<std::size_t>(num_steps));
    for (int i = 0; i < num_steps; ++i) {
        const long long offset = static_cast<long long>(i) * T / num_steps;
        steps[static_cast<std::size_t>(i)] = T - static_cast<int>(offset);
    }
    return SamplingTimeline(std::move(steps), T);
}

inline SamplingTimeline full_timeline(const NoiseSchedule& schedule) { return subsequence(schedule, schedule.steps()); }

}  // namespace ldmx
