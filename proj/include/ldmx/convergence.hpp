#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ldmx/samplers.hpp"

namespace ldmx {

struct ConvergenceRow {
    SamplerKind kind;
    int steps;
    double relative_error;  // ‖x − x_ref‖ / ‖x_ref‖ over all starting points
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    double ddim_order = 0.0;
    double plms_order = 0.0;
    int reference_steps = 0;
};

/// Least-squares slope p of ln(error) = c − p·ln(steps).
inline double fitted_order(std::span<const int> steps, std::span<const double> errors) {
    if (steps.size() != errors.size() || steps.size() < 2) throw ConfigError("fitted_order needs >= 2 points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (!(errors[i] > 0.0)) throw NumericError("fitted_order: errors must be positive");
        mx += std::log(static_cast<double>(steps[i])) / n;
        my += std::log(errors[i]) / n;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const double dx = std::log(static_cast<double>(steps[i])) - mx;
        sxy += dx * (std::log(errors[i]) - my);
        sxx += dx * dx;
    }
    return -sxy / sxx;
}

/// Deterministic endpoint of a σ = 0 chain from x_T.
inline Tensor deterministic_endpoint(const EpsilonPredictor& predictor, SamplerKind kind, int steps,
                                     const NoiseSchedule& schedule, const Tensor& x_T) {
    SamplingPlan plan{subsequence(schedule, steps), kind};
    plan.eta = 0.0;
    plan.shape = x_T.shape();
    plan.validate(schedule);
    RngStream unused(0);
    return run_chain(predictor, plan, schedule, nullptr, x_T, unused);
}

/// Relative endpoint error of DDIM(η=0) and PLMS against a DDIM(η=0)
/// reference with `reference_steps` transfers, from the same starting points.
/// Orders are fitted on `fit_steps`.
inline ConvergenceReport convergence_study(const EpsilonPredictor& predictor, const NoiseSchedule& schedule,
                                           std::span<const Tensor> starts, std::span<const int> report_steps,
                                           std::span<const int> fit_steps, int reference_steps) {
    if (starts.empty()) throw ConfigError("convergence_study needs starting points");
    std::vector<Tensor> refs;
    for (const auto& x : starts) refs.push_back(deterministic_endpoint(predictor, SamplerKind::ddim, reference_steps, schedule, x));
    double ref_norm = 0.0;
    for (const auto& r : refs) ref_norm += squared_norm(r);

    auto error_at = [&](SamplerKind kind, int steps) {
        double e = 0.0;
        for (std::size_t i = 0; i < starts.size(); ++i)
            e += squared_norm(deterministic_endpoint(predictor, kind, steps, schedule, starts[i]) - refs[i]);
        return std::sqrt(e / ref_norm);
    };

    ConvergenceReport report;
    report.reference_steps = reference_steps;
    for (SamplerKind kind : {SamplerKind::ddim, SamplerKind::plms}) {
        for (int s : report_steps) report.rows.push_back({kind, s, error_at(kind, s)});
        std::vector<double> errs;
        for (int s : fit_steps) {
            const ConvergenceRow* found = nullptr;
            for (const auto& r : report.rows)
                if (r.kind == kind && r.steps == s) found = &r;
            errs.push_back(found ? found->relative_error : error_at(kind, s));
        }
        (kind == SamplerKind::ddim ? report.ddim_order : report.plms_order) = fitted_order(fit_steps, errs);
    }
    return report;
}

inline constexpr int kConvergenceScheduleSteps = 2000;
inline constexpr int kConvergenceReferenceSteps = 2000;
inline constexpr int kConvergenceReportSteps[] = {10, 20, 40, 80, 200};
inline constexpr int kConvergenceFitSteps[] = {10, 20, 40, 80};

/// Schedule used for convergence studies: default β endpoints over 2000
/// steps, so that a 2000-transfer reference exists.
inline NoiseSchedule convergence_schedule() {
    return linear_schedule(kConvergenceScheduleSteps, ScheduleDefaults::beta_start, ScheduleDefaults::beta_end);
}

}  // namespace ldmx
