#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/denoisers.hpp"
#include "ldmx/numerics.hpp"

namespace ldmx {

/// Eight isotropic Gaussians evenly spaced on a circle; each example carries
/// its component index as a label condition.
class GaussianRing final : public DataSource {
  public:
    static constexpr std::size_t kModes = 8;

    GaussianRing(double radius, double stddev, std::optional<LabelEncoder> labels = std::nullopt)
        : radius_(radius), stddev_(stddev), labels_(std::move(labels)) {
        if (!(radius > 0.0) || !(stddev > 0.0)) throw ConfigError("ring radius and stddev must be positive");
        if (labels_ && labels_->num_labels() != kModes) throw ConfigError("ring label encoder needs 8 labels");
    }

    static std::vector<Tensor> centers(double radius) {
        std::vector<Tensor> out;
        for (std::size_t k = 0; k < kModes; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / kModes;
            out.push_back(Tensor::vector({radius * std::cos(a), radius * std::sin(a)}));
        }
        return out;
    }

    TrainingExample draw(RngStream& rng) const override {
        const auto k = static_cast<std::size_t>(rng.uniform_int(0, kModes - 1));
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / kModes;
        const auto [n0, n1] = rng.normal_pair();
        Tensor x = Tensor::vector({radius_ * std::cos(a) + stddev_ * n0, radius_ * std::sin(a) + stddev_ * n1});
        return {std::move(x), labels_ ? &labels_->encode(k) : nullptr};
    }

    Shape shape() const override { return {2}; }
    double radius() const noexcept { return radius_; }
    const std::optional<LabelEncoder>& labels() const noexcept { return labels_; }

  private:
    double radius_;
    double stddev_;
    std::optional<LabelEncoder> labels_;
};

/// Two interleaved half circles with Gaussian jitter, centered near the origin.
class TwoMoons final : public DataSource {
  public:
    explicit TwoMoons(double noise = 0.05) : noise_(noise) {
        if (!(noise >= 0.0)) throw ConfigError("moon noise must be >= 0");
    }

    TrainingExample draw(RngStream& rng) const override {
        const double a = std::numbers::pi * rng.uniform();
        const bool upper = rng.uniform() < 0.5;
        const auto [n0, n1] = rng.normal_pair();
        const double x = upper ? std::cos(a) : 1.0 - std::cos(a);
        const double y = upper ? std::sin(a) : 0.5 - std::sin(a);
        return {Tensor::vector({x - 0.5 + noise_ * n0, y - 0.25 + noise_ * n1}), nullptr};
    }

    Shape shape() const override { return {2}; }

  private:
    double noise_;
};

/// Points s·direction with s ~ N(0, 1): data confined to a 1-D subspace.
class LineSubspace final : public DataSource {
  public:
    explicit LineSubspace(Tensor direction = Tensor::vector({0.6, 0.8})) : dir_(std::move(direction)) {}

    TrainingExample draw(RngStream& rng) const override { return {rng.normal() * dir_, nullptr}; }
    Shape shape() const override { return dir_.shape(); }

    std::vector<Tensor> take(std::size_t n, RngStream& rng) const {
        std::vector<Tensor> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng).x0);
        return out;
    }

  private:
    Tensor dir_;
};

inline constexpr double kRingRadius = 2.0;
inline constexpr double kRingStddev = 0.1;
inline constexpr std::size_t kLabelWidth = 16;

inline const std::vector<std::string>& builtin_dataset_names() {
    static const std::vector<std::string> names{"8-gaussian-ring", "two-moons", "line-subspace"};
    return names;
}

/// Built-in dataset by name. The ring carries a frozen label encoder seeded from `seed`.
inline std::unique_ptr<DataSource> make_dataset(std::string_view name, std::uint64_t seed) {
    if (name == "8-gaussian-ring")
        return std::make_unique<GaussianRing>(kRingRadius, kRingStddev,
                                              LabelEncoder(GaussianRing::kModes, kLabelWidth, seed));
    if (name == "two-moons") return std::make_unique<TwoMoons>();
    if (name == "line-subspace") return std::make_unique<LineSubspace>();
    throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

/// Per-mode sample counts: nearest center, only if within `capture` of it.
inline std::vector<std::size_t> mode_histogram(std::span<const Tensor> samples, std::span<const Tensor> centers,
                                               double capture) {
    std::vector<std::size_t> counts(centers.size(), 0);
    for (const auto& s : samples) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double d = squared_norm(s - centers[k]);
            if (d < best_d) best_d = d, best = k;
        }
        if (std::sqrt(best_d) <= capture) ++counts[best];
    }
    return counts;
}

}  // namespace ldmx
