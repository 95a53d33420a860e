#pragma once

#include <cstddef>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/numerics.hpp"

namespace ldmx {

/// Encoded condition τ(y): a nonempty sequence of equal-width token vectors.
/// Serves as key/value memory for cross-attention.
class ConditionTokens {
  public:
    explicit ConditionTokens(std::vector<std::vector<double>> tokens) : tokens_(std::move(tokens)) {
        if (tokens_.empty()) throw ShapeError("condition must contain at least one token");
        const std::size_t w = tokens_.front().size();
        if (w == 0) throw ShapeError("condition tokens must have nonzero width");
        for (const auto& t : tokens_) {
            if (t.size() != w) throw ShapeError("condition tokens must share one width");
            for (double v : t)
                if (!std::isfinite(v)) throw NumericError("non-finite condition token");
        }
    }

    std::size_t count() const noexcept { return tokens_.size(); }
    std::size_t width() const noexcept { return tokens_.front().size(); }
    std::span<const double> token(std::size_t i) const { return tokens_.at(i); }
    const std::vector<std::vector<double>>& tokens() const noexcept { return tokens_; }

  private:
    std::vector<std::vector<double>> tokens_;
};

/// ε_θ(x_t, t, c). `condition` may be null for the unconditional branch.
/// Implementations must be safe to call concurrently.
class EpsilonPredictor {
  public:
    virtual ~EpsilonPredictor() = default;
    virtual Tensor predict(const Tensor& xt, int t, const ConditionTokens* condition) const = 0;
};

}  // namespace ldmx
