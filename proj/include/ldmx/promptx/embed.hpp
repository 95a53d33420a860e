#pragma once

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::size_t width() const = 0;
};

/// Signed feature hashing of tokens into a fixed number of buckets.
class HashedEmbedder final : public Embedder {
  public:
    explicit HashedEmbedder(std::size_t width = 64) : width_(width) {
        if (width == 0) throw ConfigError("embedder width must be positive");
    }

    std::vector<double> embed(std::string_view text) const override {
        std::vector<double> v(width_, 0.0);
        for (const auto& tok : tokenize(text)) {
            const auto h = ldmx::detail::fnv1a64(tok);
            v[(h & 0x7FFFFFFFFFFFFFFFULL) % width_] += (h >> 63) ? -1.0 : 1.0;
        }
        return v;
    }

    std::size_t width() const override { return width_; }

  private:
    std::size_t width_;
};

/// u·v/(‖u‖‖v‖); 0 when either vector is zero.
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine: width mismatch");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) return 0.0;
    return uv / std::sqrt(uu * vv);
}

}  // namespace ldmx::promptx
