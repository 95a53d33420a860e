#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/diffusion.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/predictor.hpp"
#include "ldmx/schedule.hpp"

namespace ldmx {

// ---------------------------------------------------------------------------
// Exact predictor for Gaussian data

/// Optimal ε for x0 ~ N(mu0, var0·I): ε̂ = (x_t − √ᾱ_t·E[x0|x_t])/√(1−ᾱ_t).
inline Tensor gaussian_oracle_eps(const Tensor& xt, int t, const Tensor& mu0, double var0,
                                  const NoiseSchedule& schedule) {
    require_same_shape(xt, mu0, "gaussian_oracle_eps");
    if (!(var0 >= 0.0)) throw ConfigError("oracle variance must be >= 0");
    schedule.require_timestep(t);
    const double ab = schedule.alpha_bar(t);
    if (!(ab < 1.0)) throw NumericError("gaussian_oracle_eps: alpha_bar == 1");
    const double sab = std::sqrt(ab);
    const double denom = ab * var0 + 1.0 - ab;
    const double inv_s = 1.0 / std::sqrt(1.0 - ab);
    return Tensor::generate(xt.shape(), [&](std::size_t i) {
        const double post_mean = (sab * var0 * xt[i] + (1.0 - ab) * mu0[i]) / denom;
        return (xt[i] - sab * post_mean) * inv_s;
    });
}

class GaussianOracle final : public EpsilonPredictor {
  public:
    GaussianOracle(Tensor mu0, double var0, const NoiseSchedule& schedule)
        : mu0_(std::move(mu0)), var0_(var0), schedule_(schedule) {
        if (!(var0_ >= 0.0)) throw ConfigError("oracle variance must be >= 0");
    }

    Tensor predict(const Tensor& xt, int t, const ConditionTokens*) const override {
        return gaussian_oracle_eps(xt, t, mu0_.reshaped(xt.shape()), var0_, schedule_);
    }

    const Tensor& mu0() const noexcept { return mu0_; }
    double var0() const noexcept { return var0_; }

  private:
    Tensor mu0_;
    double var0_;
    const NoiseSchedule& schedule_;
};

// ---------------------------------------------------------------------------
// Conditioning building blocks

/// Sinusoidal embedding with interleaved (sin, cos) pairs; frequencies are
/// geometric from 1 down to 1/10000.
inline std::vector<double> time_embedding(int t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ShapeError("time embedding width must be even and positive");
    const std::size_t pairs = dim / 2;
    std::vector<double> out(dim);
    for (std::size_t k = 0; k < pairs; ++k) {
        const double frac = pairs == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(pairs - 1);
        const double omega = std::pow(10000.0, -frac);
        const double a = static_cast<double>(t) * omega;
        out[2 * k] = std::sin(a);
        out[2 * k + 1] = std::cos(a);
    }
    return out;
}

/// Single-head projections. Q: (d_k × d_model), K: (d_k × d_cond),
/// V: (d_v × d_cond), O: (d_model × d_v).
struct AttentionWeights {
    MatrixView q, k, v, o;

    void validate(std::size_t query_width, std::size_t memory_width) const {
        if (q.cols != query_width || k.cols != memory_width || v.cols != memory_width)
            throw ShapeError("cross_attention: input width does not match projections");
        if (q.rows != k.rows || o.cols != v.rows || o.rows != query_width)
            throw ShapeError("cross_attention: inconsistent projection shapes");
    }
};

struct CrossAttentionParams {
    Tensor w_q, w_k, w_v, w_o;
    AttentionWeights view() const { return {view_of(w_q), view_of(w_k), view_of(w_v), view_of(w_o)}; }
};

using TokenSequence = std::vector<std::vector<double>>;

struct AttentionResult {
    TokenSequence output;
    std::vector<std::vector<double>> weights;  // [query][memory token]
};

/// softmax(Q·Kᵀ/√d_k)·V followed by the output projection. Memory tokens
/// are visited in lexicographic order, so the output is bit-identical under
/// any permutation of the memory. Weights are reported in input order.
inline AttentionResult cross_attention_detailed(const TokenSequence& queries, const ConditionTokens& memory,
                                                const AttentionWeights& w) {
    if (queries.empty()) return {};
    w.validate(queries.front().size(), memory.width());
    const std::size_t m = memory.count();
    std::vector<std::size_t> order(m);
    for (std::size_t j = 0; j < m; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ta = memory.token(a), tb = memory.token(b);
        return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
    });
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.k.rows));
    std::vector<std::vector<double>> keys(m, std::vector<double>(w.k.rows)), vals(m, std::vector<double>(w.v.rows));
    for (std::size_t j = 0; j < m; ++j) {
        gemv(w.k, memory.token(order[j]), keys[j]);
        gemv(w.v, memory.token(order[j]), vals[j]);
    }
    AttentionResult res;
    std::vector<double> q(w.q.rows), scores(m), ctx(w.v.rows);
    for (const auto& query : queries) {
        if (query.size() != w.q.cols) throw ShapeError("cross_attention: ragged query tokens");
        gemv(w.q, query, q);
        for (std::size_t j = 0; j < m; ++j) scores[j] = dot(q, keys[j]) * scale;
        const auto a = softmax(scores);
        std::fill(ctx.begin(), ctx.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t c = 0; c < ctx.size(); ++c) ctx[c] += a[j] * vals[j][c];
        std::vector<double> out(w.o.rows);
        gemv(w.o, ctx, out);
        std::vector<double> weights(m);
        for (std::size_t j = 0; j < m; ++j) weights[order[j]] = a[j];
        res.output.push_back(std::move(out));
        res.weights.push_back(std::move(weights));
    }
    return res;
}

inline TokenSequence cross_attention(const TokenSequence& queries, const ConditionTokens& memory,
                                     const AttentionWeights& w) {
    return cross_attention_detailed(queries, memory, w).output;
}

/// Frozen embedding of integer labels: label ℓ becomes the two tokens
/// (row ℓ, shared row), giving attention something to choose between.
class LabelEncoder {
  public:
    LabelEncoder(std::size_t num_labels, std::size_t width, std::uint64_t seed) : num_labels_(num_labels), width_(width) {
        if (num_labels == 0 || width == 0) throw ConfigError("label encoder needs labels and width");
        RngStream rng = RngStream(seed).child("label-embedding");
        table_ = gaussian(Shape{num_labels + 1, width}, rng);
        build();
    }

    explicit LabelEncoder(Tensor table) : table_(std::move(table)) {
        if (table_.shape().size() != 2 || table_.shape()[0] < 2) throw FormatError("label table must be (labels+1, width)");
        num_labels_ = table_.shape()[0] - 1;
        width_ = table_.shape()[1];
        build();
    }

    std::size_t num_labels() const noexcept { return num_labels_; }
    std::size_t width() const noexcept { return width_; }
    const Tensor& table() const noexcept { return table_; }

    const ConditionTokens& encode(std::size_t label) const {
        if (label >= num_labels_) throw ConfigError("label " + std::to_string(label) + " out of range");
        return encoded_[label];
    }

  private:
    void build() {
        encoded_.clear();
        auto row = [&](std::size_t r) {
            return std::vector<double>(table_.values().begin() + static_cast<std::ptrdiff_t>(r * width_),
                                       table_.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * width_));
        };
        for (std::size_t l = 0; l < num_labels_; ++l) encoded_.emplace_back(TokenSequence{row(l), row(num_labels_)});
    }

    std::size_t num_labels_ = 0;
    std::size_t width_ = 0;
    Tensor table_;
    std::vector<ConditionTokens> encoded_;
};

// ---------------------------------------------------------------------------
// Toy conditional denoiser

struct ToyDenoiserConfig {
    std::size_t data_width = 2;
    std::size_t hidden = 16;     // token width; also the time-embedding width
    std::size_t ff_width = 64;
    std::size_t cond_width = 16;
    std::size_t attn_width = 16;

    friend bool operator==(const ToyDenoiserConfig&, const ToyDenoiserConfig&) = default;
};

struct ParamGroup {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size() const { return shape_size(shape); }
};

/// Parameters live in one flat vector; groups are named slices of it.
class ToyDenoiser final : public EpsilonPredictor {
  public:
    enum Group : std::size_t {
        in_w, in_b,
        ff1_in_w, ff1_in_b, ff1_out_w, ff1_out_b,
        attn_q, attn_k, attn_v, attn_o,
        ff2_in_w, ff2_in_b, ff2_out_w, ff2_out_b,
        out_w, out_b,
    };

    explicit ToyDenoiser(ToyDenoiserConfig cfg) : cfg_(cfg) {
        if (cfg_.hidden == 0 || cfg_.hidden % 2 != 0) throw ConfigError("hidden width must be even");
        if (cfg_.data_width == 0 || cfg_.ff_width == 0 || cfg_.cond_width == 0 || cfg_.attn_width == 0)
            throw ConfigError("toy denoiser widths must be positive");
        const auto D = cfg_.data_width, H = cfg_.hidden, F = cfg_.ff_width, C = cfg_.cond_width, K = cfg_.attn_width;
        add("in_w", {H, D});
        add("in_b", {H});
        add("ff1_in_w", {F, H});
        add("ff1_in_b", {F});
        add("ff1_out_w", {H, F});
        add("ff1_out_b", {H});
        add("attn_q", {K, H});
        add("attn_k", {K, C});
        add("attn_v", {K, C});
        add("attn_o", {H, K});
        add("ff2_in_w", {F, H});
        add("ff2_in_b", {F});
        add("ff2_out_w", {H, F});
        add("ff2_out_b", {H});
        add("out_w", {D, H});
        add("out_b", {D});
        params_.assign(total_, 0.0);
    }

    /// Fan-in scaled normal weights, zero biases; the residual and output
    /// projections start at a tenth of that scale.
    static ToyDenoiser initialized(ToyDenoiserConfig cfg, std::uint64_t seed) {
        ToyDenoiser m(cfg);
        RngStream rng = RngStream(seed).child("toy-denoiser-init");
        for (const auto& g : m.groups_) {
            if (g.shape.size() != 2) continue;
            double scale = 1.0 / std::sqrt(static_cast<double>(g.shape[1]));
            if (g.name == "ff1_out_w" || g.name == "ff2_out_w" || g.name == "out_w" || g.name == "attn_o") scale *= 0.1;
            auto p = m.group(g.name);
            for (auto& v : p) v = scale * rng.normal();
        }
        return m;
    }

    const ToyDenoiserConfig& config() const noexcept { return cfg_; }
    const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    std::span<double> group(std::string_view name) {
        const auto& g = find(name);
        return std::span<double>(params_).subspan(g.offset, g.size());
    }
    std::span<const double> group(std::string_view name) const {
        const auto& g = find(name);
        return std::span<const double>(params_).subspan(g.offset, g.size());
    }

    Tensor predict(const Tensor& xt, int t, const ConditionTokens* condition) const override {
        check_input(xt, condition);
        Cache c;
        forward(xt.values(), t, condition, c);
        return Tensor(xt.shape(), std::move(c.y));
    }

    /// Mean-squared error against `target` for one example; adds
    /// weight·∂loss/∂θ into `grad` and returns the loss.
    double loss_gradient(const Tensor& xt, int t, const ConditionTokens* condition, const Tensor& target, double weight,
                         std::span<double> grad) const {
        check_input(xt, condition);
        require_same_shape(xt, target, "loss_gradient");
        if (grad.size() != params_.size()) throw ShapeError("gradient buffer has wrong size");
        Cache c;
        forward(xt.values(), t, condition, c);
        const auto D = cfg_.data_width;
        std::vector<double> gy(D);
        double loss = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            const double r = c.y[i] - target[i];
            loss += r * r;
            gy[i] = weight * 2.0 * r / static_cast<double>(D);
        }
        backward(xt.values(), condition, c, gy, grad);
        return loss / static_cast<double>(D);
    }

  private:
    struct Cache {
        std::vector<double> h0, u1, a1, h1, q, scores, attn, ctx, h2, u2, a2, h3, y;
        std::vector<std::vector<double>> keys, vals;
    };

    static double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
    static double silu(double u) { return u * sigmoid(u); }
    static double silu_grad(double u) {
        const double s = sigmoid(u);
        return s * (1.0 + u * (1.0 - s));
    }

    void add(std::string name, Shape shape) {
        groups_.push_back({std::move(name), shape, total_});
        total_ += shape_size(shape);
    }

    const ParamGroup& find(std::string_view name) const {
        for (const auto& g : groups_)
            if (g.name == name) return g;
        throw ConfigError("unknown parameter group " + std::string(name));
    }

    std::span<const double> group(std::size_t idx) const {
        const auto& g = groups_[idx];
        return std::span<const double>(params_).subspan(g.offset, g.size());
    }

    MatrixView mat(std::size_t idx) const {
        const auto& g = groups_[idx];
        return {std::span<const double>(params_).subspan(g.offset, g.size()), g.shape[0], g.shape[1]};
    }

    void check_input(const Tensor& xt, const ConditionTokens* condition) const {
        if (xt.size() != cfg_.data_width)
            throw ShapeError("toy denoiser expects " + std::to_string(cfg_.data_width) + " values, got " +
                             std::to_string(xt.size()));
        if (condition && condition->width() != cfg_.cond_width) throw ShapeError("condition width mismatch");
    }

    // `base` is the block's *_in_w group; the next three groups follow in order.
    void residual_ff(std::size_t base, const std::vector<double>& in, std::vector<double>& u, std::vector<double>& a,
                     std::vector<double>& out) const {
        u.assign(cfg_.ff_width, 0.0);
        gemv(mat(base), in, u);
        const auto bin = group(base + 1);
        a.resize(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] += bin[i];
            a[i] = silu(u[i]);
        }
        out = in;
        gemv(mat(base + 2), a, out, true);
        const auto bout = group(base + 3);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bout[i];
    }

    void forward(std::span<const double> x, int t, const ConditionTokens* cond, Cache& c) const {
        const auto H = cfg_.hidden;
        c.h0.assign(H, 0.0);
        gemv(mat(in_w), x, c.h0);
        const auto b = group(in_b);
        const auto te = time_embedding(t, H);
        for (std::size_t i = 0; i < H; ++i) c.h0[i] += b[i] + te[i];

        residual_ff(ff1_in_w, c.h0, c.u1, c.a1, c.h1);

        c.h2 = c.h1;
        if (cond) {
            const auto K = cfg_.attn_width;
            const std::size_t m = cond->count();
            c.q.assign(K, 0.0);
            gemv(mat(attn_q), c.h1, c.q);
            c.keys.assign(m, std::vector<double>(K));
            c.vals.assign(m, std::vector<double>(K));
            c.scores.resize(m);
            const double scale = 1.0 / std::sqrt(static_cast<double>(K));
            for (std::size_t j = 0; j < m; ++j) {
                gemv(mat(attn_k), cond->token(j), c.keys[j]);
                gemv(mat(attn_v), cond->token(j), c.vals[j]);
                c.scores[j] = dot(c.q, c.keys[j]) * scale;
            }
            c.attn = softmax(c.scores);
            c.ctx.assign(K, 0.0);
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t k = 0; k < K; ++k) c.ctx[k] += c.attn[j] * c.vals[j][k];
            gemv(mat(attn_o), c.ctx, c.h2, true);
        }

        residual_ff(ff2_in_w, c.h2, c.u2, c.a2, c.h3);

        c.y.assign(cfg_.data_width, 0.0);
        gemv(mat(out_w), c.h3, c.y);
        const auto ob = group(out_b);
        for (std::size_t i = 0; i < c.y.size(); ++i) c.y[i] += ob[i];
    }

    std::span<double> gslice(std::span<double> grad, std::size_t idx) const {
        const auto& g = groups_[idx];
        return grad.subspan(g.offset, g.size());
    }

    // Returns ∂/∂in given ∂/∂out for out = in + W_out·silu(W_in·in + b_in) + b_out.
    std::vector<double> residual_ff_backward(std::size_t base, const std::vector<double>& in,
                                             const std::vector<double>& u, const std::vector<double>& a,
                                             const std::vector<double>& g_out, std::span<double> grad) const {
        auto g_bout = gslice(grad, base + 3);
        for (std::size_t i = 0; i < g_out.size(); ++i) g_bout[i] += g_out[i];
        outer_acc(g_out, a, gslice(grad, base + 2));
        std::vector<double> g_u(u.size(), 0.0);
        gemv_transposed_acc(mat(base + 2), g_out, g_u);
        for (std::size_t i = 0; i < u.size(); ++i) g_u[i] *= silu_grad(u[i]);
        auto g_bin = gslice(grad, base + 1);
        for (std::size_t i = 0; i < g_u.size(); ++i) g_bin[i] += g_u[i];
        outer_acc(g_u, in, gslice(grad, base));
        std::vector<double> g_in = g_out;
        gemv_transposed_acc(mat(base), g_u, g_in);
        return g_in;
    }

    void backward(std::span<const double> x, const ConditionTokens* cond, const Cache& c, const std::vector<double>& gy,
                  std::span<double> grad) const {
        auto g_ob = gslice(grad, out_b);
        for (std::size_t i = 0; i < gy.size(); ++i) g_ob[i] += gy[i];
        outer_acc(gy, c.h3, gslice(grad, out_w));
        std::vector<double> g_h3(cfg_.hidden, 0.0);
        gemv_transposed_acc(mat(out_w), gy, g_h3);

        std::vector<double> g_h2 = residual_ff_backward(ff2_in_w, c.h2, c.u2, c.a2, g_h3, grad);

        std::vector<double> g_h1 = g_h2;
        if (cond) {
            const auto K = cfg_.attn_width;
            const std::size_t m = cond->count();
            const double scale = 1.0 / std::sqrt(static_cast<double>(K));
            outer_acc(g_h2, c.ctx, gslice(grad, attn_o));
            std::vector<double> g_ctx(K, 0.0);
            gemv_transposed_acc(mat(attn_o), g_h2, g_ctx);

            std::vector<double> g_a(m);
            for (std::size_t j = 0; j < m; ++j) g_a[j] = dot(g_ctx, c.vals[j]);
            double avg = 0.0;
            for (std::size_t j = 0; j < m; ++j) avg += c.attn[j] * g_a[j];

            std::vector<double> g_q(K, 0.0), g_k(K), g_v(K);
            auto g_wk = gslice(grad, attn_k);
            auto g_wv = gslice(grad, attn_v);
            for (std::size_t j = 0; j < m; ++j) {
                const double g_s = c.attn[j] * (g_a[j] - avg);
                for (std::size_t k = 0; k < K; ++k) {
                    g_q[k] += g_s * scale * c.keys[j][k];
                    g_k[k] = g_s * scale * c.q[k];
                    g_v[k] = c.attn[j] * g_ctx[k];
                }
                outer_acc(g_k, cond->token(j), g_wk);
                outer_acc(g_v, cond->token(j), g_wv);
            }
            outer_acc(g_q, c.h1, gslice(grad, attn_q));
            gemv_transposed_acc(mat(attn_q), g_q, g_h1);
        }

        std::vector<double> g_h0 = residual_ff_backward(ff1_in_w, c.h0, c.u1, c.a1, g_h1, grad);

        auto g_ib = gslice(grad, in_b);
        for (std::size_t i = 0; i < g_h0.size(); ++i) g_ib[i] += g_h0[i];
        outer_acc(g_h0, x, gslice(grad, in_w));
    }

    ToyDenoiserConfig cfg_;
    std::vector<ParamGroup> groups_;
    std::size_t total_ = 0;
    std::vector<double> params_;
};

inline Tensor toy_denoiser_forward(const ToyDenoiser& model, const Tensor& xt, int t,
                                   const ConditionTokens* condition) {
    return model.predict(xt, t, condition);
}

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { gradient_descent, adam };

struct TrainConfig {
    std::size_t steps = 20000;
    std::size_t batch_size = 128;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double drop_probability = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
        if (!(drop_probability >= 0.0 && drop_probability <= 1.0))
            throw ConfigError("drop probability must lie in [0, 1]");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    }
};

/// Plain gradient descent or Adam over a flat parameter vector.
class Optimizer {
  public:
    Optimizer(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    void apply(std::span<double> params, std::span<const double> grad) {
        ++step_;
        if (cfg_.optimizer == OptimizerKind::gradient_descent) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.learning_rate * grad[i];
            return;
        }
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
        }
    }

  private:
    TrainConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t step_ = 0;
};

/// Models the trainer can fit: an ε-predictor exposing its flat parameters
/// and a per-example loss gradient.
template <typename M>
concept TrainablePredictor = std::derived_from<M, EpsilonPredictor> &&
    requires(M m, const M cm, const Tensor& x, const ConditionTokens* c, std::span<double> g) {
    { m.parameters() } -> std::convertible_to<std::span<double>>;
    { cm.loss_gradient(x, 1, c, x, 1.0, g) } -> std::convertible_to<double>;
};

struct TrainingExample {
    Tensor x0;
    const ConditionTokens* condition = nullptr;  // owned by the data source
};

class DataSource {
  public:
    virtual ~DataSource() = default;
    virtual TrainingExample draw(RngStream& rng) const = 0;
    virtual Shape shape() const = 0;
};

/// Fully specified example for one gradient step.
struct NoisedExample {
    Tensor x0;
    int t;
    Tensor eps;
    const ConditionTokens* condition;
};

/// One optimizer step on the batch-mean loss_simple. Returns the batch loss.
template <TrainablePredictor M>
double train_step(M& model, Optimizer& opt, std::span<const NoisedExample> batch, const NoiseSchedule& schedule) {
    auto params = model.parameters();
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> losses(batch.size());
    const double w = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ex = batch[b];
        const Tensor xt = q_sample(ex.x0, ex.t, ex.eps, schedule);
        losses[b] = model.loss_gradient(xt, ex.t, ex.condition, ex.eps, w, grad);
    }
    const double loss = pairwise_sum(losses) * w;
    if (!std::isfinite(loss)) throw TrainingDiverged("training diverged: non-finite loss");
    for (double g : grad)
        if (!std::isfinite(g)) throw TrainingDiverged("training diverged: non-finite gradient");
    opt.apply(params, grad);
    for (double p : params)
        if (!std::isfinite(p)) throw TrainingDiverged("training diverged: non-finite parameters");
    return loss;
}

template <typename M>
struct TrainResult {
    M model;
    std::vector<double> losses;
};

/// Samples (x0, t ~ U{1..T}, ε, condition drop) per example and takes
/// `config.steps` optimizer steps.
template <TrainablePredictor M>
TrainResult<M> train(M model, const DataSource& data, const TrainConfig& config, const NoiseSchedule& schedule) {
    config.validate();
    Optimizer opt(config, model.parameters().size());
    RngStream rng = RngStream(config.seed).child("train");
    std::vector<double> losses;
    losses.reserve(config.steps);
    std::vector<NoisedExample> batch;
    for (std::size_t step = 0; step < config.steps; ++step) {
        batch.clear();
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            TrainingExample ex = data.draw(rng);
            const int t = static_cast<int>(rng.uniform_int(1, schedule.steps()));
            Tensor eps = gaussian(ex.x0.shape(), rng);
            const ConditionTokens* cond = ex.condition;
            if (config.drop_probability > 0.0 && rng.uniform() < config.drop_probability) cond = nullptr;
            batch.push_back({std::move(ex.x0), t, std::move(eps), cond});
        }
        losses.push_back(train_step(model, opt, std::span<const NoisedExample>(batch), schedule));
    }
    return {std::move(model), std::move(losses)};
}

}  // namespace ldmx
