// Acceptance run: one PASS/FAIL/SKIP line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>

#include "ldmx/ldmx.hpp"
#include "oracles.hpp"

using namespace ldmx;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome check(bool ok, const std::string& detail) { return {ok ? Verdict::pass : Verdict::fail, detail}; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Outcome forward_marginals() {
    const auto sched = linear_schedule(1000, 1e-4, 0.02);
    const auto x0 = Tensor::vector({1.5, -0.5});
    constexpr std::size_t n = 10000;
    const int probes[] = {10, 100, 1000};
    std::vector<Tensor> chains(n, x0);
    RngStream rng = RngStream(11).child("forward-chain");
    bool ok = true;
    double worst = 0.0;
    std::size_t next = 0;
    for (int t = 1; t <= 1000; ++t) {
        for (auto& x : chains) x = q_step(x, t, sched, rng);
        if (t != probes[next]) continue;
        ++next;
        const auto st = sample_stats(chains);
        const double ab = sched.alpha_bar(t), var = 1.0 - ab;
        for (std::size_t j = 0; j < 2; ++j) {
            const double z_mean = (st.mean[j] - std::sqrt(ab) * x0[j]) / std::sqrt(var / n);
            const double z_var = (st.covariance[j * 2 + j] - var) / (var * std::sqrt(2.0 / (n - 1)));
            worst = std::max({worst, std::abs(z_mean), std::abs(z_var)});
            ok = ok && std::abs(z_mean) <= 3.0 && std::abs(z_var) <= 3.0;
        }
    }
    return check(ok, "max |z| = " + num(worst));
}

Outcome plms_coefficients() {
    const std::vector<std::vector<int>> rows{{3, -1}, {23, -16, 5}, {55, -59, 37, -9}};
    const int div[] = {2, 12, 24};
    bool ok = true;
    for (std::size_t order = 1; order <= 3; ++order) {
        for (std::size_t basis = 0; basis <= order; ++basis) {
            std::vector<double> e(order + 1, 0.0);
            e[basis] = 1.0;
            EpsHistory h;
            for (std::size_t k = order; k >= 1; --k) h.push(Tensor::scalar(e[k]));
            const double got = plms_combine(Tensor::scalar(e[0]), h)[0];
            ok = ok && got == static_cast<double>(rows[order - 1][basis]) / div[order - 1];
        }
        RngStream rng(order);
        for (int trial = 0; trial < 1000; ++trial) {
            const double c = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform_int(-8, 8));
            EpsHistory h;
            for (std::size_t k = 0; k < order; ++k) h.push(Tensor::scalar(c));
            ok = ok && plms_combine(Tensor::scalar(c), h)[0] == c;
        }
    }
    return check(ok, "three rows on basis inputs and constants");
}

Outcome ancestral_identity() {
    const auto sched = linear_schedule(1000, 1e-4, 0.02);
    double worst_var = 0.0, worst_mean = 0.0;
    for (int t = 1; t <= sched.steps(); ++t) {
        const double s = ddim_sigma(1.0, t, t - 1, sched);
        const double bt = sched.posterior_variance(t);
        worst_var = std::max(worst_var, bt == 0.0 ? std::abs(s * s) : std::abs(s * s - bt) / bt);
    }
    RngStream rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        const int t = static_cast<int>(rng.uniform_int(1, sched.steps()));
        const auto xt = 2.0 * gaussian(Shape{3}, rng), eps = gaussian(Shape{3}, rng);
        const double sigma = ddim_sigma(1.0, t, t - 1, sched);
        RngStream a = rng.child("draw", static_cast<std::uint64_t>(trial));
        RngStream z_copy = a;
        const auto ddim = ddim_step(xt, eps, t, t - 1, sigma, sched, a).x_next;
        const auto ddim_mean = sigma > 0.0 ? axpby(1.0, ddim, -sigma, gaussian(Shape{3}, z_copy)) : ddim;
        const auto post = posterior_mean_from_eps(xt, eps, t, sched);
        for (std::size_t i = 0; i < 3; ++i) worst_mean = std::max(worst_mean, std::abs(ddim_mean[i] - post[i]));
    }
    return check(worst_var <= 1e-12 && worst_mean <= 1e-10,
                 "max rel var err " + num(worst_var) + ", max mean diff " + num(worst_mean));
}

Outcome oracle_sampling() {
    const auto sched = linear_schedule(1000, 1e-4, 0.02);
    const GaussianOracle oracle(Tensor::vector({3.0, -1.0}), 0.25, sched);
    SamplingPlan plan{subsequence(sched, 200), SamplerKind::ddim};
    plan.eta = 1.0;
    plan.seed = 4;
    plan.batch = 20000;
    plan.shape = {2};
    const auto st = sample_stats(sample(oracle, plan, sched));
    const double dm = std::max(std::abs(st.mean[0] - 3.0), std::abs(st.mean[1] + 1.0));
    double dc = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) dc = std::max(dc, std::abs(st.covariance[i * 2 + j] - (i == j ? 0.25 : 0.0)));
    return check(dm <= 0.05 && dc <= 0.05, "mean err " + num(dm) + ", cov err " + num(dc));
}

Outcome convergence_order() {
    const auto sched = convergence_schedule();
    const GaussianOracle oracle(Tensor::vector({3.0, -1.0}), 0.25, sched);
    RngStream rng = RngStream(0).child("compare-samplers");
    std::vector<Tensor> starts;
    for (int i = 0; i < 16; ++i) starts.push_back(gaussian(Shape{2}, rng));
    const auto report = convergence_study(oracle, sched, starts, kConvergenceReportSteps, kConvergenceFitSteps,
                                          kConvergenceReferenceSteps);
    double diff = 0.0, ref = 0.0;
    for (const auto& x : starts) {
        const auto r = deterministic_endpoint(oracle, SamplerKind::ddim, kConvergenceReferenceSteps, sched, x);
        const auto p = deterministic_endpoint(oracle, SamplerKind::plms, 50, sched, x);
        diff += squared_norm(p - r);
        ref += squared_norm(r);
    }
    const double err50 = std::sqrt(diff / ref);
    const bool ok = report.plms_order >= 1.8 && report.ddim_order >= 0.8 && report.ddim_order <= 1.3 && err50 <= 1e-2;
    return check(ok, "plms order " + num(report.plms_order) + ", ddim order " + num(report.ddim_order) +
                         ", plms@50 rel err " + num(err50));
}

Outcome gradient_fidelity() {
    const auto model = ToyDenoiser::initialized({}, 5);
    const LabelEncoder labels(8, kLabelWidth, 5);
    RngStream rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
        const auto xt = gaussian(Shape{2}, rng), target = gaussian(Shape{2}, rng);
        const int t = static_cast<int>(rng.uniform_int(1, 1000));
        for (const ConditionTokens* c : {&labels.encode(static_cast<std::size_t>(trial)),
                                         static_cast<const ConditionTokens*>(nullptr)}) {
            std::vector<double> grad(model.parameters().size(), 0.0);
            model.loss_gradient(xt, t, c, target, 1.0, grad);
            const auto fd = oracle::finite_difference_gradient(model, xt, t, c, target, 1e-4);
            for (const auto& g : model.groups()) {
                double d2 = 0.0, r2 = 0.0;
                for (std::size_t i = g.offset; i < g.offset + g.size(); ++i) {
                    d2 += (grad[i] - fd[i]) * (grad[i] - fd[i]);
                    r2 += fd[i] * fd[i];
                }
                worst = std::max(worst, r2 == 0.0 ? std::sqrt(d2) : std::sqrt(d2 / r2));
            }
        }
    }
    return check(worst <= 1e-4, "max group rel err " + num(worst));
}

Outcome ring_quality() {
    const auto sched = linear_schedule(1000, 1e-4, 0.02);
    const GaussianRing ring(kRingRadius, kRingStddev, LabelEncoder(8, kLabelWidth, 7));
    TrainConfig tc;
    tc.seed = 1;
    tc.drop_probability = 0.1;
    const auto model = train(ToyDenoiser::initialized({}, 1), ring, tc, sched).model;

    SamplingPlan plan{subsequence(sched, 50), SamplerKind::plms};
    plan.seed = 3;
    plan.batch = 1000;
    plan.guidance_scale = 1.0;
    plan.shape = {2};
    plan.validate(sched);
    const GuidedPredictor guided(model, plan.guidance_scale);
    std::vector<Tensor> samples;
    for (std::size_t i = 0; i < plan.batch; ++i) {
        RngStream r = element_stream(plan.seed, i);
        samples.push_back(sample_one(guided, plan, sched, &ring.labels()->encode(i % 8), r));
    }
    const auto hist = mode_histogram(samples, GaussianRing::centers(kRingRadius), 0.5);
    std::size_t covered = 0;
    std::string counts;
    for (auto c : hist) {
        covered += c >= 50 ? 1 : 0;
        counts += (counts.empty() ? "" : "/") + std::to_string(c);
    }
    return check(covered >= 7, std::to_string(covered) + " of 8 modes >= 5%, counts " + counts);
}

Outcome autoencoder_losses() {
    const double k0 = kl_loss({Tensor(Shape{4}), Tensor(Shape{4})});
    const double k1 = kl_loss({Tensor::scalar(1.0), Tensor::scalar(0.0)});
    const double k2 = kl_loss({Tensor::scalar(0.0), Tensor::scalar(1.0)});
    const bool fixed = std::abs(k0) <= 1e-9 && std::abs(k1 - 0.5) <= 1e-9 && std::abs(k2 - (std::exp(1.0) - 2.0) / 2.0) <= 1e-9;
    RngStream rng(2);
    const auto data = LineSubspace().take(256, rng);
    const auto trained = train_toy_ae(ToyAutoencoderParams::initialized(2, 1, 4), data, {});
    const double mse = reconstruction_mse(trained.params, data);
    return check(fixed && mse < 0.01, "kl fixed points " + std::string(fixed ? "ok" : "off") + ", mse " + num(mse));
}

Outcome retrieval_equivalence() {
    const char* words[] = {"sun", "moon", "river", "city", "old", "new", "red", "blue", "tree", "road", "1980", "x"};
    RngStream rng(1234);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<promptx::Document> docs(static_cast<std::size_t>(rng.uniform_int(1, 10)));
        std::vector<std::string> texts;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            docs[d].id = "d" + std::to_string(d);
            docs[d].title = words[rng.uniform_int(0, 11)];
            for (int w = 0, len = static_cast<int>(rng.uniform_int(0, 12)); w < len; ++w)
                docs[d].body += std::string(words[rng.uniform_int(0, 11)]) + " ";
            texts.push_back(docs[d].indexed_text());
        }
        std::string query;
        for (int w = 0, len = static_cast<int>(rng.uniform_int(0, 4)); w < len; ++w)
            query += std::string(words[rng.uniform_int(0, 11)]) + " ";
        const auto got = promptx::build_index(docs).score_all(query);
        const auto ref = oracle::bm25_brute(docs, query);
        for (std::size_t d = 0; d < got.size(); ++d) mismatches += got[d] != ref[d];
        if (promptx::tfidf_score(promptx::tfidf_fit(texts), query) != oracle::tfidf_naive(texts, query)) ++mismatches;
    }
    const auto single = promptx::bm25_search(promptx::build_index({{"only", "alpha beta", "gamma delta"}}), "gamma", 1);
    const double worked = single.at(0).score;
    return check(mismatches == 0 && std::abs(worked - 0.287682) <= 1e-6,
                 std::to_string(mismatches) + " mismatches, worked score " + num(worked));
}

Outcome scoring_pipeline() {
    using namespace promptx;
    const std::string data = LDMX_DATA_DIR;
    const bool worked = combine_score(0.5, 0.8, 1, 1, {0.5, 0.1}) == 1.1;

    auto render = [&] {
        const auto docs = load_corpus(data + "/micro_corpus.jsonl");
        const auto tfidf = tfidf_fit(docs);
        const auto index = build_index(docs);
        const auto gaz = load_gazetteer(data + "/gazetteer.txt");
        const FixtureGenerator gen(load_fixtures(data + "/generator_fixtures.jsonl"));
        const Generator* gens[] = {&gen};
        std::ostringstream out;
        std::vector<PromptCandidate> all;
        for (const char* u : {"urbanization of China", "Asian morning", "mountain landscape"}) {
            for (const auto& c : extend_prompt(u, index, tfidf, HashedEmbedder(), gens, gaz, {{}, 20, 3})) {
                out << to_json(c).dump() << '\n';
                all.push_back(c);
            }
        }
        return std::make_pair(out.str(), all);
    };
    const auto [first, cands] = render();
    const auto [second, unused] = render();
    const bool deterministic = !first.empty() && first == second;

    bool monotone = true;
    const ScoreWeights w;
    for (const auto& c : cands) {
        const double s = combine_score(c.tfidf, c.cos, c.spatial_entities, c.temporal_entities, w);
        monotone = monotone && s == c.score;
        for (double d : {1e-6, 1e-3, 0.5}) {
            monotone = monotone && combine_score(c.tfidf + d, c.cos, c.spatial_entities, c.temporal_entities, w) > s;
            monotone = monotone && combine_score(c.tfidf, c.cos + d, c.spatial_entities, c.temporal_entities, w) > s;
        }
        monotone = monotone && combine_score(c.tfidf, c.cos, c.spatial_entities + 1, c.temporal_entities, w) > s;
        monotone = monotone && combine_score(c.tfidf, c.cos, c.spatial_entities, c.temporal_entities + 1, w) > s;
    }
    return check(worked && deterministic && monotone, std::string("worked ") + (worked ? "ok" : "off") +
                                                          ", deterministic " + (deterministic ? "yes" : "no") +
                                                          ", monotone " + (monotone ? "yes" : "no"));
}

Outcome wikiart_statistics() {
    const char* path = std::getenv("LDMX_WIKIART_METADATA");
    if (!path || !*path) return {Verdict::skip, "set LDMX_WIKIART_METADATA to a WikiArt metadata table"};
    const std::string p(path);
    const char delim = p.size() > 4 && p.substr(p.size() - 4) == ".tsv" ? '\t' : ',';
    const auto table = promptx::load_metadata(p, delim);
    const auto hist = promptx::artist_histogram(table.rows);
    const std::size_t top[] = {1889, 1860, 1400};
    bool ok = hist.size() >= 3;
    for (std::size_t i = 0; ok && i < 3; ++i) ok = hist[i].second == top[i];
    const std::pair<std::size_t, double> shares[] = {{10, 14.18}, {20, 21.80}, {30, 27.62}};
    std::string detail;
    for (const auto& [k, expect] : shares) {
        const double s = promptx::top_k_share(hist, k);
        ok = ok && std::abs(s - expect) <= 0.05;
        detail += "top" + std::to_string(k) + "=" + num(s) + "% ";
    }
    return check(ok, detail + "(" + std::to_string(table.rows.size()) + " rows)");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"forward marginal equivalence", forward_marginals},
        {"PLMS coefficient rows", plms_coefficients},
        {"ancestral/DDIM identity", ancestral_identity},
        {"oracle end-to-end sampling", oracle_sampling},
        {"convergence order", convergence_order},
        {"gradient fidelity", gradient_fidelity},
        {"toy ring mode coverage", ring_quality},
        {"autoencoder losses", autoencoder_losses},
        {"BM25/TF-IDF oracle equivalence", retrieval_equivalence},
        {"scoring pipeline", scoring_pipeline},
        {"WikiArt artist statistics", wikiart_statistics},
    };
    const double limits[] = {60, 0, 0, 300, 0, 0, 600, 0, 0, 0, 0};
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {Verdict::fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.verdict == Verdict::pass && limits[i] > 0 && secs > limits[i]) {
            o.verdict = Verdict::fail;
            o.detail += ", over the " + num(limits[i]) + " s budget";
        }
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        std::printf("criterion %2zu %s  %s: %s (%.1f s)\n", i + 1, tag, criteria[i].first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.verdict == Verdict::fail;
    }
    return failures == 0 ? 0 : 1;
}
