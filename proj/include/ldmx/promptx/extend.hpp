#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/numerics.hpp"
#include "ldmx/promptx/embed.hpp"
#include "ldmx/promptx/entities.hpp"
#include "ldmx/promptx/retrieval.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

enum class CandidateSource { wiki_sentence, generator_continuation, generator_response };

inline std::string to_string(CandidateSource s) {
    switch (s) {
        case CandidateSource::wiki_sentence: return "wiki-sentence";
        case CandidateSource::generator_continuation: return "generator-continuation";
        case CandidateSource::generator_response: return "generator-response";
    }
    return "unknown";
}

struct PromptCandidate {
    std::string text;
    CandidateSource source = CandidateSource::wiki_sentence;
    double tfidf = 0.0;
    double cos = 0.0;
    std::size_t spatial_entities = 0;
    std::size_t temporal_entities = 0;
    double score = 0.0;

    /// The two-term importance tfidf + λ1·cos, without the entity bonus.
    double importance(double lambda1) const { return tfidf + lambda1 * cos; }

    friend bool operator==(const PromptCandidate&, const PromptCandidate&) = default;
};

struct ScoreWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.1;

    void validate() const {
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be >= 0");
    }
};

/// tfidf + λ1·cos + λ2·(spatial + temporal).
inline double combine_score(double tfidf, double cos, std::size_t spatial, std::size_t temporal,
                            const ScoreWeights& w) {
    return tfidf + w.lambda1 * cos + w.lambda2 * static_cast<double>(spatial + temporal);
}

inline PromptCandidate score_candidate(std::string_view u, std::string_view v, const TfidfModel& tfidf,
                                       const Embedder& embedder, const ScoreWeights& weights,
                                       const Gazetteer& gazetteer,
                                       CandidateSource source = CandidateSource::wiki_sentence) {
    weights.validate();
    PromptCandidate c;
    c.text = std::string(v);
    c.source = source;
    c.tfidf = tfidf_score(tfidf, v);
    c.cos = cosine(embedder.embed(u), embedder.embed(v));
    const auto ents = entity_count(v, gazetteer);
    c.spatial_entities = ents.spatial;
    c.temporal_entities = ents.temporal;
    c.score = combine_score(c.tfidf, c.cos, c.spatial_entities, c.temporal_entities, weights);
    return c;
}

// ---------------------------------------------------------------------------
// Generators

class Generator {
  public:
    virtual ~Generator() = default;
    virtual std::vector<std::string> continuations(std::string_view prompt) const = 0;
    virtual std::vector<std::string> responses(std::string_view prompt) const = 0;
};

struct GeneratorFixture {
    std::string prompt;
    std::vector<std::string> continuations;
    std::vector<std::string> responses;
};

/// Canned outputs keyed by the normalized prompt. A nonzero seed rotates
/// each output list by a seed-derived offset.
class FixtureGenerator final : public Generator {
  public:
    FixtureGenerator() = default;

    explicit FixtureGenerator(const std::vector<GeneratorFixture>& fixtures, std::uint64_t seed = 0) : seed_(seed) {
        for (const auto& f : fixtures) {
            auto& slot = table_[normalize(f.prompt)];
            slot.continuations.insert(slot.continuations.end(), f.continuations.begin(), f.continuations.end());
            slot.responses.insert(slot.responses.end(), f.responses.begin(), f.responses.end());
        }
    }

    std::vector<std::string> continuations(std::string_view prompt) const override {
        return lookup(prompt, &GeneratorFixture::continuations);
    }
    std::vector<std::string> responses(std::string_view prompt) const override {
        return lookup(prompt, &GeneratorFixture::responses);
    }

  private:
    std::vector<std::string> lookup(std::string_view prompt, std::vector<std::string> GeneratorFixture::*field) const {
        const auto it = table_.find(normalize(prompt));
        if (it == table_.end()) return {};
        auto out = it->second.*field;
        if (seed_ != 0 && !out.empty()) {
            const auto shift = ldmx::detail::mix64(seed_ ^ ldmx::detail::fnv1a64(it->first)) % out.size();
            std::rotate(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(shift), out.end());
        }
        return out;
    }

    std::map<std::string, GeneratorFixture> table_;
    std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// Pipeline

struct ExtendConfig {
    ScoreWeights weights;
    std::size_t top_k = 5;
    std::size_t retrieval_depth = 3;  // BM25 documents mined for sentences
};

/// Retrieval sentences plus generator outputs, before scoring.
inline std::vector<std::pair<std::string, CandidateSource>> candidate_pool(
    std::string_view u, const Bm25Index& index, std::span<const Generator* const> generators,
    std::size_t retrieval_depth) {
    std::vector<std::pair<std::string, CandidateSource>> pool;
    if (index.size() > 0 && retrieval_depth > 0) {
        for (const auto& hit : bm25_search(index, u, retrieval_depth)) {
            if (!(hit.score > 0.0)) continue;
            for (auto& s : split_sentences(hit.doc->body)) pool.emplace_back(std::move(s), CandidateSource::wiki_sentence);
        }
    }
    for (const Generator* g : generators) {
        if (g == nullptr) continue;
        for (auto& s : g->continuations(u)) pool.emplace_back(std::move(s), CandidateSource::generator_continuation);
        for (auto& s : g->responses(u)) pool.emplace_back(std::move(s), CandidateSource::generator_response);
    }
    return pool;
}

/// Scores, deduplicates on normalized text and ranks a pool: descending
/// score, ties by ascending text. Among duplicates the smallest (text, source)
/// survives, so the result does not depend on pool order.
inline std::vector<PromptCandidate> rank_candidates(std::string_view u,
                                                    std::vector<std::pair<std::string, CandidateSource>> pool,
                                                    const TfidfModel& tfidf, const Embedder& embedder,
                                                    const Gazetteer& gazetteer, const ScoreWeights& weights,
                                                    std::size_t k) {
    if (k < 1) throw ConfigError("extend_prompt: k must be >= 1");
    weights.validate();
    std::sort(pool.begin(), pool.end());
    std::map<std::string, std::size_t> seen;
    std::vector<PromptCandidate> ranked;
    for (auto& [text, source] : pool) {
        auto key = normalize(text);
        if (key.empty() || !seen.emplace(std::move(key), ranked.size()).second) continue;
        ranked.push_back(score_candidate(u, text, tfidf, embedder, weights, gazetteer, source));
    }
    std::sort(ranked.begin(), ranked.end(), [](const PromptCandidate& a, const PromptCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.text < b.text;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

inline std::vector<PromptCandidate> extend_prompt(std::string_view u, const Bm25Index& index,
                                                  const TfidfModel& tfidf, const Embedder& embedder,
                                                  std::span<const Generator* const> generators,
                                                  const Gazetteer& gazetteer, const ExtendConfig& config) {
    return rank_candidates(u, candidate_pool(u, index, generators, config.retrieval_depth), tfidf, embedder,
                           gazetteer, config.weights, config.top_k);
}

}  // namespace ldmx::promptx
