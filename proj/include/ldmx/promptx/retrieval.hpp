#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

struct Document {
    std::string id;
    std::string title;
    std::string body;

    /// Text the index sees: title followed by body.
    std::string indexed_text() const { return title + " " + body; }
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::size_t doc;
    std::size_t tf;
};

/// ln(1 + (N − df + 0.5)/(df + 0.5)).
inline double bm25_idf(std::size_t n_docs, std::size_t df) {
    const double N = static_cast<double>(n_docs), d = static_cast<double>(df);
    return std::log(1.0 + (N - d + 0.5) / (d + 0.5));
}

/// Saturated, length-normalized term weight.
inline double bm25_term(double idf, std::size_t tf, std::size_t dl, double avgdl, const Bm25Params& p) {
    const double f = static_cast<double>(tf);
    return idf * (f * (p.k1 + 1.0)) / (f + p.k1 * (1.0 - p.b + p.b * static_cast<double>(dl) / avgdl));
}

/// Unique query terms in ascending order; scores sum over them in this order.
inline std::vector<std::string> query_terms(std::string_view query) {
    const auto toks = tokenize(query);
    const std::set<std::string> uniq(toks.begin(), toks.end());
    return {uniq.begin(), uniq.end()};
}

class Bm25Index {
  public:
    Bm25Index() = default;

    Bm25Index(std::vector<Document> docs, Bm25Params params) : docs_(std::move(docs)), params_(params) {
        if (!(params_.k1 >= 0.0) || !(params_.b >= 0.0 && params_.b <= 1.0))
            throw ConfigError("bm25 parameters need k1 >= 0 and b in [0, 1]");
        std::set<std::string_view> ids;
        std::size_t total = 0;
        for (std::size_t d = 0; d < docs_.size(); ++d) {
            if (!ids.insert(docs_[d].id).second) throw ConfigError("duplicate document id '" + docs_[d].id + "'");
            if (docs_[d].title.empty()) throw ConfigError("document '" + docs_[d].id + "' has an empty title");
            std::map<std::string, std::size_t> tf;
            const auto toks = tokenize(docs_[d].indexed_text());
            for (const auto& t : toks) ++tf[t];
            for (const auto& [term, count] : tf) postings_[term].push_back({d, count});
            lengths_.push_back(toks.size());
            total += toks.size();
        }
        avgdl_ = docs_.empty() || total == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(docs_.size());
    }

    std::size_t size() const noexcept { return docs_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::vector<Document>& documents() const noexcept { return docs_; }
    std::size_t length(std::size_t doc) const { return lengths_.at(doc); }

    const std::vector<Posting>& postings(const std::string& term) const {
        static const std::vector<Posting> none;
        const auto it = postings_.find(term);
        return it == postings_.end() ? none : it->second;
    }
    std::size_t df(const std::string& term) const { return postings(term).size(); }
    std::size_t vocabulary_size() const noexcept { return postings_.size(); }

    /// Score of every document for `query`, indexed by document position.
    std::vector<double> score_all(std::string_view query) const {
        std::vector<double> scores(docs_.size(), 0.0);
        for (const auto& term : query_terms(query)) {
            const auto& plist = postings(term);
            if (plist.empty()) continue;
            const double idf = bm25_idf(docs_.size(), plist.size());
            for (const auto& p : plist) scores[p.doc] += bm25_term(idf, p.tf, lengths_[p.doc], avgdl_, params_);
        }
        return scores;
    }

  private:
    std::vector<Document> docs_;
    Bm25Params params_;
    std::vector<std::size_t> lengths_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline Bm25Index build_index(std::vector<Document> corpus, double k1 = 1.2, double b = 0.75) {
    return Bm25Index(std::move(corpus), {k1, b});
}

struct SearchHit {
    const Document* doc;
    double score;
};

/// Top-k documents, descending score, ties by ascending id.
inline std::vector<SearchHit> bm25_search(const Bm25Index& index, std::string_view query, std::size_t k) {
    if (k < 1) throw ConfigError("bm25_search: k must be >= 1");
    const auto scores = index.score_all(query);
    std::vector<SearchHit> hits;
    hits.reserve(scores.size());
    for (std::size_t d = 0; d < scores.size(); ++d) hits.push_back({&index.documents()[d], scores[d]});
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc->id < b.doc->id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

// ---------------------------------------------------------------------------
// TF-IDF fertility

class TfidfModel {
  public:
    TfidfModel() = default;

    /// idf(τ) = max(0, ln(N/(1 + df(τ)))) over the training texts.
    explicit TfidfModel(const std::vector<std::string>& corpus) : n_docs_(corpus.size()) {
        if (corpus.empty()) throw ConfigError("tfidf_fit: empty training corpus");
        std::map<std::string, std::size_t> df;
        for (const auto& text : corpus) {
            const auto toks = tokenize(text);
            for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
        }
        for (const auto& [term, d] : df) {
            df_[term] = d;
            idf_[term] = std::max(0.0, std::log(static_cast<double>(n_docs_) / (1.0 + static_cast<double>(d))));
        }
    }

    /// 0 for out-of-vocabulary terms.
    double idf(const std::string& term) const {
        const auto it = idf_.find(term);
        return it == idf_.end() ? 0.0 : it->second;
    }
    std::size_t df(const std::string& term) const {
        const auto it = df_.find(term);
        return it == df_.end() ? 0 : it->second;
    }
    std::size_t documents() const noexcept { return n_docs_; }
    std::size_t vocabulary_size() const noexcept { return idf_.size(); }

  private:
    std::size_t n_docs_ = 0;
    std::unordered_map<std::string, std::size_t> df_;
    std::unordered_map<std::string, double> idf_;
};

inline TfidfModel tfidf_fit(const std::vector<std::string>& corpus) { return TfidfModel(corpus); }

inline TfidfModel tfidf_fit(const std::vector<Document>& corpus) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& d : corpus) texts.push_back(d.indexed_text());
    return TfidfModel(texts);
}

/// Mean over token positions of (count/len)·idf. Empty text scores 0.
inline double tfidf_score(const TfidfModel& model, std::string_view text) {
    const auto toks = tokenize(text);
    if (toks.empty()) return 0.0;
    std::map<std::string, std::size_t> counts;
    for (const auto& t : toks) ++counts[t];
    const double len = static_cast<double>(toks.size());
    double sum = 0.0;
    for (const auto& t : toks) sum += (static_cast<double>(counts[t]) / len) * model.idf(t);
    return sum / len;
}

}  // namespace ldmx::promptx
