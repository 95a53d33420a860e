#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ldmx/promptx/embed.hpp"
#include "ldmx/promptx/entities.hpp"
#include "ldmx/promptx/extend.hpp"
#include "ldmx/promptx/io.hpp"
#include "ldmx/promptx/retrieval.hpp"
#include "ldmx/promptx/text.hpp"
#include "ldmx/promptx/wikiart.hpp"
#include "oracles.hpp"

using namespace ldmx;
using namespace ldmx::promptx;

namespace {

const std::string kData = LDMX_DATA_DIR;

std::vector<Document> three_docs() {
    return {{"a", "River city", "the river runs through the old city"},
            {"b", "Mountain", "snow on the mountain and the river below"},
            {"c", "Desert", "sand and wind"}};
}

class ScaledEmbedder final : public Embedder {
  public:
    explicit ScaledEmbedder(double k) : k_(k) {}
    std::vector<double> embed(std::string_view text) const override {
        auto v = base_.embed(text);
        for (auto& x : v) x *= k_;
        return v;
    }
    std::size_t width() const override { return base_.width(); }

  private:
    HashedEmbedder base_;
    double k_;
};

class EmptyGenerator final : public Generator {
  public:
    std::vector<std::string> continuations(std::string_view) const override { return {}; }
    std::vector<std::string> responses(std::string_view) const override { return {}; }
};

struct Bundle {
    std::vector<Document> docs = load_corpus(kData + "/micro_corpus.jsonl");
    TfidfModel tfidf = tfidf_fit(docs);
    Bm25Index index = build_index(docs);
    Gazetteer gazetteer = load_gazetteer(kData + "/gazetteer.txt");
    FixtureGenerator generator{load_fixtures(kData + "/generator_fixtures.jsonl")};
    HashedEmbedder embedder;
};

}  // namespace

TEST(Tokenize, Examples) {
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("Asian Morning"), (std::vector<std::string>{"asian", "morning"}));
    EXPECT_EQ(tokenize("left-behind children, 1980!"),
              (std::vector<std::string>{"left", "behind", "children", "1980"}));
    EXPECT_EQ(tokenize("  --  "), std::vector<std::string>{});
    EXPECT_EQ(normalize("  Hello,   World! "), "hello world");
}

TEST(SplitSentences, PunctuationFollowedByWhitespace) {
    EXPECT_EQ(split_sentences("One. Two! Three? Four"),
              (std::vector<std::string>{"One.", "Two!", "Three?", "Four"}));
    EXPECT_EQ(split_sentences("Version 1.5 is out."), (std::vector<std::string>{"Version 1.5 is out."}));
    EXPECT_TRUE(split_sentences("   ").empty());
}

TEST(Bm25Index, EmptyCorpus) {
    const auto index = build_index({});
    EXPECT_EQ(index.size(), 0u);
    EXPECT_EQ(index.avgdl(), 0.0);
    EXPECT_TRUE(bm25_search(index, "anything at all", 5).empty());
}

TEST(Bm25Index, SingleDocumentLength) {
    const auto index = build_index({{"x", "alpha beta", "gamma delta"}});
    EXPECT_EQ(index.avgdl(), 4.0);
    EXPECT_EQ(index.length(0), 4u);
}

TEST(Bm25Index, PostingsMatchRecount) {
    const auto docs = three_docs();
    const auto index = build_index(docs);
    std::set<std::string> vocab;
    for (const auto& d : docs)
        for (const auto& t : oracle::naive_tokens(d.title + " " + d.body)) vocab.insert(t);
    EXPECT_EQ(index.vocabulary_size(), vocab.size());
    for (const auto& term : vocab) {
        std::size_t df = 0;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            const auto toks = oracle::naive_tokens(docs[d].title + " " + docs[d].body);
            const auto tf = static_cast<std::size_t>(std::count(toks.begin(), toks.end(), term));
            if (tf == 0) continue;
            ++df;
            const auto& plist = index.postings(term);
            const auto it = std::find_if(plist.begin(), plist.end(), [&](const Posting& p) { return p.doc == d; });
            ASSERT_NE(it, plist.end()) << term;
            EXPECT_EQ(it->tf, tf) << term;
        }
        EXPECT_EQ(index.df(term), df) << term;
    }
}

TEST(Bm25Index, Errors) {
    EXPECT_THROW(build_index({{"a", "t", ""}, {"a", "u", ""}}), ConfigError);
    EXPECT_THROW(build_index({{"a", "", "body"}}), ConfigError);
    EXPECT_THROW(bm25_search(build_index(three_docs()), "river", 0), ConfigError);
}

TEST(Bm25Search, EmptyQueryScoresZero) {
    const auto index = build_index(three_docs());
    for (const auto& h : bm25_search(index, "", 10)) EXPECT_EQ(h.score, 0.0);
    const auto hits = bm25_search(index, "!!", 10);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].doc->id, "a");
    EXPECT_EQ(hits[2].doc->id, "c");
}

TEST(Bm25Search, WorkedSingleDocument) {
    const auto index = build_index({{"only", "alpha beta", "gamma delta"}});
    const auto hits = bm25_search(index, "gamma", 1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_NEAR(hits[0].score, std::log(1.0 + 0.5 / 1.5), 1e-15);
    EXPECT_NEAR(hits[0].score, 0.287682, 1e-6);
}

TEST(Bm25Search, BothTermsOutrankOne) {
    const std::vector<Document> docs{{"one", "t", "apple pie crust"}, {"two", "t", "apple berry crust"},
                                     {"zzz", "t", "plain old crust"}};
    const auto index = build_index(docs);
    const auto hits = bm25_search(index, "apple berry", 3);
    EXPECT_EQ(hits[0].doc->id, "two");
    EXPECT_EQ(hits[1].doc->id, "one");
    const auto brute = oracle::bm25_brute(docs, "apple berry");
    EXPECT_GT(brute[1], brute[0]);
    EXPECT_EQ(hits[0].score, brute[1]);
}

TEST(Bm25Search, TiesBreakByAscendingId) {
    const auto index = build_index({{"b", "same", "text"}, {"a", "same", "text"}, {"c", "other", "words"}});
    const auto hits = bm25_search(index, "same", 3);
    EXPECT_EQ(hits[0].doc->id, "a");
    EXPECT_EQ(hits[1].doc->id, "b");
    EXPECT_EQ(hits[0].score, hits[1].score);
}

TEST(Bm25Search, RandomCorporaMatchBruteForceExactly) {
    const char* words[] = {"sun", "moon", "river", "city", "old", "new", "red", "blue", "tree", "road", "1980", "x"};
    RngStream rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Document> docs(static_cast<std::size_t>(rng.uniform_int(1, 10)));
        for (std::size_t d = 0; d < docs.size(); ++d) {
            docs[d].id = "d" + std::to_string(d);
            docs[d].title = words[rng.uniform_int(0, 11)];
            const auto len = rng.uniform_int(0, 12);
            for (int w = 0; w < len; ++w) docs[d].body += std::string(words[rng.uniform_int(0, 11)]) + " ";
        }
        std::string query;
        for (int w = 0; w < rng.uniform_int(0, 4); ++w) query += std::string(words[rng.uniform_int(0, 11)]) + ",";
        const auto index = build_index(docs);
        const auto got = index.score_all(query);
        const auto ref = oracle::bm25_brute(docs, query);
        ASSERT_EQ(got.size(), ref.size());
        for (std::size_t d = 0; d < got.size(); ++d) EXPECT_EQ(got[d], ref[d]) << "trial " << trial;
    }
}

TEST(Tfidf, Examples) {
    const auto single = tfidf_fit(std::vector<std::string>{"red river valley"});
    EXPECT_EQ(tfidf_score(single, "unknown words only"), 0.0);
    EXPECT_EQ(tfidf_score(single, "red river valley"), oracle::tfidf_naive({"red river valley"}, "red river valley"));
    EXPECT_EQ(tfidf_score(single, ""), 0.0);
    EXPECT_THROW(tfidf_fit(std::vector<std::string>{}), ConfigError);

    const std::vector<std::string> corpus{"a b", "a c", "d e", "f g"};
    const auto m = tfidf_fit(corpus);
    const double expect = ((1.0 / 3.0) * std::log(4.0 / 3.0) + 2.0 * (2.0 / 3.0) * std::log(2.0)) / 3.0;
    EXPECT_NEAR(tfidf_score(m, "a b b"), expect, 1e-15);
    EXPECT_EQ(tfidf_score(m, "a b b"), oracle::tfidf_naive(corpus, "a b b"));
}

TEST(Tfidf, AddingDocumentLowersIdf) {
    std::vector<std::string> corpus{"tau x", "y", "z", "w", "v"};
    const double before = tfidf_fit(corpus).idf("tau");
    corpus.push_back("tau again");
    const double after = tfidf_fit(corpus).idf("tau");
    EXPECT_LT(after, before);
    for (const auto& t : {"x", "y", "tau", "again"}) EXPECT_GE(tfidf_fit(corpus).idf(t), 0.0);
}

TEST(Tfidf, RandomTextsMatchNaiveReference) {
    const char* words[] = {"a", "b", "c", "d", "e", "f"};
    RngStream rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> corpus(static_cast<std::size_t>(rng.uniform_int(1, 10)));
        for (auto& d : corpus)
            for (int w = 0; w < rng.uniform_int(1, 6); ++w) d += std::string(words[rng.uniform_int(0, 5)]) + " ";
        std::string text;
        for (int w = 0; w < rng.uniform_int(0, 8); ++w) text += std::string(words[rng.uniform_int(0, 5)]) + " ";
        EXPECT_EQ(tfidf_score(tfidf_fit(corpus), text), oracle::tfidf_naive(corpus, text));
    }
}

TEST(Cosine, Examples) {
    const std::vector<double> u{0.3, -1.2, 2.0};
    EXPECT_EQ(cosine(u, u), 1.0);
    EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 0.707107, 5e-7);
    EXPECT_EQ(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
    EXPECT_THROW(cosine(std::vector<double>{1}, std::vector<double>{1, 1}), ShapeError);
}

TEST(Cosine, ScaleInvariantEmbeddings) {
    const HashedEmbedder e;
    const ScaledEmbedder big(7.5);
    const std::string u = "urbanization of China";
    for (const auto* v : {"cities in China", "a cat", "urbanization of china", "Shenzhen skyline at night"})
        EXPECT_NEAR(cosine(e.embed(u), e.embed(v)), cosine(big.embed(u), big.embed(v)), 1e-15);
    EXPECT_EQ(e.embed("x y").size(), 64u);
    EXPECT_EQ(e.embed("Same text"), e.embed("same TEXT"));
}

TEST(Entities, Examples) {
    const Gazetteer g({"shenzhen"});
    EXPECT_EQ(entity_count("a cat", g), (EntityCounts{0, 0}));
    EXPECT_EQ(entity_count("Shenzhen in 1980", g), (EntityCounts{1, 1}));
    const Gazetteer plateau({"qinghai tibet plateau", "tibet"});
    EXPECT_EQ(entity_count("Qinghai-Tibet Plateau at 7:30 in March", plateau), (EntityCounts{1, 2}));
    EXPECT_EQ(count_places("Tibet and Qinghai-Tibet Plateau", plateau), 2u);
    EXPECT_EQ(count_temporal("on the 3rd of May, in may we met at 23:59 in 3000"), 3u);
}

TEST(Entities, GazetteerFile) {
    const auto g = load_gazetteer(kData + "/gazetteer.txt");
    EXPECT_GT(g.size(), 10u);
    EXPECT_EQ(count_places("Hong Kong and the Pearl River Delta", g), 2u);
    EXPECT_THROW(load_gazetteer(kData + "/does-not-exist.txt"), IoError);
}

TEST(ScoreCandidate, WorkedCombination) {
    EXPECT_EQ(combine_score(0.5, 0.8, 1, 1, {0.5, 0.1}), 1.1);
    PromptCandidate c{"t", CandidateSource::wiki_sentence, 0.5, 0.8, 1, 1, 1.1};
    EXPECT_EQ(c.importance(0.5), 0.9);
}

TEST(ScoreCandidate, Reductions) {
    const Bundle b;
    const auto c = score_candidate("mountain painting", "ink and brushwork", b.tfidf, b.embedder, {0.0, 0.1}, b.gazetteer);
    EXPECT_EQ(c.spatial_entities + c.temporal_entities, 0u);
    EXPECT_EQ(c.score, c.tfidf);

    const std::string u = "urbanization of China";
    const auto self = score_candidate(u, u, b.tfidf, b.embedder, {0.75, 0.0}, b.gazetteer);
    EXPECT_EQ(self.cos, 1.0);
    EXPECT_EQ(self.score, self.tfidf + 0.75);
    EXPECT_THROW(score_candidate(u, u, b.tfidf, b.embedder, {-1.0, 0.0}, b.gazetteer), ConfigError);
}

TEST(ScoreCandidate, MonotoneInComponents) {
    const ScoreWeights w{0.7, 0.2};
    RngStream rng(3);
    for (int i = 0; i < 200; ++i) {
        const double tf = rng.uniform(), cs = 2 * rng.uniform() - 1, d = rng.uniform();
        const auto sp = static_cast<std::size_t>(rng.uniform_int(0, 3));
        const auto tm = static_cast<std::size_t>(rng.uniform_int(0, 3));
        const double base = combine_score(tf, cs, sp, tm, w);
        EXPECT_GE(combine_score(tf + d, cs, sp, tm, w), base);
        EXPECT_GE(combine_score(tf, cs + d, sp, tm, w), base);
        EXPECT_GE(combine_score(tf, cs, sp + 1, tm, w), base);
        EXPECT_GE(combine_score(tf, cs, sp, tm + 1, w), base);
    }
}

TEST(ExtendPrompt, EmptyInputsGiveEmptyList) {
    const auto index = build_index({});
    const TfidfModel tfidf;
    const EmptyGenerator gen;
    const Generator* gens[] = {&gen};
    const auto out = extend_prompt("anything", index, tfidf, HashedEmbedder(), gens, Gazetteer(), {});
    EXPECT_TRUE(out.empty());
}

TEST(ExtendPrompt, RelevantSentenceAppearsWithPositiveScore) {
    const std::vector<Document> docs{{"r", "Harbor", "The harbor lights shine over the bay. Cats sleep."},
                                     {"s", "Unrelated", "Nothing here matches."}};
    const auto index = build_index(docs);
    const auto tfidf = tfidf_fit(docs);
    const HashedEmbedder emb;
    const Gazetteer g;
    const std::span<const Generator* const> none;
    const std::string u = "harbor lights";
    const auto out = extend_prompt(u, index, tfidf, emb, none, g, {{}, 50, 3});
    const auto it = std::find_if(out.begin(), out.end(),
                                 [](const PromptCandidate& c) { return c.text == "The harbor lights shine over the bay."; });
    ASSERT_NE(it, out.end());
    EXPECT_GT(it->score, 0.0);
    // Brute force over the pool: every sentence of a matching document, scored directly.
    std::vector<PromptCandidate> brute;
    for (const auto& s : split_sentences(docs[0].body)) brute.push_back(score_candidate(u, s, tfidf, emb, {}, g));
    std::sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
        return a.score != b.score ? a.score > b.score : a.text < b.text;
    });
    EXPECT_EQ(out, brute);
}

TEST(ExtendPrompt, MicroCorpusRankingIsDeterministicAndOrderFree) {
    const Bundle b;
    const Generator* gens[] = {&b.generator};
    const std::string u = "urbanization of China";
    const ExtendConfig cfg{{}, 100, 3};
    const auto a = extend_prompt(u, b.index, b.tfidf, b.embedder, gens, b.gazetteer, cfg);
    const auto again = extend_prompt(u, b.index, b.tfidf, b.embedder, gens, b.gazetteer, cfg);
    EXPECT_EQ(a, again);
    ASSERT_FALSE(a.empty());
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_GE(a[i - 1].score, a[i].score);
    for (const auto& c : a)
        EXPECT_EQ(c.score, combine_score(c.tfidf, c.cos, c.spatial_entities, c.temporal_entities, cfg.weights));

    auto pool = candidate_pool(u, b.index, gens, cfg.retrieval_depth);
    pool.push_back(pool.front());  // duplicate
    RngStream rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        for (std::size_t i = pool.size() - 1; i > 0; --i)
            std::swap(pool[i], pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        EXPECT_EQ(rank_candidates(u, pool, b.tfidf, b.embedder, b.gazetteer, cfg.weights, cfg.top_k), a);
    }
    EXPECT_EQ(extend_prompt(u, b.index, b.tfidf, b.embedder, gens, b.gazetteer, {{}, 1, 3}).size(), 1u);
    EXPECT_THROW(extend_prompt(u, b.index, b.tfidf, b.embedder, gens, b.gazetteer, {{}, 0, 3}), ConfigError);
}

TEST(ExtendPrompt, EmbedderScaleDoesNotChangeRanking) {
    const Bundle b;
    const Generator* gens[] = {&b.generator};
    const ScaledEmbedder scaled(3.0);
    const auto a = extend_prompt("Asian morning", b.index, b.tfidf, b.embedder, gens, b.gazetteer, {{}, 20, 3});
    const auto c = extend_prompt("Asian morning", b.index, b.tfidf, scaled, gens, b.gazetteer, {{}, 20, 3});
    ASSERT_EQ(a.size(), c.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, c[i].text);
}

TEST(FixtureGenerator, LookupAndSeededRotation) {
    const std::vector<GeneratorFixture> fx{{"Hello World", {"a", "b", "c"}, {"r"}}};
    const FixtureGenerator g(fx);
    EXPECT_EQ(g.continuations("hello,  world"), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(g.responses("HELLO WORLD"), std::vector<std::string>{"r"});
    EXPECT_TRUE(g.continuations("other").empty());
    const FixtureGenerator s1(fx, 42), s2(fx, 42);
    EXPECT_EQ(s1.continuations("hello world"), s2.continuations("hello world"));
    auto rotated = s1.continuations("hello world");
    std::sort(rotated.begin(), rotated.end());
    EXPECT_EQ(rotated, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Io, BundledFilesLoad) {
    const auto docs = load_corpus(kData + "/micro_corpus.jsonl");
    EXPECT_GE(docs.size(), 10u);
    EXPECT_NO_THROW(build_index(docs));
    const auto fx = load_fixtures(kData + "/generator_fixtures.jsonl");
    EXPECT_EQ(fx.size(), 3u);
    EXPECT_THROW(load_corpus(kData + "/missing.jsonl"), IoError);

    const auto path = std::filesystem::temp_directory_path() / "ldmx_bad_corpus.jsonl";
    {
        std::ofstream f(path);
        f << "{\"id\": \"a\", \"title\": \"t\"}\n{not json}\n";
    }
    EXPECT_THROW(load_corpus(path.string()), FormatError);
    std::filesystem::remove(path);

    const PromptCandidate c{"x", CandidateSource::generator_response, 0.25, 0.5, 1, 2, 1.0};
    const auto j = to_json(c);
    EXPECT_EQ(j.at("source"), "generator-response");
    EXPECT_EQ(j.at("temporal_entities"), 2);
}

TEST(Caption, Examples) {
    const ArtworkMeta full{"Starry Night", "Vincent van Gogh", "Post-Impressionism", "landscape", 1889};
    EXPECT_EQ(compose_caption(full),
              "Starry Night, a landscape painting by Vincent van Gogh in Post-Impressionism style, 1889");
    auto no_year = full;
    no_year.year.reset();
    EXPECT_EQ(compose_caption(no_year),
              "Starry Night, a landscape painting by Vincent van Gogh in Post-Impressionism style");
    const ArtworkMeta bare{"Starry Night", "Vincent van Gogh", "", "", std::nullopt};
    EXPECT_EQ(compose_caption(bare), "Starry Night, a painting by Vincent van Gogh");
    EXPECT_THROW(compose_caption({"t", "", "s", "g", 1900}), ConfigError);
}

TEST(Caption, RoundTripIsInjective) {
    const std::vector<std::string> titles{"", "Irises", "Night Cafe"}, artists{"Vincent van Gogh", "Roerich"},
        styles{"", "Symbolism"}, genres{"", "landscape", "genre painting"};
    const std::vector<std::optional<int>> years{std::nullopt, 1889, 1933};
    std::set<std::string> captions;
    std::size_t n = 0;
    for (const auto& t : titles)
        for (const auto& a : artists)
            for (const auto& s : styles)
                for (const auto& g : genres)
                    for (const auto& y : years) {
                        const ArtworkMeta m{t, a, s, g, y};
                        const auto cap = compose_caption(m);
                        EXPECT_EQ(parse_caption(cap), m) << cap;
                        captions.insert(cap);
                        ++n;
                    }
    EXPECT_EQ(captions.size(), n);
}

TEST(ArtistHistogram, Examples) {
    EXPECT_TRUE(artist_histogram(std::vector<ArtworkMeta>{}).empty());
    const std::vector<ArtworkMeta> m{{"", "a", "", "", {}}, {"", "b", "", "", {}}, {"", "a", "", "", {}}};
    const auto h = artist_histogram(m);
    EXPECT_EQ(h, (std::vector<ArtistCount>{{"a", 2}, {"b", 1}}));
    EXPECT_NEAR(top_k_share(h, 1), 200.0 / 3.0, 1e-12);
    EXPECT_EQ(top_k_share(h, 10), 100.0);
    const std::vector<ArtworkMeta> one{{"", "solo", "", "", {}}, {"", "solo", "", "", {}}};
    EXPECT_EQ(top_k_share(artist_histogram(one), 1), 100.0);
    const std::vector<ArtworkMeta> tie{{"", "z", "", "", {}}, {"", "y", "", "", {}}};
    EXPECT_EQ(artist_histogram(tie)[0].first, "y");
}

TEST(Metadata, ToyTableHandTally) {
    const auto t = load_metadata(kData + "/wikiart_toy.csv");
    EXPECT_EQ(t.rows.size(), 10u);
    EXPECT_EQ(t.malformed, 0u);
    const auto h = artist_histogram(t.rows);
    EXPECT_EQ(h, (std::vector<ArtistCount>{{"Vincent van Gogh", 4}, {"Nicholas Roerich", 3}, {"Pierre Auguste Renoir", 3}}));
    EXPECT_EQ(t.rows[9].title, "Girls at the Piano");
    EXPECT_EQ(t.rows[0].year, 1889);
}

TEST(Metadata, MalformedRowsAreCountedNotFatal) {
    std::istringstream in(
        "Artist\tYear\tTitle\n"
        "A\t1900\tOne\n"
        "B\tnineteen\tTwo\n"
        "\t1901\tThree\n"
        "C\t1902\n"
        "D\t\t\"Quoted\ttab\"\n");
    const auto t = parse_metadata(in, '\t');
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[1].title, "Quoted\ttab");
    EXPECT_FALSE(t.rows[1].year.has_value());
    EXPECT_EQ(t.malformed, 3u);
    EXPECT_EQ(t.malformed_lines, (std::vector<std::size_t>{3, 4, 5}));

    std::istringstream no_artist("title,year\nx,1\n");
    EXPECT_THROW(parse_metadata(no_artist), FormatError);
    std::istringstream empty("");
    EXPECT_THROW(parse_metadata(empty), FormatError);
}
