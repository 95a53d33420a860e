#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldmx/error.hpp"
#include "ldmx/promptx/extend.hpp"
#include "ldmx/promptx/retrieval.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

namespace detail {

template <typename F>
void for_each_json_line(const std::string& path, const char* what, F&& f) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + " file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            f(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace detail

/// JSON Lines with string fields id, title and body.
inline std::vector<Document> load_corpus(const std::string& path) {
    std::vector<Document> docs;
    detail::for_each_json_line(path, "corpus", [&](const nlohmann::json& j) {
        docs.push_back({j.at("id").get<std::string>(), j.at("title").get<std::string>(),
                        j.value("body", std::string())});
    });
    return docs;
}

/// JSON Lines {"prompt": ..., "continuations": [...], "responses": [...]}.
inline std::vector<GeneratorFixture> load_fixtures(const std::string& path) {
    std::vector<GeneratorFixture> out;
    detail::for_each_json_line(path, "fixtures", [&](const nlohmann::json& j) {
        out.push_back({j.at("prompt").get<std::string>(),
                       j.value("continuations", std::vector<std::string>{}),
                       j.value("responses", std::vector<std::string>{})});
    });
    return out;
}

inline nlohmann::json to_json(const PromptCandidate& c) {
    return {{"text", c.text},
            {"source", to_string(c.source)},
            {"tfidf", c.tfidf},
            {"cos", c.cos},
            {"spatial_entities", c.spatial_entities},
            {"temporal_entities", c.temporal_entities},
            {"score", c.score}};
}

}  // namespace ldmx::promptx
