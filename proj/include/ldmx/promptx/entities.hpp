#pragma once

#include <algorithm>
#include <fstream>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

/// Place names stored as token sequences.
class Gazetteer {
  public:
    Gazetteer() = default;

    explicit Gazetteer(const std::vector<std::string>& names) {
        for (const auto& n : names) add(n);
    }

    void add(std::string_view name) {
        auto toks = tokenize(name);
        if (toks.empty()) return;
        max_len_ = std::max(max_len_, toks.size());
        phrases_.push_back(std::move(toks));
        std::sort(phrases_.begin(), phrases_.end());
        phrases_.erase(std::unique(phrases_.begin(), phrases_.end()), phrases_.end());
    }

    bool contains(std::span<const std::string> phrase) const {
        return std::binary_search(phrases_.begin(), phrases_.end(), phrase,
                                  [](const auto& a, const auto& b) {
                                      return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
                                  });
    }

    std::size_t size() const noexcept { return phrases_.size(); }
    std::size_t max_phrase_length() const noexcept { return max_len_; }

  private:
    std::vector<std::vector<std::string>> phrases_;
    std::size_t max_len_ = 0;
};

/// One place name per line; blank lines and lines starting with '#' are skipped.
inline Gazetteer load_gazetteer(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open gazetteer file '" + path + "'");
    Gazetteer g;
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        g.add(t);
    }
    return g;
}

struct EntityCounts {
    std::size_t spatial = 0;
    std::size_t temporal = 0;

    std::size_t total() const noexcept { return spatial + temporal; }
    friend bool operator==(const EntityCounts&, const EntityCounts&) = default;
};

/// Greedy left-to-right longest match over the text's tokens, non-overlapping.
inline std::size_t count_places(std::string_view text, const Gazetteer& gazetteer) {
    const auto toks = tokenize(text);
    std::size_t count = 0;
    std::size_t i = 0;
    while (i < toks.size()) {
        std::size_t matched = 0;
        const std::size_t longest = std::min(gazetteer.max_phrase_length(), toks.size() - i);
        for (std::size_t len = longest; len >= 1; --len) {
            if (gazetteer.contains(std::span<const std::string>(toks).subspan(i, len))) {
                matched = len;
                break;
            }
        }
        if (matched > 0) {
            ++count;
            i += matched;
        } else {
            ++i;
        }
    }
    return count;
}

namespace detail {

// Years 1000-2999, month names, clock times and ordinal days. "May" only
// counts when capitalized.
inline const std::regex& temporal_pattern() {
    static const std::regex re(
        R"(\b(?:[12][0-9]{3}|(?:[01]?[0-9]|2[0-3]):[0-5][0-9]|(?:[1-9]|[12][0-9]|3[01])(?:st|nd|rd|th)|)"
        R"([Jj]anuary|[Ff]ebruary|[Mm]arch|[Aa]pril|May|[Jj]une|[Jj]uly|[Aa]ugust|[Ss]eptember|[Oo]ctober|)"
        R"([Nn]ovember|[Dd]ecember)\b)",
        std::regex::ECMAScript | std::regex::optimize);
    return re;
}

}  // namespace detail

inline std::size_t count_temporal(std::string_view text) {
    const std::string s(text);
    return static_cast<std::size_t>(
        std::distance(std::sregex_iterator(s.begin(), s.end(), detail::temporal_pattern()), std::sregex_iterator()));
}

inline EntityCounts entity_count(std::string_view text, const Gazetteer& gazetteer) {
    return {count_places(text, gazetteer), count_temporal(text)};
}

}  // namespace ldmx::promptx
