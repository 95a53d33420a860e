#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ldmx::promptx {

inline bool is_token_char(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

/// Lowercased runs of ASCII letters and digits; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (is_token_char(c)) {
            cur.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// Token sequence joined by single spaces; the key used for deduplication.
inline std::string normalize(std::string_view text) {
    std::string out;
    for (const auto& tok : tokenize(text)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

/// Splits after '.', '!' or '?' when followed by whitespace. Pieces are
/// trimmed; empty pieces are dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto push = [&](std::size_t end) {
        const auto piece = trim(text.substr(start, end - start));
        if (!piece.empty()) out.emplace_back(piece);
    };
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        const char c = text[i];
        const char n = text[i + 1];
        if ((c == '.' || c == '!' || c == '?') && (n == ' ' || n == '\t' || n == '\n' || n == '\r')) {
            push(i + 1);
            start = i + 1;
        }
    }
    if (start < text.size()) push(text.size());
    return out;
}

}  // namespace ldmx::promptx
