#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ldmx/error.hpp"
#include "ldmx/promptx/text.hpp"

namespace ldmx::promptx {

struct ArtworkMeta {
    std::string title;
    std::string artist;
    std::string style;
    std::string genre;
    std::optional<int> year;

    friend bool operator==(const ArtworkMeta&, const ArtworkMeta&) = default;
};

/// "<title>, a <genre> painting by <artist> in <style> style, <year>" with
/// missing fields dropped together with their connecting words.
inline std::string compose_caption(const ArtworkMeta& m) {
    if (trim(m.artist).empty()) throw ConfigError("compose_caption: artist is required");
    std::string out;
    if (!m.title.empty()) out += m.title + ", ";
    out += "a ";
    if (!m.genre.empty()) out += m.genre + " ";
    out += "painting by " + m.artist;
    if (!m.style.empty()) out += " in " + m.style + " style";
    if (m.year) out += ", " + std::to_string(*m.year);
    return out;
}

/// Inverse of compose_caption for fields free of the template's separators.
inline ArtworkMeta parse_caption(std::string_view caption) {
    ArtworkMeta m;
    std::string_view rest = caption;
    if (rest.rfind("a ", 0) != 0) {
        const auto pos = rest.find(", a ");
        if (pos == std::string_view::npos) throw FormatError("caption does not follow the template");
        m.title = std::string(rest.substr(0, pos));
        rest.remove_prefix(pos + 2);
    }
    rest.remove_prefix(2);  // "a "
    const auto by = rest.find("painting by ");
    if (by == std::string_view::npos) throw FormatError("caption does not follow the template");
    if (by > 0) m.genre = std::string(rest.substr(0, by - 1));
    rest.remove_prefix(by + 12);
    if (const auto comma = rest.rfind(", "); comma != std::string_view::npos) {
        int y = 0;
        const auto tail = rest.substr(comma + 2);
        const auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), y);
        if (ec == std::errc() && p == tail.data() + tail.size()) {
            m.year = y;
            rest = rest.substr(0, comma);
        }
    }
    if (rest.size() > 6 && rest.substr(rest.size() - 6) == " style") {
        const auto in = rest.rfind(" in ");
        if (in != std::string_view::npos) {
            m.style = std::string(rest.substr(in + 4, rest.size() - 6 - in - 4));
            rest = rest.substr(0, in);
        }
    }
    m.artist = std::string(rest);
    return m;
}

using ArtistCount = std::pair<std::string, std::size_t>;

/// Exact counts per artist, descending, ties by ascending name.
inline std::vector<ArtistCount> artist_histogram(std::span<const ArtworkMeta> metas) {
    std::map<std::string, std::size_t> counts;
    for (const auto& m : metas) ++counts[m.artist];
    std::vector<ArtistCount> out(counts.begin(), counts.end());
    std::stable_sort(out.begin(), out.end(), [](const ArtistCount& a, const ArtistCount& b) { return a.second > b.second; });
    return out;
}

/// Percentage of all works held by the k most frequent artists.
inline double top_k_share(std::span<const ArtistCount> histogram, std::size_t k) {
    std::size_t total = 0, top = 0;
    for (std::size_t i = 0; i < histogram.size(); ++i) {
        total += histogram[i].second;
        if (i < k) top += histogram[i].second;
    }
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(top) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Delimited metadata tables

/// Splits one record with double-quote escaping. Returns nullopt on an
/// unterminated quote.
inline std::optional<std::vector<std::string>> split_record(std::string_view line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) return std::nullopt;
    fields.push_back(std::move(cur));
    return fields;
}

struct MetadataTable {
    std::vector<ArtworkMeta> rows;
    std::size_t malformed = 0;
    std::vector<std::size_t> malformed_lines;  // 1-based
};

/// Header row names the columns (title, artist, style, genre, year; any
/// order, case-insensitive, extra columns ignored). Only `artist` is
/// required. Rows with the wrong field count, an empty artist or a
/// non-integer year are counted as malformed and skipped.
inline MetadataTable parse_metadata(std::istream& in, char delim = ',') {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("metadata table is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_record(line, delim);
    if (!header) throw FormatError("malformed metadata header");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header->size(); ++i) col[normalize((*header)[i])] = i;
    if (!col.count("artist")) throw FormatError("metadata header lacks an 'artist' column");
    auto field = [&](const std::vector<std::string>& rec, const char* name) -> std::string {
        const auto it = col.find(name);
        return it == col.end() ? std::string() : std::string(trim(rec[it->second]));
    };

    MetadataTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto rec = split_record(line, delim);
        auto bad = [&] {
            ++table.malformed;
            table.malformed_lines.push_back(lineno);
        };
        if (!rec || rec->size() != header->size()) {
            bad();
            continue;
        }
        ArtworkMeta m{field(*rec, "title"), field(*rec, "artist"), field(*rec, "style"), field(*rec, "genre"), {}};
        if (m.artist.empty()) {
            bad();
            continue;
        }
        const auto y = field(*rec, "year");
        if (!y.empty()) {
            int v = 0;
            const auto [p, ec] = std::from_chars(y.data(), y.data() + y.size(), v);
            if (ec != std::errc() || p != y.data() + y.size()) {
                bad();
                continue;
            }
            m.year = v;
        }
        table.rows.push_back(std::move(m));
    }
    return table;
}

inline MetadataTable load_metadata(const std::string& path, char delim = ',') {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata file '" + path + "'");
    return parse_metadata(in, delim);
}

}  // namespace ldmx::promptx
