#pragma once

#include <cctype>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "menupred/errors.hpp"
#include "menupred/linalg.hpp"
#include "menupred/rng.hpp"

namespace menupred {

inline constexpr int kEmbeddingDim = 50;

inline std::string normalize_token(std::string_view raw) {
    std::size_t b = 0, e = raw.size();
    while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out(raw.substr(b, e - b));
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string> tokenize(std::string_view name) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : name) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) words.push_back(normalize_token(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(normalize_token(cur));
    return words;
}

/// token -> 50-dim vector. Lookups are case-insensitive after trimming.
/// Backed by an ordered map so every iteration over the table (checkpoint
/// serialization in particular) is deterministic.
struct EmbeddingTable {
    std::map<std::string, Vec> vectors;

    std::size_t size() const { return vectors.size(); }

    const Vec* find(std::string_view token) const {
        auto it = vectors.find(normalize_token(token));
        return it == vectors.end() ? nullptr : &it->second;
    }

    void insert(std::string_view token, Vec v) { vectors[normalize_token(token)] = std::move(v); }
};

/// Parses the common pretrained-vector text layout: one entry per line,
/// token followed by 50 whitespace-separated decimals. Duplicate tokens:
/// last one wins, with a warning.
inline EmbeddingTable load_embeddings(std::istream& in, std::ostream* warnings = nullptr) {
    EmbeddingTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) continue;  // blank line

        Vec v(kEmbeddingDim);
        for (int i = 0; i < kEmbeddingDim; ++i) {
            std::string field;
            if (!(fields >> field)) {
                throw ParseError("embeddings line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(kEmbeddingDim) + " values, got " +
                                 std::to_string(i));
            }
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec != std::errc() || ptr != field.data() + field.size()) {
                throw ParseError("embeddings line " + std::to_string(line_no) +
                                 ": non-numeric field '" + field + "'");
            }
            v[i] = value;
        }
        std::string extra;
        if (fields >> extra) {
            throw ParseError("embeddings line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kEmbeddingDim) + " values, found extra field '" +
                             extra + "'");
        }
        std::string key = normalize_token(token);
        if (warnings && table.vectors.count(key)) {
            *warnings << "warning: duplicate embedding token '" << key << "' at line " << line_no
                      << ", last one wins\n";
        }
        table.vectors[key] = std::move(v);
    }
    return table;
}

/// Deterministic stand-in table: a unit-norm 50-dim vector per distinct
/// token, derived from hash(token, seed). Lets the whole pipeline run with
/// no external download.
inline EmbeddingTable synth_embeddings(const std::vector<std::string>& names,
                                       std::uint64_t seed) {
    EmbeddingTable table;
    for (const std::string& name : names) {
        for (const std::string& token : tokenize(name)) {
            if (table.vectors.count(token)) continue;
            RngStream rng(seed, fnv1a64("embed:" + token));
            Vec v(kEmbeddingDim);
            for (int i = 0; i < kEmbeddingDim; ++i) v[i] = rng.normal();
            v /= v.norm();
            table.vectors[token] = std::move(v);
        }
    }
    return table;
}

/// Mean of per-word vectors; out-of-vocabulary words contribute zero.
inline Vec embed_name(std::string_view name, const EmbeddingTable& table) {
    Vec sum = Vec::Zero(kEmbeddingDim);
    std::vector<std::string> words = tokenize(name);
    if (words.empty()) return sum;
    for (const std::string& w : words) {
        if (const Vec* v = table.find(w)) sum += *v;
    }
    return sum / static_cast<double>(words.size());
}

}  // namespace menupred
