// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/embed_sim.h"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "geovlp/error.h"

namespace geovlp {

std::vector<std::string> phrase_words(std::string_view phrase) {
    std::vector<std::string> words;
    std::string current;
    for (const char ch : phrase) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || c == '-') {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

PhraseVector phrase_embedding(std::string_view phrase, const EmbeddingTable& table) {
    const auto words = phrase_words(phrase);
    if (words.empty()) {
        throw Error(ErrorKind::empty_phrase, "phrase '" + std::string(phrase) + "' has no words");
    }
    PhraseVector out;
    out.vector.assign(table.dimension(), 0.0);
    std::size_t found = 0;
    for (const std::string& w : words) {
        const float* v = table.find(w);
        if (v == nullptr) {
            continue;
        }
        ++found;
        for (std::size_t d = 0; d < table.dimension(); ++d) {
            out.vector[d] += static_cast<double>(v[d]);
        }
    }
    if (found > 0) {
        for (double& x : out.vector) {
            x /= static_cast<double>(found);
        }
    }
    out.coverage = static_cast<double>(found) / static_cast<double>(words.size());
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::dimension_mismatch, "cosine similarity of vectors with dimensions " +
                                                       std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double phrase_similarity(std::string_view a, std::string_view b, const EmbeddingTable& table) {
    return cosine_similarity(phrase_embedding(a, table), phrase_embedding(b, table));
}

std::vector<RankedCandidate> rank_by_category_similarity(const VisualConcept& target,
                                                         std::span<const VisualConcept> candidates,
                                                         const EmbeddingTable& table) {
    if (candidates.empty()) {
        throw Error(ErrorKind::empty_pool, "no candidates to rank");
    }
    const PhraseVector anchor = phrase_embedding(target.category, table);
    std::vector<RankedCandidate> ranked;
    ranked.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        ranked.push_back({i, cosine_similarity(anchor, phrase_embedding(candidates[i].category, table))});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedCandidate& x, const RankedCandidate& y) { return x.score > y.score; });
    return ranked;
}

}  // namespace geovlp
