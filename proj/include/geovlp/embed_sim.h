// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mean-pooled phrase embeddings and cosine similarity between category names.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geovlp/formats.h"

namespace geovlp {

struct PhraseVector {
    std::vector<double> vector;
    double coverage = 0.0;  // fraction of phrase words found in the table
};

/// Lowercase, split on whitespace and hyphens.
std::vector<std::string> phrase_words(std::string_view phrase);

/// Mean of the in-vocabulary word vectors. An all-OOV phrase yields the zero
/// vector with coverage 0. Throws EmptyPhrase when there are no words.
PhraseVector phrase_embedding(std::string_view phrase, const EmbeddingTable& table);

/// dot(a,b)/(|a||b|); 0 when either norm is 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const PhraseVector& a, const PhraseVector& b) {
    return cosine_similarity(a.vector, b.vector);
}

/// Cosine similarity between two phrases' pooled embeddings.
double phrase_similarity(std::string_view a, std::string_view b, const EmbeddingTable& table);

struct RankedCandidate {
    std::size_t index;
    double score;
};

/// Candidates ordered by category similarity to `target`, descending; equal
/// scores keep input order.
std::vector<RankedCandidate> rank_by_category_similarity(const VisualConcept& target,
                                                         std::span<const VisualConcept> candidates,
                                                         const EmbeddingTable& table);

}  // namespace geovlp
