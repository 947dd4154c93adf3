// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "geovlp/formats.h"

namespace geovlp {

/// A noun phrase lifted out of a dependency parse.
struct ExtractedPhrase {
    std::string text;     // surface casing, tokens joined by single spaces
    int head_index = 0;   // 1-based token index of the head noun
    std::vector<int> modifier_indices;

    /// Lowercased form used for lookups and matching.
    std::string key() const;

    bool operator==(const ExtractedPhrase&) const = default;
};

bool is_noun(const ParseToken& token);

/// Head noun of a caption (the root, or the nearest noun below a non-noun root)
/// composed with its directly attached amod/compound modifiers.
ExtractedPhrase extract_concept_name(std::span<const ParseToken> parse);

/// Category phrase of a definitional first sentence. Copular definitions use the
/// predicate nominal as the head.
ExtractedPhrase extract_category(std::span<const ParseToken> first_sentence_parse);

struct WikiPage {
    std::string concept_name;
    std::vector<ParseToken> first_sentence;
    std::string full_text;
};

/// One VisualConcept per page whose category can be mined. Pages that fail are
/// skipped with a warning in `diag`. Knowledge is truncated to
/// `knowledge_token_budget` whitespace tokens.
std::vector<VisualConcept> build_knowledge_base(std::span<const WikiPage> pages,
                                                std::size_t knowledge_token_budget = 64,
                                                Diagnostics* diag = nullptr);

}  // namespace geovlp
