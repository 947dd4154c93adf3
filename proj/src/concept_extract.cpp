// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/concept_extract.h"

#include <algorithm>
#include <cctype>
#include <deque>
#include <sstream>

#include "geovlp/error.h"

namespace geovlp {

namespace {

std::string_view base_relation(std::string_view deprel) {
    return deprel.substr(0, deprel.find(':'));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_copula_verb(const ParseToken& t) {
    static constexpr std::string_view kForms[] = {"is", "are", "was", "were", "be", "been", "being", "'s"};
    const std::string form = lower(t.surface);
    return t.upos == "AUX" || std::find(std::begin(kForms), std::end(kForms), form) != std::end(kForms);
}

const ParseToken& root_of(std::span<const ParseToken> parse) {
    const auto it = std::find_if(parse.begin(), parse.end(), [](const ParseToken& t) { return t.head == 0; });
    if (it == parse.end()) {
        throw Error(ErrorKind::multiple_roots, "parse has no root");
    }
    return *it;
}

// Children of `head` in surface order.
std::vector<int> children(std::span<const ParseToken> parse, int head) {
    std::vector<int> out;
    for (const ParseToken& t : parse) {
        if (t.head == head) {
            out.push_back(t.index);
        }
    }
    return out;
}

int nearest_noun_below(std::span<const ParseToken> parse, int start) {
    std::deque<int> frontier{start};
    while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.pop_front();
        for (const int child : children(parse, node)) {
            if (is_noun(parse[child - 1])) {
                return child;
            }
            frontier.push_back(child);
        }
    }
    return 0;
}

ExtractedPhrase compose(std::span<const ParseToken> parse, int head) {
    ExtractedPhrase phrase;
    phrase.head_index = head;
    for (const int child : children(parse, head)) {
        const ParseToken& t = parse[child - 1];
        const auto rel = base_relation(t.deprel);
        if ((rel == "amod" || rel == "compound") && t.upos != "DET" && t.upos != "NUM") {
            phrase.modifier_indices.push_back(child);
        }
    }
    std::vector<int> used = phrase.modifier_indices;
    used.push_back(head);
    std::sort(used.begin(), used.end());
    for (const int i : used) {
        if (!phrase.text.empty()) {
            phrase.text += ' ';
        }
        phrase.text += parse[i - 1].surface;
    }
    return phrase;
}

void require_root(std::span<const ParseToken> parse) {
    const auto roots = std::count_if(parse.begin(), parse.end(), [](const ParseToken& t) { return t.head == 0; });
    if (roots != 1) {
        throw Error(ErrorKind::multiple_roots, "expected a single-root parse, found " + std::to_string(roots) + " roots");
    }
}

}  // namespace

std::string ExtractedPhrase::key() const { return lower(text); }

bool is_noun(const ParseToken& token) { return token.upos == "NOUN" || token.upos == "PROPN"; }

ExtractedPhrase extract_concept_name(std::span<const ParseToken> parse) {
    require_root(parse);
    const ParseToken& root = root_of(parse);
    const int head = is_noun(root) ? root.index : nearest_noun_below(parse, root.index);
    if (head == 0) {
        throw Error(ErrorKind::no_noun_found, "no noun reachable from the root");
    }
    return compose(parse, head);
}

ExtractedPhrase extract_category(std::span<const ParseToken> parse) {
    require_root(parse);
    const ParseToken& root = root_of(parse);
    int head = 0;
    if (is_noun(root)) {
        head = root.index;
    } else if (is_copula_verb(root)) {
        // Parsers that make the copula the root attach the predicate nominal as attr/xcomp.
        for (const int child : children(parse, root.index)) {
            const auto rel = base_relation(parse[child - 1].deprel);
            if ((rel == "attr" || rel == "xcomp") && is_noun(parse[child - 1])) {
                head = child;
                break;
            }
        }
    }
    if (head == 0) {
        head = nearest_noun_below(parse, root.index);
    }
    if (head == 0) {
        throw Error(ErrorKind::no_noun_found, "no noun reachable from the root");
    }
    return compose(parse, head);
}

std::vector<VisualConcept> build_knowledge_base(std::span<const WikiPage> pages,
                                                std::size_t knowledge_token_budget, Diagnostics* diag) {
    std::vector<VisualConcept> concepts;
    concepts.reserve(pages.size());
    for (const WikiPage& page : pages) {
        const auto warn = [&](const std::string& why) {
            if (diag) {
                diag->warnings.push_back("page '" + page.concept_name + "' skipped: " + why);
            }
        };
        ExtractedPhrase category;
        try {
            category = extract_category(page.first_sentence);
        } catch (const Error& e) {
            warn(e.what());
            continue;
        }
        std::istringstream words(page.full_text);
        std::string knowledge;
        std::size_t taken = 0;
        for (std::string w; taken < knowledge_token_budget && words >> w; ++taken) {
            if (!knowledge.empty()) {
                knowledge += ' ';
            }
            knowledge += w;
        }
        if (knowledge.empty()) {
            warn("empty knowledge text");
            continue;
        }
        concepts.push_back({page.concept_name, category.text, std::move(knowledge)});
    }
    return concepts;
}

}  // namespace geovlp
