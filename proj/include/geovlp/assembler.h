// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Builds labeled training examples laid out as
//
//   [CLS] caption [SEP] knowledge [SEP] tags [SEP] + one visual row per object
//
// with supervision for masked language modeling, 3-way image-text matching,
// 3-way image-knowledge matching and binary image edit checking.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geovlp/formats.h"
#include "geovlp/negatives.h"
#include "geovlp/rng.h"

namespace geovlp {

class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kCls = 2;
    static constexpr std::int32_t kSep = 3;
    static constexpr std::int32_t kMask = 4;
    static constexpr std::int32_t kSpecialCount = 5;

    /// Specials followed by the sorted distinct words of `texts`.
    static Vocabulary build(std::span<const std::string> texts);

    /// Restores a vocabulary from its token list; the specials must come first.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::int32_t id(const std::string& word) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t size() const { return tokens_.size(); }
    static bool is_special(std::int32_t id) { return id >= 0 && id < kSpecialCount; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
};

/// Lowercases and splits on whitespace; punctuation characters become tokens.
std::vector<std::string> basic_tokenize(std::string_view text);
std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab);

struct AssemblyConfig {
    double mlm_rate = 0.15;
    std::array<std::uint32_t, 3> itm_ratio{2, 1, 1};
    std::array<std::uint32_t, 3> ikm_ratio{2, 1, 1};
    std::array<std::uint32_t, 2> iec_ratio{1, 1};
    std::size_t max_text_tokens = 70;
    std::size_t max_objects = 50;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct ModelInput {
    std::vector<std::int32_t> token_ids;
    std::vector<std::int32_t> segment_ids;
    FeatureMatrix visual_features;
};

/// Objects kept for the model: largest areas first (ties by lower index), at most `max_objects`.
std::vector<std::size_t> kept_objects(std::span<const DetectedObject> objects, std::size_t max_objects);

/// Region feature followed by (x/W, y/H, w/W, h/H, wh/WH, w/h).
std::vector<float> visual_row(const DetectedObject& object, std::int64_t image_width, std::int64_t image_height);

/// Lays out one input. Text overflow is cut from knowledge first, then
/// caption, then tags. `objects` is cut to the largest `max_objects`.
ModelInput build_input(std::string_view caption, std::string_view knowledge, std::span<const std::string> tags,
                       std::span<const DetectedObject> objects, std::int64_t image_width,
                       std::int64_t image_height, const Vocabulary& vocab, const AssemblyConfig& cfg);

struct MaskedTokens {
    std::vector<std::int32_t> masked_ids;
    std::vector<std::int32_t> positions;
    std::vector<std::int32_t> targets;
};

/// BERT-style masking: each non-special token is selected with probability
/// mlm_rate; selections become [MASK] 80%, a random word 10%, unchanged 10%.
/// If nothing was selected, one maskable token is forced to [MASK].
MaskedTokens apply_mlm_mask(std::span<const std::int32_t> token_ids, const Vocabulary& vocab,
                            const AssemblyConfig& cfg, Rng& rng);

/// Class counts for `n` items under integer ratio weights (largest remainder).
template <std::size_t K>
std::array<std::size_t, K> ratio_counts(const std::array<std::uint32_t, K>& ratio, std::size_t n);

/// Stratified label assignment: exactly ratio_counts() items per class where
/// feasible. `feasible(i, label)` says whether item i can take a negative label;
/// label 0 is always feasible. Shortfalls stay at label 0.
template <std::size_t K, typename Feasible>
std::vector<int> plan_labels(const std::array<std::uint32_t, K>& ratio, std::size_t n, Feasible&& feasible,
                             Rng& rng);

/// Caption and tags as the model sees them for an ITM label.
struct ItmChoice {
    std::string caption;
    std::vector<std::string> tags;
    int label = 0;
    std::size_t partner = 0;  // record whose caption or tags were borrowed
};

/// Display tags of the objects kept for the model, in kept order.
std::vector<std::string> record_tags(const ImageRecord& record, std::size_t max_objects);

/// label 0 keeps both; 1 swaps the caption for another record's different
/// caption; 2 swaps the tags for another record's different tags.
ItmChoice assign_itm(std::size_t record_index, std::span<const ImageRecord> records, int label,
                     std::size_t max_objects, Rng& rng);
/// Same, with the label drawn from `ratio`.
ItmChoice assign_itm(std::size_t record_index, std::span<const ImageRecord> records,
                     const AssemblyConfig& cfg, Rng& rng);

/// Per-record sampler results computed ahead of labeling.
struct PreparedRecord {
    ImageRecord record;                       // with located/propagated concept overrides
    std::optional<std::size_t> concept_index;  // into the knowledge base
    std::optional<std::size_t> located;
    std::size_t propagated = 0;
    std::optional<KnowledgeSelection> type2;
    std::optional<KnowledgeSelection> type3;
    std::optional<ReplacementRecord> replacement;
    std::vector<std::string> failures;
};

/// Locates and propagates the record's concept, then runs every sampler.
/// Sampler failures are recorded, never thrown.
PreparedRecord prepare_record(std::size_t index, std::span<const ImageRecord> records,
                              std::span<const VisualConcept> knowledge_base,
                              const std::unordered_map<std::string, std::size_t>& concept_lookup,
                              const EmbeddingTable& table, const SamplerConfig& cfg, std::uint64_t seed);

/// Lowercased concept name -> first knowledge base index.
std::unordered_map<std::string, std::size_t> concept_index(std::span<const VisualConcept> knowledge_base);

struct IkmChoice {
    std::string knowledge;
    std::string knowledge_concept;
    int label = 0;
};

/// Knowledge for an IKM label; falls back to label 0 when the sampler result is missing.
IkmChoice assign_ikm(const PreparedRecord& prepared, std::span<const VisualConcept> knowledge_base, int label);

struct IecChoice {
    ImageRecord record;
    int label = 0;
};

/// Unmodified record for label 0, donor-replaced record for label 1; falls back to 0 without a donor.
IecChoice assign_iec(const PreparedRecord& prepared, std::span<const ImageRecord> donors, int label);

struct CorpusBuildOptions {
    AssemblyConfig assembly;
    SamplerConfig sampler;
    std::size_t threads = 1;
};

/// Canonical JSON of the options; its digest is the corpus config hash.
nlohmann::json options_to_json(const CorpusBuildOptions& options);

/// Deterministic function of (records, knowledge base, table, options, seed);
/// independent of the thread count.
Corpus build_corpus(std::span<const ImageRecord> records, std::span<const VisualConcept> knowledge_base,
                    const EmbeddingTable& table, const CorpusBuildOptions& options, std::uint64_t seed,
                    Diagnostics* diag = nullptr);

/// Sampler decisions for every record, as used by build_corpus.
std::vector<PreparedRecord> audit_samplers(std::span<const ImageRecord> records,
                                           std::span<const VisualConcept> knowledge_base,
                                           const EmbeddingTable& table, const SamplerConfig& cfg,
                                           std::uint64_t seed, std::size_t threads = 1);

// ---------------------------------------------------------------------------

template <std::size_t K>
std::array<std::size_t, K> ratio_counts(const std::array<std::uint32_t, K>& ratio, std::size_t n) {
    std::uint64_t total = 0;
    for (const auto r : ratio) {
        total += r;
    }
    std::array<std::size_t, K> counts{};
    std::array<std::uint64_t, K> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::uint64_t scaled = static_cast<std::uint64_t>(n) * ratio[k];
        counts[k] = static_cast<std::size_t>(scaled / total);
        remainder[k] = scaled % total;
        assigned += counts[k];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
            if (remainder[k] > remainder[best]) {
                best = k;
            }
        }
        ++counts[best];
        remainder[best] = 0;
        ++assigned;
    }
    return counts;
}

template <std::size_t K, typename Feasible>
std::vector<int> plan_labels(const std::array<std::uint32_t, K>& ratio, std::size_t n, Feasible&& feasible,
                             Rng& rng) {
    const auto counts = ratio_counts(ratio, n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    std::vector<int> labels(n, 0);
    std::vector<bool> taken(n, false);
    for (std::size_t k = 1; k < K; ++k) {
        std::size_t placed = 0;
        for (std::size_t pos = 0; pos < n && placed < counts[k]; ++pos) {
            const std::size_t i = order[pos];
            if (!taken[i] && feasible(i, static_cast<int>(k))) {
                labels[i] = static_cast<int>(k);
                taken[i] = true;
                ++placed;
            }
        }
    }
    return labels;
}

}  // namespace geovlp
