// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Negative sampling for knowledge matching and image edit checking, plus the
// heuristics that tie a caption's visual concept to one detected object.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geovlp/formats.h"
#include "geovlp/rng.h"

namespace geovlp {

enum class VisualMetric { euclidean, cosine };

struct SamplerConfig {
    double tau = 0.3;
    std::size_t ikm_candidate_count = 200;
    std::size_t iec_sample_images = 20;
    std::size_t top_k_objects = 10;
    std::uint64_t rng_seed = 0;
    VisualMetric metric = VisualMetric::euclidean;

    void validate() const;
};

/// Outcome of a knowledge sampler. `considered` lists pool indices in the order
/// the sampler looked at them: the drawn candidates for the argmax sampler, the
/// retained (dissimilar) set for the filter sampler.
struct KnowledgeSelection {
    std::size_t pool_index = 0;
    double similarity = 0.0;
    std::vector<std::size_t> considered;
};

struct ReplacementRecord {
    std::size_t target_object_index = 0;
    std::string donor_image_id;
    std::size_t donor_object_index = 0;
    std::string donor_tag;
    double visual_distance = 0.0;
    double category_similarity = 0.0;
    std::vector<std::size_t> sampled_images;  // indices into the donor image list, draw order
};

/// Pool indices eligible as negatives for `target`: every concept whose name
/// differs from the target's (case-insensitive).
std::vector<std::size_t> eligible_negatives(const VisualConcept& target, std::span<const VisualConcept> pool);

/// Draws up to `ikm_candidate_count` eligible concepts without replacement and
/// returns the one whose category is most similar to the target's. Ties go to
/// the earliest draw.
KnowledgeSelection select_type3_knowledge(const VisualConcept& target, std::span<const VisualConcept> pool,
                                          const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng);

/// Uniform draw over eligible concepts whose category similarity is below tau.
KnowledgeSelection select_type2_knowledge(const VisualConcept& target, std::span<const VisualConcept> pool,
                                          const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng);

/// Object indices sorted by area (descending, ties by lower index), cut to k.
std::vector<std::size_t> top_objects_by_area(const ImageRecord& record, std::size_t k);

/// Picks, among the top-k largest objects, the one whose tag best matches
/// `category`, and overrides its tag with the record's concept name.
std::size_t locate_concept(ImageRecord& record, std::string_view category, const EmbeddingTable& table,
                           const SamplerConfig& cfg);

/// Copies the located object's concept name onto every object sharing its
/// original tag. Returns how many objects carry it afterwards.
std::size_t propagate_concept(ImageRecord& record, std::size_t located_index);

/// Samples donor images (never the record's own image), keeps objects whose
/// tag is category-dissimilar to `category`, and returns the one visually
/// closest to the located object.
ReplacementRecord select_iec_replacement(const ImageRecord& record, std::size_t located_index,
                                         std::string_view category, std::span<const ImageRecord> donor_images,
                                         const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng);

/// Copy of `record` whose target object's feature is the donor's feature.
ImageRecord apply_replacement(const ImageRecord& record, const ReplacementRecord& rep,
                              std::span<const ImageRecord> donors);

double visual_distance(std::span<const float> a, std::span<const float> b, VisualMetric metric);

}  // namespace geovlp
