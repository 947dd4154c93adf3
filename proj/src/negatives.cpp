// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/negatives.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "geovlp/embed_sim.h"
#include "geovlp/error.h"

namespace geovlp {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// Similarity of many phrases against one anchor, memoized per phrase.
class AnchoredSimilarity {
public:
    AnchoredSimilarity(std::string_view anchor, const EmbeddingTable& table)
        : table_(table), anchor_(phrase_embedding(anchor, table)) {}

    double operator()(const std::string& phrase) {
        const auto it = cache_.find(phrase);
        if (it != cache_.end()) {
            return it->second;
        }
        const double s = cosine_similarity(anchor_, phrase_embedding(phrase, table_));
        cache_.emplace(phrase, s);
        return s;
    }

private:
    const EmbeddingTable& table_;
    PhraseVector anchor_;
    std::unordered_map<std::string, double> cache_;
};

}  // namespace

void SamplerConfig::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw Error(ErrorKind::validation, "tau must lie in (0, 1)");
    }
    if (ikm_candidate_count == 0 || iec_sample_images == 0 || top_k_objects == 0) {
        throw Error(ErrorKind::validation, "sampler counts must be positive");
    }
}

double visual_distance(std::span<const float> a, std::span<const float> b, VisualMetric metric) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::dimension_mismatch, "visual features differ in dimension");
    }
    if (metric == VisualMetric::euclidean) {
        double sum = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            sum += d * d;
        }
        return std::sqrt(sum);
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    return 1.0 - cosine_similarity(x, y);
}

std::vector<std::size_t> eligible_negatives(const VisualConcept& target, std::span<const VisualConcept> pool) {
    const std::string self = lower(target.name);
    std::vector<std::size_t> out;
    out.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (lower(pool[i].name) != self) {
            out.push_back(i);
        }
    }
    return out;
}

KnowledgeSelection select_type3_knowledge(const VisualConcept& target, std::span<const VisualConcept> pool,
                                          const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng) {
    const auto eligible = eligible_negatives(target, pool);
    if (eligible.empty()) {
        throw Error(ErrorKind::empty_pool, "no candidate concepts other than '" + target.name + "'");
    }
    KnowledgeSelection out;
    for (const std::size_t d : rng.sample_without_replacement(eligible.size(), cfg.ikm_candidate_count)) {
        out.considered.push_back(eligible[d]);
    }
    AnchoredSimilarity similarity(target.category, table);
    double best = -std::numeric_limits<double>::infinity();
    for (const std::size_t i : out.considered) {
        const double s = similarity(pool[i].category);
        if (s > best) {
            best = s;
            out.pool_index = i;
        }
    }
    out.similarity = best;
    return out;
}

KnowledgeSelection select_type2_knowledge(const VisualConcept& target, std::span<const VisualConcept> pool,
                                          const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng) {
    AnchoredSimilarity similarity(target.category, table);
    KnowledgeSelection out;
    for (const std::size_t i : eligible_negatives(target, pool)) {
        if (similarity(pool[i].category) < cfg.tau) {
            out.considered.push_back(i);
        }
    }
    if (out.considered.empty()) {
        throw Error(ErrorKind::no_dissimilar_concept,
                    "every candidate is category-similar to '" + target.name + "'");
    }
    out.pool_index = out.considered[rng.uniform_index(out.considered.size())];
    out.similarity = similarity(pool[out.pool_index].category);
    return out;
}

std::vector<std::size_t> top_objects_by_area(const ImageRecord& record, std::size_t k) {
    std::vector<std::size_t> order(record.objects.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return record.objects[a].area > record.objects[b].area;
    });
    order.resize(std::min(k, order.size()));
    return order;
}

std::size_t locate_concept(ImageRecord& record, std::string_view category, const EmbeddingTable& table,
                           const SamplerConfig& cfg) {
    if (record.objects.empty()) {
        throw Error(ErrorKind::no_objects, "image '" + record.image_id + "' has no detected objects");
    }
    if (!record.concept_name) {
        throw Error(ErrorKind::validation, "image '" + record.image_id + "' has no concept name");
    }
    AnchoredSimilarity similarity(category, table);
    std::size_t located = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (const std::size_t i : top_objects_by_area(record, cfg.top_k_objects)) {
        const double s = similarity(record.objects[i].tag);
        if (s > best) {
            best = s;
            located = i;
        }
    }
    record.objects[located].concept_override = *record.concept_name;
    return located;
}

std::size_t propagate_concept(ImageRecord& record, std::size_t located_index) {
    if (located_index >= record.objects.size()) {
        throw Error(ErrorKind::index_out_of_range, "located index outside the object list");
    }
    const DetectedObject& located = record.objects[located_index];
    const std::string tag = located.tag;
    const std::optional<std::string> name = located.concept_override;
    std::size_t count = 0;
    for (DetectedObject& o : record.objects) {
        if (o.tag == tag) {
            o.concept_override = name;
            ++count;
        }
    }
    return count;
}

ReplacementRecord select_iec_replacement(const ImageRecord& record, std::size_t located_index,
                                         std::string_view category, std::span<const ImageRecord> donor_images,
                                         const EmbeddingTable& table, const SamplerConfig& cfg, Rng& rng) {
    if (located_index >= record.objects.size()) {
        throw Error(ErrorKind::index_out_of_range, "located index outside the object list");
    }
    std::vector<std::size_t> others;
    others.reserve(donor_images.size());
    for (std::size_t i = 0; i < donor_images.size(); ++i) {
        if (donor_images[i].image_id != record.image_id) {
            others.push_back(i);
        }
    }
    ReplacementRecord rep;
    rep.target_object_index = located_index;
    for (const std::size_t d : rng.sample_without_replacement(others.size(), cfg.iec_sample_images)) {
        rep.sampled_images.push_back(others[d]);
    }

    const auto& target = record.objects[located_index].feature;
    AnchoredSimilarity similarity(category, table);
    bool found = false;
    for (const std::size_t img : rep.sampled_images) {
        const ImageRecord& donor = donor_images[img];
        for (std::size_t j = 0; j < donor.objects.size(); ++j) {
            const DetectedObject& o = donor.objects[j];
            if (o.feature.size() != target.size()) {
                continue;
            }
            const double sim = similarity(o.tag);
            if (!(sim < cfg.tau)) {
                continue;
            }
            const double dist = visual_distance(target, o.feature, cfg.metric);
            if (!found || dist < rep.visual_distance) {
                found = true;
                rep.donor_image_id = donor.image_id;
                rep.donor_object_index = j;
                rep.donor_tag = o.tag;
                rep.visual_distance = dist;
                rep.category_similarity = sim;
            }
        }
    }
    if (!found) {
        throw Error(ErrorKind::no_valid_donor,
                    "no category-dissimilar donor object for image '" + record.image_id + "'");
    }
    return rep;
}

ImageRecord apply_replacement(const ImageRecord& record, const ReplacementRecord& rep,
                              std::span<const ImageRecord> donors) {
    if (rep.target_object_index >= record.objects.size()) {
        throw Error(ErrorKind::index_out_of_range, "replacement target outside the object list");
    }
    const auto donor = std::find_if(donors.begin(), donors.end(),
                                    [&](const ImageRecord& r) { return r.image_id == rep.donor_image_id; });
    if (donor == donors.end() || rep.donor_object_index >= donor->objects.size()) {
        throw Error(ErrorKind::index_out_of_range, "donor '" + rep.donor_image_id + "' object " +
                                                       std::to_string(rep.donor_object_index) + " not found");
    }
    const auto& feature = donor->objects[rep.donor_object_index].feature;
    if (feature.size() != record.objects[rep.target_object_index].feature.size()) {
        throw Error(ErrorKind::dimension_mismatch, "donor feature dimension differs from the target's");
    }
    ImageRecord out = record;
    out.objects[rep.target_object_index].feature = feature;
    return out;
}

}  // namespace geovlp
