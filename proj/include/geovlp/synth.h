// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic worlds: a clustered word-vector table, a knowledge base
// whose categories fall into those clusters, and detection records whose
// concept object carries an in-cluster tag.

#pragma once

#include <cstdint>
#include <vector>

#include "geovlp/assembler.h"
#include "geovlp/formats.h"
#include "geovlp/train_eval.h"

namespace geovlp {

struct SynthConfig {
    std::size_t clusters = 8;
    std::size_t concepts_per_cluster = 25;
    std::size_t images = 1000;
    std::size_t min_distractors = 2;
    std::size_t max_distractors = 11;
    std::size_t feature_dim = 16;
    std::size_t looks = 6;  // visual prototypes shared across clusters
    std::uint64_t seed = 0;
};

struct SynthWorld {
    EmbeddingTable table{1};
    std::vector<VisualConcept> knowledge_base;
    std::vector<ImageRecord> records;
};

/// Words of cluster c sit near axis c, so cross-cluster category similarity
/// stays far below the usual 0.3 threshold and in-cluster similarity far above.
SynthWorld make_world(const SynthConfig& cfg);

struct SynthTaskConfig {
    std::size_t classes = 4;
    std::size_t items_per_class = 2;
    std::size_t extra_concepts = 24;  // knowledge base padding for the negative samplers
    std::size_t feature_dim = 16;
    std::uint64_t seed = 0;
};

struct SynthTask {
    SynthWorld world;  // records are the task items, labeled with their class concept
    ZeroShotTask task;
};

/// Zero-shot task whose items have class-separable concept-object features.
/// Class names are the detector tag words of their concept objects, and each
/// item's caption is its class name.
SynthTask make_zero_shot_task(const SynthTaskConfig& cfg);

/// One example per (item, class) pair, laid out exactly like a zero-shot
/// query plus MLM masking: c = class name, k = class knowledge, t and v from
/// the item. ITM label 0 for the gold class and 1 (caption from another
/// record) otherwise; IKM label 0 for the gold class's knowledge, otherwise 1
/// or 2 depending on whether the class category is below tau; IEC label 0.
/// Each pair appears `copies` times with independently drawn masks.
Corpus make_pairing_corpus(const SynthTask& task, const AssemblyConfig& assembly, double tau, std::uint64_t seed,
                           std::size_t copies = 1);

}  // namespace geovlp
