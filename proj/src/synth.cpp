// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/synth.h"

#include <algorithm>
#include <array>
#include <string>

#include "geovlp/embed_sim.h"
#include "geovlp/error.h"
#include "geovlp/rng.h"

namespace geovlp {

namespace {

constexpr std::array<const char*, 12> kHeads = {"gate",   "textile", "dish",    "instrument", "boat",   "garment",
                                                "temple", "lantern", "costume", "vessel",     "market", "dance"};

constexpr std::array<const char*, 6> kAdjectiveStems = {"old", "carved", "painted", "woven", "festive", "sacred"};

constexpr std::array<const char*, 30> kRegions = {
    "kyoto",  "oaxaca", "lagos",  "hanoi",  "cusco",   "jaipur",  "accra", "tbilisi", "harar",  "lhasa",
    "quito",  "fez",    "bukhara", "cebu",  "manaus",  "zanzibar", "suva", "oruro",   "herat",  "luang",
    "sapa",   "ghent",  "mopti",  "kandy",  "puno",    "tiwi",    "lamu",  "yazd",    "aswan",  "bago"};

constexpr std::array<const char*, 10> kBackground = {"person", "tree", "wall",  "sky",    "road",
                                                     "chair",  "car",  "table", "window", "floor"};

constexpr std::array<const char*, 8> kFillers = {"crafted", "by",     "local", "artisans",
                                                 "used",    "during", "many",  "ceremonies"};

std::string adjective(std::size_t cluster, std::size_t j) {
    return std::string(kAdjectiveStems[j % kAdjectiveStems.size()]) + kHeads[cluster % kHeads.size()][0] +
           std::to_string(cluster);
}

std::string head(std::size_t cluster) {
    std::string h = kHeads[cluster % kHeads.size()];
    if (cluster >= kHeads.size()) {
        h += std::to_string(cluster / kHeads.size());
    }
    return h;
}

std::string region(std::size_t j) {
    std::string r = kRegions[j % kRegions.size()];
    if (j >= kRegions.size()) {
        r += std::to_string(j / kRegions.size());
    }
    return r;
}

std::vector<float> word_vector(std::size_t axis, std::size_t dim, Rng& rng) {
    std::vector<float> v(dim);
    for (auto& x : v) {
        x = static_cast<float>(0.15 * rng.normal());
    }
    v[axis] += 1.0f;
    return v;
}

std::vector<float> noisy(const std::vector<float>& proto, double sigma, Rng& rng) {
    std::vector<float> v = proto;
    for (auto& x : v) {
        x += static_cast<float>(sigma * rng.normal());
    }
    return v;
}

std::vector<float> prototype(std::size_t dim, Rng& rng) {
    std::vector<float> v(dim);
    for (auto& x : v) {
        x = static_cast<float>(rng.normal());
    }
    return v;
}

DetectedObject make_object(std::string tag, std::int64_t w, std::int64_t h, std::vector<float> feature,
                           std::int64_t width, std::int64_t height, Rng& rng) {
    DetectedObject o;
    o.tag = std::move(tag);
    o.bbox.w = w;
    o.bbox.h = h;
    o.bbox.x = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(width - w + 1)));
    o.bbox.y = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::size_t>(height - h + 1)));
    o.area = w * h;
    o.score = static_cast<float>(0.5 + 0.5 * rng.uniform01());
    o.feature = std::move(feature);
    return o;
}

// Embedding axes: one per cluster, one for background words, plus noise axes.
EmbeddingTable make_table(std::size_t clusters, Rng& rng) {
    const std::size_t dim = clusters + 1 + 8;
    EmbeddingTable table(dim);
    for (std::size_t c = 0; c < clusters; ++c) {
        table.add(head(c), word_vector(c, dim, rng));
        for (std::size_t j = 0; j < kAdjectiveStems.size(); ++j) {
            table.add(adjective(c, j), word_vector(c, dim, rng));
        }
    }
    for (const char* w : kBackground) {
        table.add(w, word_vector(clusters, dim, rng));
    }
    return table;
}

VisualConcept make_concept(std::size_t cluster, std::size_t j, Rng& rng, bool bare_name = false) {
    VisualConcept c;
    c.name = bare_name ? head(cluster) : region(j) + " " + head(cluster);
    const std::size_t a = rng.uniform_index(kAdjectiveStems.size());
    const std::size_t b = (a + 1 + rng.uniform_index(kAdjectiveStems.size() - 1)) % kAdjectiveStems.size();
    c.category = adjective(cluster, a) + " " + adjective(cluster, b) + " " + head(cluster);
    c.knowledge = c.name + " is a " + c.category + " from " + region(j) + " ,";
    for (std::size_t i = 0; i < 4; ++i) {
        c.knowledge += std::string(" ") + kFillers[rng.uniform_index(kFillers.size())];
    }
    c.knowledge += " .";
    return c;
}

}  // namespace

SynthWorld make_world(const SynthConfig& cfg) {
    if (cfg.clusters < 2 || cfg.concepts_per_cluster == 0 || cfg.feature_dim == 0 || cfg.looks == 0 ||
        cfg.min_distractors > cfg.max_distractors) {
        throw Error(ErrorKind::validation, "invalid synthetic world configuration");
    }
    Rng rng(derive_seed(cfg.seed, 61, 0));
    SynthWorld world;
    world.table = make_table(cfg.clusters, rng);
    for (std::size_t c = 0; c < cfg.clusters; ++c) {
        for (std::size_t j = 0; j < cfg.concepts_per_cluster; ++j) {
            world.knowledge_base.push_back(make_concept(c, c * cfg.concepts_per_cluster + j, rng));
        }
    }
    std::vector<std::vector<float>> looks;
    for (std::size_t l = 0; l < cfg.looks; ++l) {
        looks.push_back(prototype(cfg.feature_dim, rng));
    }
    for (std::size_t i = 0; i < cfg.images; ++i) {
        const std::size_t k = rng.uniform_index(world.knowledge_base.size());
        const std::size_t cluster = k / cfg.concepts_per_cluster;
        const VisualConcept& vc = world.knowledge_base[k];
        ImageRecord r;
        r.image_id = "img" + std::to_string(i);
        r.width = 640;
        r.height = 480;
        r.concept_name = vc.name;
        r.knowledge = vc.knowledge;
        const std::size_t distractors =
            cfg.min_distractors + rng.uniform_index(cfg.max_distractors - cfg.min_distractors + 1);
        // The vc object ranks among the three largest; a second copy sometimes appears.
        std::vector<std::int64_t> sides;
        for (std::size_t d = 0; d < distractors + 2; ++d) {
            sides.push_back(40 + static_cast<std::int64_t>(rng.uniform_index(200)));
        }
        std::sort(sides.begin(), sides.end(), std::greater<>());
        const std::size_t rank = rng.uniform_index(std::min<std::size_t>(3, sides.size()));
        const auto& look = looks[k % cfg.looks];
        r.objects.push_back(
            make_object(head(cluster), sides[rank], sides[rank] * 3 / 4, noisy(look, 0.3, rng), r.width, r.height, rng));
        std::string first_background;
        for (std::size_t d = 0, s = 0; d < distractors; ++d, ++s) {
            if (s == rank) {
                ++s;
            }
            std::string tag = kBackground[rng.uniform_index(kBackground.size())];
            if (first_background.empty()) {
                first_background = tag;
            }
            r.objects.push_back(make_object(tag, sides[s], sides[s] * 3 / 4,
                                            noisy(looks[rng.uniform_index(cfg.looks)], 0.3, rng), r.width,
                                            r.height, rng));
        }
        if (rng.uniform01() < 0.2) {
            r.objects.push_back(make_object(head(cluster), 30, 30, noisy(look, 0.3, rng), r.width, r.height, rng));
        }
        rng.shuffle(r.objects);
        r.caption = "a photo of " + vc.name + (first_background.empty() ? "" : " with a " + first_background);
        world.records.push_back(std::move(r));
    }
    return world;
}

SynthTask make_zero_shot_task(const SynthTaskConfig& cfg) {
    if (cfg.classes < 2 || cfg.items_per_class == 0 || cfg.feature_dim == 0) {
        throw Error(ErrorKind::validation, "invalid synthetic task configuration");
    }
    Rng rng(derive_seed(cfg.seed, 62, 0));
    const std::size_t clusters = std::max<std::size_t>(cfg.classes, 2);
    SynthTask out;
    out.world.table = make_table(clusters, rng);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        out.world.knowledge_base.push_back(make_concept(c, c, rng, true));
        out.task.classes.push_back({out.world.knowledge_base.back().name, out.world.knowledge_base.back().knowledge});
    }
    for (std::size_t e = 0; e < cfg.extra_concepts; ++e) {
        out.world.knowledge_base.push_back(make_concept(e % clusters, cfg.classes + e, rng));
    }
    std::vector<std::vector<float>> class_looks;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        class_looks.push_back(prototype(cfg.feature_dim, rng));
    }
    const auto background_look = prototype(cfg.feature_dim, rng);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        for (std::size_t i = 0; i < cfg.items_per_class; ++i) {
            const VisualConcept& vc = out.world.knowledge_base[c];
            ImageRecord r;
            r.image_id = "task" + std::to_string(c) + "_" + std::to_string(i);
            r.width = 640;
            r.height = 480;
            r.caption = vc.name;
            r.concept_name = vc.name;
            r.knowledge = vc.knowledge;
            r.objects.push_back(make_object(head(c), 300, 240, noisy(class_looks[c], 0.1, rng), r.width, r.height, rng));
            for (std::size_t d = 0; d < 2; ++d) {
                const auto side = 60 + static_cast<std::int64_t>(rng.uniform_index(80));
                r.objects.push_back(make_object(kBackground[rng.uniform_index(kBackground.size())], side, side,
                                                noisy(background_look, 0.5, rng), r.width, r.height, rng));
            }
            out.task.items.push_back({r, c});
            out.world.records.push_back(std::move(r));
        }
    }
    return out;
}

Corpus make_pairing_corpus(const SynthTask& st, const AssemblyConfig& assembly, double tau, std::uint64_t seed,
                           std::size_t copies) {
    assembly.validate();
    const ZeroShotTask& task = st.task;
    task.validate();
    std::vector<std::string> texts;
    for (const auto& c : task.classes) {
        texts.push_back(c.name);
        texts.push_back(c.knowledge);
    }
    for (const auto& it : task.items) {
        texts.push_back(it.record.caption);
        for (const auto& o : it.record.objects) {
            texts.push_back(o.tag);
        }
    }
    const Vocabulary vocab = Vocabulary::build(texts);

    Corpus corpus;
    CorpusManifest& m = corpus.manifest;
    m.seed = seed;
    m.config = {{"construction", "zero_shot_pairings"},
                {"copies", copies},
                {"mlm_rate", assembly.mlm_rate},
                {"max_text_tokens", assembly.max_text_tokens},
                {"max_objects", assembly.max_objects},
                {"tau", tau},
                {"masking", "static"}};
    m.config_hash = fnv1a_hex(m.config.dump());
    m.vocab = vocab.tokens();
    for (std::size_t i = 0; i < task.items.size(); ++i) {
        const ZeroShotItem& item = task.items[i];
        const auto tags = record_tags(item.record, assembly.max_objects);
        const VisualConcept& gold = st.world.knowledge_base[item.gold];
        for (std::size_t k = 0; k < copies * task.classes.size(); ++k) {
            const std::size_t c = k % task.classes.size();
            const ZeroShotClass& cls = task.classes[c];
            ModelInput in = build_input(cls.name, cls.knowledge, tags, item.record.objects, item.record.width,
                                        item.record.height, vocab, assembly);
            Rng mask_rng(derive_seed(seed, 63, i * copies * task.classes.size() + k));
            MaskedTokens masked = apply_mlm_mask(in.token_ids, vocab, assembly, mask_rng);
            TrainingExample e;
            e.token_ids = std::move(masked.masked_ids);
            e.segment_ids = std::move(in.segment_ids);
            e.visual_features = std::move(in.visual_features);
            e.mlm_positions = std::move(masked.positions);
            e.mlm_targets = std::move(masked.targets);
            e.itm_label = c == item.gold ? 0 : 1;
            if (c != item.gold) {
                const double sim =
                    phrase_similarity(st.world.knowledge_base[c].category, gold.category, st.world.table);
                e.ikm_label = sim < tau ? 1 : 2;
            }
            e.source_image_id = item.record.image_id;
            e.knowledge_concept = cls.name;
            corpus.examples.push_back(std::move(e));
        }
    }
    m.example_count = corpus.examples.size();
    for (const TrainingExample& e : corpus.examples) {
        ++m.itm_counts[static_cast<std::size_t>(e.itm_label)];
        ++m.ikm_counts[static_cast<std::size_t>(e.ikm_label)];
        ++m.iec_counts[static_cast<std::size_t>(e.iec_label)];
        m.masked_tokens += e.mlm_positions.size();
        for (const auto id : e.token_ids) {
            if (!Vocabulary::is_special(id) || id == Vocabulary::kMask) {
                ++m.maskable_tokens;
            }
        }
    }
    return corpus;
}

}  // namespace geovlp
