// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/assembler.h"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>

#include "geovlp/error.h"
#include "geovlp/parallel.h"

namespace geovlp {

namespace {

// Sub-stream tags for derive_seed(). Changing them changes every corpus.
enum Stream : std::uint64_t {
    kStreamType3 = 11,
    kStreamType2 = 12,
    kStreamIec = 13,
    kStreamPlanItm = 21,
    kStreamPlanIkm = 22,
    kStreamPlanIec = 23,
    kStreamItmPartner = 31,
    kStreamMask = 32,
};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string join(std::span<const std::string> parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) {
            out += ' ';
        }
        out += p;
    }
    return out;
}

template <std::size_t K>
int draw_label(const std::array<std::uint32_t, K>& ratio, Rng& rng) {
    std::uint64_t total = 0;
    for (const auto r : ratio) {
        total += r;
    }
    auto pick = static_cast<std::uint64_t>(rng.uniform_index(static_cast<std::size_t>(total)));
    for (std::size_t k = 0; k < K; ++k) {
        if (pick < ratio[k]) {
            return static_cast<int>(k);
        }
        pick -= ratio[k];
    }
    return 0;
}

// Uniformly drawn other record whose `key` differs from the record's own; the
// scan after a few misses keeps the draw total when most keys coincide.
template <typename Key>
std::optional<std::size_t> draw_partner(std::size_t self, std::size_t n, Key&& key, Rng& rng) {
    if (n < 2) {
        return std::nullopt;
    }
    const auto own = key(self);
    for (int attempt = 0; attempt < 16; ++attempt) {
        std::size_t j = rng.uniform_index(n - 1);
        if (j >= self) {
            ++j;
        }
        if (key(j) != own) {
            return j;
        }
    }
    const std::size_t start = rng.uniform_index(n);
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t j = (start + step) % n;
        if (j != self && key(j) != own) {
            return j;
        }
    }
    return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary and tokenization

std::vector<std::string> basic_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    };
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
    std::set<std::string> words;
    for (const auto& text : texts) {
        for (auto& w : basic_tokenize(text)) {
            words.insert(std::move(w));
        }
    }
    std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    for (const auto& w : words) {
        if (std::find(tokens.begin(), tokens.begin() + kSpecialCount, w) == tokens.begin() + kSpecialCount) {
            tokens.push_back(w);
        }
    }
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    static const std::array<std::string, kSpecialCount> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    if (tokens.size() < kSpecialCount || !std::equal(kSpecials.begin(), kSpecials.end(), tokens.begin())) {
        throw Error(ErrorKind::validation, "vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK]");
    }
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
            throw Error(ErrorKind::validation, "duplicate vocabulary token '" + v.tokens_[i] + "'");
        }
    }
    return v;
}

std::int32_t Vocabulary::id(const std::string& word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<std::int32_t> ids;
    for (const auto& w : basic_tokenize(text)) {
        ids.push_back(vocab.id(w));
    }
    return ids;
}

// ---------------------------------------------------------------------------
// Input layout

void AssemblyConfig::validate() const {
    if (!(mlm_rate > 0.0 && mlm_rate < 1.0)) {
        throw Error(ErrorKind::validation, "mlm_rate must lie in (0, 1)");
    }
    const auto positive = [](const auto& ratio) {
        return std::all_of(ratio.begin(), ratio.end(), [](std::uint32_t r) { return r > 0; });
    };
    if (!positive(itm_ratio) || !positive(ikm_ratio) || !positive(iec_ratio)) {
        throw Error(ErrorKind::validation, "label ratios must be positive");
    }
    if (max_text_tokens < 5 || max_objects == 0) {
        throw Error(ErrorKind::validation, "max_text_tokens must be at least 5 and max_objects positive");
    }
}

std::vector<std::size_t> kept_objects(std::span<const DetectedObject> objects, std::size_t max_objects) {
    std::vector<std::size_t> order(objects.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return objects[a].area > objects[b].area; });
    order.resize(std::min(order.size(), max_objects));
    return order;
}

std::vector<float> visual_row(const DetectedObject& o, std::int64_t image_width, std::int64_t image_height) {
    const double W = static_cast<double>(image_width);
    const double H = static_cast<double>(image_height);
    std::vector<float> row = o.feature;
    row.push_back(static_cast<float>(static_cast<double>(o.bbox.x) / W));
    row.push_back(static_cast<float>(static_cast<double>(o.bbox.y) / H));
    row.push_back(static_cast<float>(static_cast<double>(o.bbox.w) / W));
    row.push_back(static_cast<float>(static_cast<double>(o.bbox.h) / H));
    row.push_back(static_cast<float>(static_cast<double>(o.area) / (W * H)));
    row.push_back(static_cast<float>(static_cast<double>(o.bbox.w) / static_cast<double>(o.bbox.h)));
    return row;
}

ModelInput build_input(std::string_view caption, std::string_view knowledge, std::span<const std::string> tags,
                       std::span<const DetectedObject> objects, std::int64_t image_width,
                       std::int64_t image_height, const Vocabulary& vocab, const AssemblyConfig& cfg) {
    auto c = tokenize(caption, vocab);
    auto k = tokenize(knowledge, vocab);
    auto t = tokenize(join(tags), vocab);

    const std::size_t budget = cfg.max_text_tokens - 4;
    std::size_t overflow = c.size() + k.size() + t.size();
    overflow = overflow > budget ? overflow - budget : 0;
    for (auto* part : {&k, &c, &t}) {
        const std::size_t cut = std::min(overflow, part->size());
        part->resize(part->size() - cut);
        overflow -= cut;
    }

    ModelInput in;
    const auto append = [&](std::span<const std::int32_t> ids, std::int32_t segment) {
        for (const auto id : ids) {
            in.token_ids.push_back(id);
            in.segment_ids.push_back(segment);
        }
        in.token_ids.push_back(Vocabulary::kSep);
        in.segment_ids.push_back(segment);
    };
    in.token_ids.push_back(Vocabulary::kCls);
    in.segment_ids.push_back(kSegmentCaption);
    append(c, kSegmentCaption);
    append(k, kSegmentKnowledge);
    append(t, kSegmentTags);

    const auto kept = kept_objects(objects, cfg.max_objects);
    in.visual_features.rows = kept.size();
    in.visual_features.cols = objects.empty() ? 0 : objects.front().feature.size() + kGeometryWidth;
    for (const std::size_t i : kept) {
        const auto row = visual_row(objects[i], image_width, image_height);
        if (row.size() != in.visual_features.cols) {
            throw Error(ErrorKind::dimension_mismatch, "objects of one image differ in feature dimension");
        }
        in.visual_features.values.insert(in.visual_features.values.end(), row.begin(), row.end());
    }
    return in;
}

MaskedTokens apply_mlm_mask(std::span<const std::int32_t> token_ids, const Vocabulary& vocab,
                            const AssemblyConfig& cfg, Rng& rng) {
    MaskedTokens out;
    out.masked_ids.assign(token_ids.begin(), token_ids.end());
    const std::size_t words = vocab.size() - Vocabulary::kSpecialCount;
    std::vector<std::int32_t> maskable;
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        if (Vocabulary::is_special(token_ids[i])) {
            continue;
        }
        maskable.push_back(static_cast<std::int32_t>(i));
        if (rng.uniform01() >= cfg.mlm_rate) {
            continue;
        }
        out.positions.push_back(static_cast<std::int32_t>(i));
        out.targets.push_back(token_ids[i]);
        const double r = rng.uniform01();
        if (r < 0.8) {
            out.masked_ids[i] = Vocabulary::kMask;
        } else if (r < 0.9 && words > 0) {
            out.masked_ids[i] = static_cast<std::int32_t>(Vocabulary::kSpecialCount + rng.uniform_index(words));
        }
    }
    if (out.positions.empty() && !maskable.empty()) {
        const std::int32_t pos = maskable[rng.uniform_index(maskable.size())];
        out.positions.push_back(pos);
        out.targets.push_back(token_ids[static_cast<std::size_t>(pos)]);
        out.masked_ids[static_cast<std::size_t>(pos)] = Vocabulary::kMask;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Label assignment

std::vector<std::string> record_tags(const ImageRecord& record, std::size_t max_objects) {
    std::vector<std::string> tags;
    for (const std::size_t i : kept_objects(record.objects, max_objects)) {
        tags.push_back(record.objects[i].display_tag());
    }
    return tags;
}

ItmChoice assign_itm(std::size_t record_index, std::span<const ImageRecord> records, int label,
                     std::size_t max_objects, Rng& rng) {
    const ImageRecord& self = records[record_index];
    ItmChoice choice{self.caption, record_tags(self, max_objects), 0, record_index};
    if (label == 1) {
        const auto partner = draw_partner(
            record_index, records.size(), [&](std::size_t j) { return records[j].caption; }, rng);
        if (partner) {
            choice.caption = records[*partner].caption;
            choice.label = 1;
            choice.partner = *partner;
        }
    } else if (label == 2) {
        const auto partner = draw_partner(
            record_index, records.size(), [&](std::size_t j) { return record_tags(records[j], max_objects); }, rng);
        if (partner) {
            choice.tags = record_tags(records[*partner], max_objects);
            choice.label = 2;
            choice.partner = *partner;
        }
    }
    return choice;
}

ItmChoice assign_itm(std::size_t record_index, std::span<const ImageRecord> records, const AssemblyConfig& cfg,
                     Rng& rng) {
    const int label = draw_label(cfg.itm_ratio, rng);
    return assign_itm(record_index, records, label, cfg.max_objects, rng);
}

std::unordered_map<std::string, std::size_t> concept_index(std::span<const VisualConcept> knowledge_base) {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < knowledge_base.size(); ++i) {
        lookup.emplace(lower(knowledge_base[i].name), i);
    }
    return lookup;
}

PreparedRecord prepare_record(std::size_t index, std::span<const ImageRecord> records,
                              std::span<const VisualConcept> knowledge_base,
                              const std::unordered_map<std::string, std::size_t>& concept_lookup,
                              const EmbeddingTable& table, const SamplerConfig& cfg, std::uint64_t seed) {
    PreparedRecord p;
    p.record = records[index];
    const auto fail = [&](std::string_view what, const std::string& why) {
        p.failures.push_back(p.record.image_id + ": " + std::string(what) + ": " + why);
    };
    if (!p.record.concept_name) {
        fail("concept", "record has no concept name");
        return p;
    }
    const auto it = concept_lookup.find(lower(*p.record.concept_name));
    if (it == concept_lookup.end()) {
        fail("concept", "'" + *p.record.concept_name + "' is not in the knowledge base");
        return p;
    }
    p.concept_index = it->second;
    const VisualConcept& self = knowledge_base[it->second];

    try {
        p.located = locate_concept(p.record, self.category, table, cfg);
        p.propagated = propagate_concept(p.record, *p.located);
    } catch (const Error& e) {
        fail(to_string(e.kind()), e.what());
    }

    const auto attempt = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            fail(to_string(e.kind()), e.what());
        }
    };
    attempt([&] {
        Rng rng(derive_seed(seed, kStreamType3, index));
        p.type3 = select_type3_knowledge(self, knowledge_base, table, cfg, rng);
    });
    attempt([&] {
        Rng rng(derive_seed(seed, kStreamType2, index));
        p.type2 = select_type2_knowledge(self, knowledge_base, table, cfg, rng);
    });
    if (p.located) {
        attempt([&] {
            Rng rng(derive_seed(seed, kStreamIec, index));
            p.replacement = select_iec_replacement(p.record, *p.located, self.category, records, table, cfg, rng);
        });
    }
    return p;
}

IkmChoice assign_ikm(const PreparedRecord& prepared, std::span<const VisualConcept> knowledge_base, int label) {
    IkmChoice choice;
    const ImageRecord& r = prepared.record;
    if (r.knowledge) {
        choice.knowledge = *r.knowledge;
    } else if (prepared.concept_index) {
        choice.knowledge = knowledge_base[*prepared.concept_index].knowledge;
    }
    choice.knowledge_concept = r.concept_name.value_or("");
    const std::optional<KnowledgeSelection>& pick = label == 1 ? prepared.type2 : prepared.type3;
    if (label != 0 && pick) {
        const VisualConcept& other = knowledge_base[pick->pool_index];
        choice.knowledge = other.knowledge;
        choice.knowledge_concept = other.name;
        choice.label = label;
    }
    return choice;
}

IecChoice assign_iec(const PreparedRecord& prepared, std::span<const ImageRecord> donors, int label) {
    if (label == 1 && prepared.replacement) {
        return {apply_replacement(prepared.record, *prepared.replacement, donors), 1};
    }
    return {prepared.record, 0};
}

// ---------------------------------------------------------------------------
// Corpus

nlohmann::json options_to_json(const CorpusBuildOptions& o) {
    const auto& a = o.assembly;
    const auto& s = o.sampler;
    return {{"mlm_rate", a.mlm_rate},
            {"itm_ratio", a.itm_ratio},
            {"ikm_ratio", a.ikm_ratio},
            {"iec_ratio", a.iec_ratio},
            {"max_text_tokens", a.max_text_tokens},
            {"max_objects", a.max_objects},
            {"tau", s.tau},
            {"ikm_candidate_count", s.ikm_candidate_count},
            {"iec_sample_images", s.iec_sample_images},
            {"top_k_objects", s.top_k_objects},
            {"visual_metric", s.metric == VisualMetric::euclidean ? "euclidean" : "cosine"},
            {"masking", "static"}};
}

std::vector<PreparedRecord> audit_samplers(std::span<const ImageRecord> records,
                                           std::span<const VisualConcept> knowledge_base,
                                           const EmbeddingTable& table, const SamplerConfig& cfg,
                                           std::uint64_t seed, std::size_t threads) {
    cfg.validate();
    const auto lookup = concept_index(knowledge_base);
    std::vector<PreparedRecord> prepared(records.size());
    parallel_for(records.size(), threads, [&](std::size_t i) {
        prepared[i] = prepare_record(i, records, knowledge_base, lookup, table, cfg, seed);
    });
    return prepared;
}

Corpus build_corpus(std::span<const ImageRecord> records, std::span<const VisualConcept> knowledge_base,
                    const EmbeddingTable& table, const CorpusBuildOptions& options, std::uint64_t seed,
                    Diagnostics* diag) {
    const AssemblyConfig& cfg = options.assembly;
    cfg.validate();
    if (records.empty()) {
        throw Error(ErrorKind::validation, "no records to assemble");
    }
    const std::size_t n = records.size();

    const auto prepared = audit_samplers(records, knowledge_base, table, options.sampler, seed, options.threads);
    std::vector<ImageRecord> located(n);
    for (std::size_t i = 0; i < n; ++i) {
        located[i] = prepared[i].record;
    }

    std::vector<std::string> texts;
    for (const ImageRecord& r : located) {
        texts.push_back(r.caption);
        texts.push_back(r.knowledge.value_or(""));
        for (const DetectedObject& o : r.objects) {
            texts.push_back(o.display_tag());
            texts.push_back(o.tag);
        }
    }
    for (const VisualConcept& c : knowledge_base) {
        texts.push_back(c.name);
        texts.push_back(c.knowledge);
    }
    const Vocabulary vocab = Vocabulary::build(texts);

    std::set<std::string> captions;
    std::set<std::vector<std::string>> tag_lists;
    for (const ImageRecord& r : located) {
        captions.insert(r.caption);
        tag_lists.insert(record_tags(r, cfg.max_objects));
    }
    Rng plan_itm(derive_seed(seed, kStreamPlanItm, 0));
    const auto itm_labels = plan_labels(cfg.itm_ratio, n, [&](std::size_t, int label) {
        return label == 1 ? captions.size() > 1 : tag_lists.size() > 1;
    }, plan_itm);
    Rng plan_ikm(derive_seed(seed, kStreamPlanIkm, 0));
    const auto ikm_labels = plan_labels(cfg.ikm_ratio, n, [&](std::size_t i, int label) {
        return label == 1 ? prepared[i].type2.has_value() : prepared[i].type3.has_value();
    }, plan_ikm);
    Rng plan_iec(derive_seed(seed, kStreamPlanIec, 0));
    const auto iec_labels = plan_labels(cfg.iec_ratio, n, [&](std::size_t i, int) {
        return prepared[i].replacement.has_value();
    }, plan_iec);

    Corpus corpus;
    corpus.examples.resize(n);
    parallel_for(n, options.threads, [&](std::size_t i) {
        const PreparedRecord& p = prepared[i];
        Rng partner_rng(derive_seed(seed, kStreamItmPartner, i));
        const ItmChoice itm = assign_itm(i, located, itm_labels[i], cfg.max_objects, partner_rng);
        const IkmChoice ikm = assign_ikm(p, knowledge_base, ikm_labels[i]);
        const IecChoice iec = assign_iec(p, records, iec_labels[i]);

        ModelInput in = build_input(itm.caption, ikm.knowledge, itm.tags, iec.record.objects, iec.record.width,
                                    iec.record.height, vocab, cfg);
        Rng mask_rng(derive_seed(seed, kStreamMask, i));
        MaskedTokens masked = apply_mlm_mask(in.token_ids, vocab, cfg, mask_rng);

        TrainingExample& e = corpus.examples[i];
        e.token_ids = std::move(masked.masked_ids);
        e.segment_ids = std::move(in.segment_ids);
        e.visual_features = std::move(in.visual_features);
        e.mlm_positions = std::move(masked.positions);
        e.mlm_targets = std::move(masked.targets);
        e.itm_label = itm.label;
        e.ikm_label = ikm.label;
        e.iec_label = iec.label;
        e.source_image_id = p.record.image_id;
        e.knowledge_concept = ikm.knowledge_concept;
        e.located_object = p.located ? static_cast<int>(*p.located) : -1;
        if (iec.label == 1) {
            e.donor_image_id = p.replacement->donor_image_id;
            e.donor_object = static_cast<int>(p.replacement->donor_object_index);
        }
    });

    CorpusManifest& m = corpus.manifest;
    m.seed = seed;
    m.config = options_to_json(options);
    m.config_hash = fnv1a_hex(m.config.dump());
    m.vocab = vocab.tokens();
    m.example_count = n;
    for (const TrainingExample& e : corpus.examples) {
        ++m.itm_counts[static_cast<std::size_t>(e.itm_label)];
        ++m.ikm_counts[static_cast<std::size_t>(e.ikm_label)];
        ++m.iec_counts[static_cast<std::size_t>(e.iec_label)];
        m.masked_tokens += e.mlm_positions.size();
        for (const auto id : e.token_ids) {
            // [MASK] replaced a word, so it counts as maskable too.
            if (!Vocabulary::is_special(id) || id == Vocabulary::kMask) {
                ++m.maskable_tokens;
            }
        }
    }
    for (const PreparedRecord& p : prepared) {
        m.failures.insert(m.failures.end(), p.failures.begin(), p.failures.end());
    }
    const auto report_shortfall = [&](std::string_view objective, auto realized, auto target) {
        for (std::size_t k = 1; k < realized.size(); ++k) {
            if (realized[k] < target[k]) {
                m.failures.push_back(std::string(objective) + " label " + std::to_string(k) + ": " +
                                     std::to_string(realized[k]) + " of " + std::to_string(target[k]) +
                                     " feasible; remainder assigned label 0");
            }
        }
    };
    report_shortfall("itm", m.itm_counts, ratio_counts(cfg.itm_ratio, n));
    report_shortfall("ikm", m.ikm_counts, ratio_counts(cfg.ikm_ratio, n));
    report_shortfall("iec", m.iec_counts, ratio_counts(cfg.iec_ratio, n));
    if (diag) {
        diag->warnings.insert(diag->warnings.end(), m.failures.begin(), m.failures.end());
    }
    return corpus;
}

}  // namespace geovlp
