// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/selftest.h"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "geovlp/assembler.h"
#include "geovlp/concept_extract.h"
#include "geovlp/embed_sim.h"
#include "geovlp/error.h"
#include "geovlp/gradcheck.h"
#include "geovlp/model.h"
#include "geovlp/negatives.h"
#include "geovlp/synth.h"

namespace geovlp {

namespace {

std::vector<ParseToken> tokens(std::initializer_list<ParseToken> list) { return list; }

std::string check_extraction() {
    const auto shop = tokens({{1, "Chinese", "ADJ", 3, "amod"},
                              {2, "paper", "NOUN", 3, "compound"},
                              {3, "cuttings", "NOUN", 0, "root"},
                              {4, "in", "ADP", 6, "case"},
                              {5, "a", "DET", 6, "det"},
                              {6, "shop", "NOUN", 3, "nmod"},
                              {7, ".", "PUNCT", 3, "punct"}});
    const auto torii = tokens({{1, "A", "DET", 2, "det"},
                               {2, "torii", "NOUN", 7, "nsubj"},
                               {3, "is", "AUX", 7, "cop"},
                               {4, "a", "DET", 7, "det"},
                               {5, "traditional", "ADJ", 7, "amod"},
                               {6, "Japanese", "ADJ", 7, "amod"},
                               {7, "gate", "NOUN", 0, "root"},
                               {8, "found", "VERB", 7, "acl"},
                               {9, ".", "PUNCT", 7, "punct"}});
    std::string a = extract_concept_name(shop).text;
    std::string b = extract_category(torii).text;
    if (a != "Chinese paper cuttings" || b != "traditional Japanese gate") {
        return "got '" + a + "' and '" + b + "'";
    }
    return {};
}

std::string check_analytic_loss() {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.ffn = 16;
    cfg.vocab_size = 12;
    cfg.visual_in = 5;
    cfg.max_positions = 6;
    cfg.dropout = 0.0;
    Rng rng(5);
    const Batch batch = random_batch(cfg, 3, 6, 2, rng);
    const LossBreakdown l = loss(ModelParams<double>::zeros(cfg), cfg, batch);
    std::ostringstream why;
    if (std::abs(l.ikm - std::log(3.0)) > 1e-12 || std::abs(l.itm - std::log(3.0)) > 1e-12 ||
        std::abs(l.iec - std::numbers::ln2) > 1e-12 || std::abs(l.mlm - std::log(12.0)) > 1e-12) {
        why << "ikm " << l.ikm << " iec " << l.iec;
    }
    if (l.total != ((l.mlm + l.itm) + l.ikm) + l.iec) {
        why << " total differs from component sum";
    }
    return why.str();
}

std::string check_gradients() {
    GradCheckConfig c;
    c.model.hidden = 8;
    c.model.heads = 2;
    c.model.layers = 1;
    c.model.ffn = 16;
    c.model.vocab_size = 12;
    c.model.visual_in = 5;
    c.model.max_positions = 6;
    c.seed = 3;
    const GradCheckReport r = gradient_check(c);
    if (!(r.max_relative_error < 1e-4)) {
        return "max relative error " + std::to_string(r.max_relative_error);
    }
    return {};
}

std::string check_samplers() {
    SynthConfig wc;
    wc.images = 60;
    wc.clusters = 4;
    wc.concepts_per_cluster = 6;
    wc.seed = 17;
    const SynthWorld w = make_world(wc);
    SamplerConfig cfg;
    cfg.ikm_candidate_count = 10;
    cfg.iec_sample_images = 8;
    const auto sim = [&](const std::string& a, const std::string& b) {
        const auto x = phrase_embedding(a, w.table);
        const auto y = phrase_embedding(b, w.table);
        double dot = 0, nx = 0, ny = 0;
        for (std::size_t i = 0; i < x.vector.size(); ++i) {
            dot += x.vector[i] * y.vector[i];
            nx += x.vector[i] * x.vector[i];
            ny += y.vector[i] * y.vector[i];
        }
        return nx == 0 || ny == 0 ? 0.0 : dot / std::sqrt(nx * ny);
    };
    for (std::size_t t = 0; t < 12; ++t) {
        const VisualConcept& target = w.knowledge_base[t * 2];
        Rng r3(t), r2(t + 100);
        const KnowledgeSelection s3 = select_type3_knowledge(target, w.knowledge_base, w.table, cfg, r3);
        std::size_t best = s3.considered.front();
        for (const std::size_t i : s3.considered) {
            if (sim(target.category, w.knowledge_base[i].category) >
                sim(target.category, w.knowledge_base[best].category)) {
                best = i;
            }
        }
        if (best != s3.pool_index) {
            return "type-3 argmax disagrees for " + target.name;
        }
        const KnowledgeSelection s2 = select_type2_knowledge(target, w.knowledge_base, w.table, cfg, r2);
        if (!(sim(target.category, w.knowledge_base[s2.pool_index].category) < cfg.tau)) {
            return "type-2 pick is not dissimilar for " + target.name;
        }
    }
    for (std::size_t i = 0; i < 10; ++i) {
        ImageRecord rec = w.records[i];
        std::string category;
        for (const auto& c : w.knowledge_base) {
            if (c.name == *rec.concept_name) {
                category = c.category;
            }
        }
        const auto top = top_objects_by_area(rec, cfg.top_k_objects);
        const std::size_t located = locate_concept(rec, category, w.table, cfg);
        for (const std::size_t j : top) {
            if (sim(category, rec.objects[j].tag) > sim(category, rec.objects[located].tag)) {
                return "located object is not the best match in " + rec.image_id;
            }
        }
        Rng rng(i);
        const ReplacementRecord rep = select_iec_replacement(rec, located, category, w.records, w.table, cfg, rng);
        const auto& donor = *std::find_if(w.records.begin(), w.records.end(),
                                          [&](const ImageRecord& r) { return r.image_id == rep.donor_image_id; });
        if (!(sim(category, donor.objects[rep.donor_object_index].tag) < cfg.tau)) {
            return "donor is category-similar in " + rec.image_id;
        }
    }
    return {};
}

std::string check_round_trip_and_determinism() {
    SynthConfig wc;
    wc.images = 40;
    wc.clusters = 4;
    wc.concepts_per_cluster = 5;
    wc.seed = 23;
    const SynthWorld w = make_world(wc);
    CorpusBuildOptions opts;
    opts.threads = 1;
    const Corpus a = build_corpus(w.records, w.knowledge_base, w.table, opts, 9);
    opts.threads = 3;
    const Corpus b = build_corpus(w.records, w.knowledge_base, w.table, opts, 9);
    std::ostringstream sa, sb;
    write_corpus_stream(sa, a);
    write_corpus_stream(sb, b);
    if (sa.str() != sb.str()) {
        return "corpus bytes depend on the thread count";
    }
    std::istringstream in(sa.str());
    if (!(read_corpus_stream(in) == a)) {
        return "corpus round trip changed the data";
    }
    std::ostringstream rs;
    write_records_stream(rs, w.records);
    std::istringstream rin(rs.str());
    if (read_records_stream(rin) != w.records) {
        return "record round trip changed the data";
    }
    return {};
}

}  // namespace

std::vector<SelfTestResult> run_selftest() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> checks = {
        {"extraction", check_extraction},
        {"analytic-loss", check_analytic_loss},
        {"gradients", check_gradients},
        {"samplers", check_samplers},
        {"round-trip-determinism", check_round_trip_and_determinism},
    };
    std::vector<SelfTestResult> out;
    for (const auto& [name, fn] : checks) {
        SelfTestResult r{name, false, {}};
        try {
            r.detail = fn();
            r.passed = r.detail.empty();
        } catch (const std::exception& e) {
            r.detail = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace geovlp
