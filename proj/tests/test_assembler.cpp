// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "geovlp/assembler.h"
#include "geovlp/error.h"
#include "geovlp/synth.h"
#include "oracles.h"

namespace geovlp {
namespace {

Vocabulary vocab_of(std::initializer_list<std::string> texts) {
    std::vector<std::string> v(texts);
    return Vocabulary::build(v);
}

DetectedObject object(const std::string& tag, std::int64_t w, std::int64_t h, std::size_t dim = 2) {
    DetectedObject o;
    o.tag = tag;
    o.bbox = {10, 20, w, h};
    o.area = w * h;
    o.feature.assign(dim, 0.5f);
    return o;
}

const SynthWorld& small_world() {
    static const SynthWorld w = [] {
        SynthConfig c;
        c.images = 200;
        c.seed = 5;
        return make_world(c);
    }();
    return w;
}

TEST(Vocabulary, SpecialsFirstAndPadIsZero) {
    const auto v = vocab_of({"b a", "c"});
    EXPECT_EQ(v.tokens()[0], "[PAD]");
    EXPECT_EQ(v.id("[MASK]"), Vocabulary::kMask);
    EXPECT_EQ(v.size(), 8u);
    EXPECT_THROW(Vocabulary::from_tokens({"a"}), Error);
}

TEST(Tokenize, KnownWords) {
    const auto v = vocab_of({"Chinese paper cuttings"});
    EXPECT_EQ(tokenize("Chinese paper cuttings", v).size(), 3u);
}

TEST(Tokenize, UnknownWordIsUnk) {
    const auto v = vocab_of({"gate"});
    EXPECT_EQ(tokenize("zzqx", v), (std::vector<std::int32_t>{Vocabulary::kUnk}));
}

TEST(Tokenize, EmptyString) { EXPECT_TRUE(tokenize("", vocab_of({"gate"})).empty()); }

TEST(Tokenize, PunctuationSplits) {
    EXPECT_EQ(basic_tokenize("Gate, torii."), (std::vector<std::string>{"gate", ",", "torii", "."}));
}

TEST(BuildInput, LayoutArithmetic) {
    const auto v = vocab_of({"red frisbee", "a flying disc", "frisbee"});
    const std::vector<std::string> tags = {"frisbee"};
    const std::vector<DetectedObject> objs = {object("frisbee", 4, 2)};
    const auto in = build_input("red frisbee", "a flying disc", tags, objs, 40, 20, v, AssemblyConfig{});
    ASSERT_EQ(in.token_ids.size(), 10u);
    EXPECT_EQ(in.token_ids[0], Vocabulary::kCls);
    EXPECT_EQ(in.token_ids[3], Vocabulary::kSep);
    EXPECT_EQ(in.token_ids[7], Vocabulary::kSep);
    EXPECT_EQ(in.token_ids[9], Vocabulary::kSep);
    EXPECT_EQ(in.segment_ids, (std::vector<std::int32_t>{0, 0, 0, 0, 1, 1, 1, 1, 2, 2}));
    ASSERT_EQ(in.visual_features.rows, 1u);
    ASSERT_EQ(in.visual_features.cols, 2 + kGeometryWidth);
    const auto row = in.visual_features.row(0);
    EXPECT_FLOAT_EQ(row[2], 10.0f / 40);
    EXPECT_FLOAT_EQ(row[3], 20.0f / 20);
    EXPECT_FLOAT_EQ(row[4], 4.0f / 40);
    EXPECT_FLOAT_EQ(row[5], 2.0f / 20);
    EXPECT_FLOAT_EQ(row[6], 8.0f / 800);
    EXPECT_FLOAT_EQ(row[7], 2.0f);
}

TEST(BuildInput, OverflowCutsKnowledgeFirst) {
    std::string knowledge;
    for (int i = 0; i < 100; ++i) {
        knowledge += "w" + std::to_string(i) + " ";
    }
    const auto v = vocab_of({knowledge, "red frisbee", "disc"});
    const std::vector<std::string> tags = {"disc"};
    const auto in = build_input("red frisbee", knowledge, tags, {}, 10, 10, v, AssemblyConfig{});
    EXPECT_EQ(in.token_ids.size(), 70u);
    EXPECT_EQ(std::count(in.segment_ids.begin(), in.segment_ids.end(), 0), 4);
    EXPECT_EQ(std::count(in.segment_ids.begin(), in.segment_ids.end(), 2), 2);
    EXPECT_EQ(std::count(in.segment_ids.begin(), in.segment_ids.end(), 1), 70 - 6);
}

TEST(BuildInput, SixtyObjectsKeepFiftyLargest) {
    std::vector<DetectedObject> objs;
    for (int i = 0; i < 60; ++i) {
        objs.push_back(object("o", 1 + (i * 37) % 60, 1));
    }
    const auto v = vocab_of({"o"});
    const auto in = build_input("o", "o", {}, objs, 100, 100, v, AssemblyConfig{});
    EXPECT_EQ(in.visual_features.rows, 50u);
    const auto kept = kept_objects(objs, 50);
    const auto top = oracle::top_k_set(objs, 50);
    EXPECT_EQ(std::set<std::size_t>(kept.begin(), kept.end()), top);
    for (std::size_t r = 1; r < kept.size(); ++r) {
        EXPECT_GE(objs[kept[r - 1]].area, objs[kept[r]].area);
    }
}

TEST(Mask, SingleWordIsForced) {
    const auto v = vocab_of({"gate"});
    const std::vector<std::int32_t> ids = {Vocabulary::kCls, Vocabulary::kSep, v.id("gate"), Vocabulary::kSep};
    AssemblyConfig cfg;
    cfg.mlm_rate = 0.01;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Rng rng(s);
        const auto m = apply_mlm_mask(ids, v, cfg, rng);
        ASSERT_FALSE(m.positions.empty());
        EXPECT_EQ(m.positions[0], 2);
        EXPECT_EQ(m.targets[0], v.id("gate"));
    }
}

TEST(Mask, RateAndSplitOverTenThousandSequences) {
    std::vector<std::string> words;
    for (int i = 0; i < 100; ++i) {
        words.push_back("w" + std::to_string(i));
    }
    const auto v = Vocabulary::build(words);
    std::vector<std::int32_t> ids = {Vocabulary::kCls};
    for (int i = 0; i < 100; ++i) {
        ids.push_back(static_cast<std::int32_t>(Vocabulary::kSpecialCount + i));
    }
    ids.push_back(Vocabulary::kSep);
    Rng rng(42);
    std::size_t selected = 0, masked = 0, replaced = 0, kept = 0;
    for (int s = 0; s < 10000; ++s) {
        const auto m = apply_mlm_mask(ids, v, AssemblyConfig{}, rng);
        selected += m.positions.size();
        for (std::size_t j = 0; j < m.positions.size(); ++j) {
            const auto p = static_cast<std::size_t>(m.positions[j]);
            ASSERT_FALSE(Vocabulary::is_special(ids[p]));
            EXPECT_EQ(m.targets[j], ids[p]);
            const auto now = m.masked_ids[p];
            masked += now == Vocabulary::kMask;
            kept += now == ids[p];
            replaced += now != ids[p] && now != Vocabulary::kMask;
            EXPECT_FALSE(now != Vocabulary::kMask && Vocabulary::is_special(now));
        }
    }
    const double rate = static_cast<double>(selected) / (10000.0 * 100);
    EXPECT_NEAR(rate, 0.15, 0.01);
    EXPECT_NEAR(static_cast<double>(masked) / selected, 0.8, 0.01);
    EXPECT_NEAR(static_cast<double>(kept + replaced) / selected, 0.2, 0.01);
    EXPECT_NEAR(static_cast<double>(kept) / selected, 0.1 + 0.1 / 100, 0.01);
}

TEST(Ratio, LargestRemainderCounts) {
    EXPECT_EQ(ratio_counts<3>({2, 1, 1}, 10), (std::array<std::size_t, 3>{5, 3, 2}));
    EXPECT_EQ(ratio_counts<2>({1, 1}, 7), (std::array<std::size_t, 2>{4, 3}));
    oracle::Gen g(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::array<std::uint32_t, 3> r{1 + static_cast<std::uint32_t>(g.below(5)),
                                             1 + static_cast<std::uint32_t>(g.below(5)),
                                             1 + static_cast<std::uint32_t>(g.below(5))};
        const std::size_t n = g.below(1000);
        const auto c = ratio_counts(r, n);
        EXPECT_EQ(c[0] + c[1] + c[2], n);
        const double total = r[0] + r[1] + r[2];
        for (int k = 0; k < 3; ++k) {
            EXPECT_LT(std::abs(static_cast<double>(c[k]) - n * r[k] / total), 1.0);
        }
    }
}

TEST(Ratio, PlanLabelsHonorsFeasibility) {
    oracle::Gen g(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + g.below(300);
        std::vector<bool> ok(n);
        for (std::size_t i = 0; i < n; ++i) {
            ok[i] = g.below(4) != 0;
        }
        Rng rng(trial);
        const auto labels = plan_labels<3>({2, 1, 1}, n, [&](std::size_t i, int) { return bool(ok[i]); }, rng);
        const auto target = ratio_counts<3>({2, 1, 1}, n);
        std::array<std::size_t, 3> got{};
        for (std::size_t i = 0; i < n; ++i) {
            ++got[labels[i]];
            if (labels[i] != 0) {
                EXPECT_TRUE(ok[i]);
            }
        }
        const std::size_t feasible = std::count(ok.begin(), ok.end(), true);
        EXPECT_EQ(got[1] + got[2], std::min(target[1] + target[2], feasible));
        EXPECT_LE(got[1], target[1]);
        EXPECT_LE(got[2], target[2]);
    }
}

TEST(Itm, LabelsSwapTheRightField) {
    const auto& w = small_world();
    Rng rng(1);
    const auto l0 = assign_itm(3, w.records, 0, 50, rng);
    EXPECT_EQ(l0.caption, w.records[3].caption);
    EXPECT_EQ(l0.tags, record_tags(w.records[3], 50));
    const auto l1 = assign_itm(3, w.records, 1, 50, rng);
    EXPECT_EQ(l1.label, 1);
    EXPECT_NE(l1.caption, w.records[3].caption);
    EXPECT_EQ(l1.tags, record_tags(w.records[3], 50));
    const auto l2 = assign_itm(3, w.records, 2, 50, rng);
    EXPECT_EQ(l2.label, 2);
    EXPECT_EQ(l2.caption, w.records[3].caption);
    EXPECT_NE(l2.tags, record_tags(w.records[3], 50));
}

TEST(Itm, RandomDrawsFollowRatio) {
    const auto& w = small_world();
    Rng rng(2);
    std::array<std::size_t, 3> counts{};
    for (int i = 0; i < 10000; ++i) {
        ++counts[assign_itm(i % w.records.size(), w.records, AssemblyConfig{}, rng).label];
    }
    EXPECT_NEAR(counts[0] / 10000.0, 0.5, 0.02);
    EXPECT_NEAR(counts[1] / 10000.0, 0.25, 0.02);
    EXPECT_NEAR(counts[2] / 10000.0, 0.25, 0.02);
}

Corpus build(const SynthWorld& w, std::uint64_t seed, std::size_t threads) {
    CorpusBuildOptions o;
    o.threads = threads;
    return build_corpus(w.records, w.knowledge_base, w.table, o, seed);
}

std::string bytes(const Corpus& c) {
    std::ostringstream out;
    write_corpus_stream(out, c);
    return out.str();
}

TEST(Corpus, OneExamplePerRecordPlusManifest) {
    const auto& w = small_world();
    std::vector<ImageRecord> first(w.records.begin(), w.records.begin() + 100);
    const auto c = build_corpus(first, w.knowledge_base, w.table, CorpusBuildOptions{}, 3);
    EXPECT_EQ(c.examples.size(), 100u);
    EXPECT_EQ(c.manifest.example_count, 100u);
    EXPECT_EQ(c.manifest.seed, 3u);
    EXPECT_EQ(c.manifest.config.at("masking"), "static");
}

TEST(Corpus, SameSeedIsByteIdenticalAcrossThreadCounts) {
    const auto& w = small_world();
    const auto a = bytes(build(w, 9, 1));
    EXPECT_EQ(a, bytes(build(w, 9, 1)));
    EXPECT_EQ(a, bytes(build(w, 9, 3)));
    EXPECT_NE(a, bytes(build(w, 10, 1)));
}

TEST(Corpus, ManifestCountsMatchExamples) {
    const auto c = build(small_world(), 4, 2);
    std::array<std::size_t, 3> itm{}, ikm{};
    std::array<std::size_t, 2> iec{};
    for (const auto& e : c.examples) {
        ++itm[e.itm_label];
        ++ikm[e.ikm_label];
        ++iec[e.iec_label];
    }
    EXPECT_EQ(itm, c.manifest.itm_counts);
    EXPECT_EQ(ikm, c.manifest.ikm_counts);
    EXPECT_EQ(iec, c.manifest.iec_counts);
}

TEST(Corpus, ExampleInvariantsAndLabelProvenance) {
    const auto& w = small_world();
    const auto c = build(w, 6, 1);
    const auto vocab = Vocabulary::from_tokens(c.manifest.vocab);
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : w.records) {
        by_id[r.image_id] = &r;
    }
    std::map<std::string, const VisualConcept*> by_name;
    for (const auto& k : w.knowledge_base) {
        by_name.emplace(oracle::lower(k.name), &k);
    }
    for (const auto& e : c.examples) {
        EXPECT_LE(e.token_ids.size(), 70u);
        EXPECT_LE(e.visual_features.rows, 50u);
        EXPECT_EQ(e.token_ids.front(), Vocabulary::kCls);
        EXPECT_EQ(std::count(e.token_ids.begin(), e.token_ids.end(), Vocabulary::kSep), 3);
        for (std::size_t j = 0; j < e.mlm_positions.size(); ++j) {
            EXPECT_FALSE(Vocabulary::is_special(e.mlm_targets[j]));
        }
        const ImageRecord& src = *by_id.at(e.source_image_id);
        const VisualConcept& own = *by_name.at(oracle::lower(*src.concept_name));
        const VisualConcept& attached = *by_name.at(oracle::lower(e.knowledge_concept));
        const double sim = oracle::similarity(attached.category, own.category, w.table);
        if (e.ikm_label == 1) {
            EXPECT_LT(sim, 0.3);
        }
        if (e.ikm_label == 2) {
            EXPECT_NE(attached.name, own.name);
        }
        if (e.ikm_label == 0) {
            EXPECT_EQ(attached.name, own.name);
        }
        ASSERT_GE(e.located_object, 0);
        EXPECT_TRUE(oracle::top_k_set(src.objects, 10).count(static_cast<std::size_t>(e.located_object)));
        if (e.iec_label == 1) {
            const auto& donor = by_id.at(e.donor_image_id)->objects.at(e.donor_object);
            EXPECT_LT(oracle::similarity(donor.tag, own.category, w.table), 0.3);
            const auto kept = kept_objects(src.objects, 50);
            std::size_t differing = 0;
            for (std::size_t r = 0; r < kept.size(); ++r) {
                const auto row = e.visual_features.row(r);
                const auto& f = src.objects[kept[r]].feature;
                differing += !std::equal(f.begin(), f.end(), row.begin());
            }
            EXPECT_EQ(differing, 1u);
        }
    }
}

TEST(Corpus, EmptyRecordsRejected) {
    const auto& w = small_world();
    EXPECT_THROW(build_corpus({}, w.knowledge_base, w.table, CorpusBuildOptions{}, 1), Error);
}

TEST(Config, Validation) {
    AssemblyConfig c;
    c.mlm_rate = 1.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.ikm_ratio = {2, 0, 1};
    EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace geovlp
