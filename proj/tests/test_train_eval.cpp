// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "geovlp/error.h"
#include "geovlp/synth.h"
#include "geovlp/train_eval.h"
#include "oracles.h"

namespace geovlp {
namespace {

ModelConfig small_model() {
    ModelConfig m;
    m.hidden = 16;
    m.layers = 1;
    m.heads = 2;
    m.ffn = 32;
    return m;
}

const SynthTask& task() {
    static const SynthTask t = [] {
        SynthTaskConfig c;
        c.seed = 7;
        return make_zero_shot_task(c);
    }();
    return t;
}

const Corpus& pairing_corpus() {
    static const Corpus c = make_pairing_corpus(task(), AssemblyConfig{}, 0.3, 11, 1);
    return c;
}

TrainRunConfig short_run(std::uint64_t seed) {
    TrainRunConfig r;
    r.batch_size = 4;
    r.max_steps = 12;
    r.lr = 1e-3;
    r.seed = seed;
    return r;
}

std::string checkpoint_bytes(const Checkpoint& c) {
    std::ostringstream out;
    write_checkpoint_stream(out, c);
    return out.str();
}

TEST(Train, OneMetricsRowPerStepWithScheduledRate) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    std::ostringstream log;
    const auto r = train(pairing_corpus(), cfg, short_run(1), &log);
    ASSERT_EQ(r.metrics.size(), 12u);
    for (std::size_t i = 0; i < r.metrics.size(); ++i) {
        const auto& m = r.metrics[i];
        EXPECT_EQ(m.step, i + 1);
        EXPECT_DOUBLE_EQ(m.lr, linear_decay_lr(1e-3, i, 12));
        EXPECT_EQ(m.loss.total, total_loss(m.loss.mlm, m.loss.itm, m.loss.ikm, m.loss.iec));
    }
    std::istringstream back(log.str());
    EXPECT_EQ(read_metrics_stream(back), r.metrics);
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    const auto a = train(pairing_corpus(), cfg, short_run(3));
    const auto b = train(pairing_corpus(), cfg, short_run(3));
    const auto c = train(pairing_corpus(), cfg, short_run(4));
    EXPECT_EQ(a.metrics, b.metrics);
    EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
    EXPECT_NE(checkpoint_bytes(a.checkpoint), checkpoint_bytes(c.checkpoint));
}

TEST(Train, CheckpointSinkCalledAtInterval) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    auto run = short_run(1);
    run.checkpoint_interval = 5;
    std::vector<std::size_t> steps;
    const auto r = train(pairing_corpus(), cfg, run, nullptr, [&](std::size_t s, const Checkpoint&) { steps.push_back(s); });
    EXPECT_EQ(steps.front(), 5u);
    EXPECT_EQ(steps[1], 10u);
    EXPECT_EQ(steps.back(), 12u);
}

TEST(Train, LossFallsOnToyCorpus) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    auto run = short_run(2);
    run.max_steps = 150;
    const auto r = train(pairing_corpus(), cfg, run);
    const auto mean = [&](std::size_t from, std::size_t to) {
        double s = 0;
        for (std::size_t i = from; i < to; ++i) {
            s += r.metrics[i].loss.total;
        }
        return s / static_cast<double>(to - from);
    };
    EXPECT_LT(mean(140, 150), mean(0, 10));
}

TEST(Train, RunConfigValidation) {
    auto run = short_run(1);
    run.batch_size = 0;
    EXPECT_THROW(run.validate(10), Error);
    run = short_run(1);
    run.lr = -1;
    EXPECT_THROW(run.validate(10), Error);
    EXPECT_THROW(short_run(1).validate(0), Error);
}

TEST(Corpus, ManifestMismatchDetected) {
    Corpus c = pairing_corpus();
    EXPECT_NO_THROW(check_corpus(c));
    c.manifest.example_count += 1;
    try {
        check_corpus(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::corpus_manifest_mismatch);
    }
    c = pairing_corpus();
    ++c.manifest.itm_counts[0];
    EXPECT_THROW(check_corpus(c), Error);
    c = pairing_corpus();
    c.examples[0].token_ids[1] = static_cast<std::int32_t>(c.manifest.vocab.size());
    EXPECT_THROW(check_corpus(c), Error);
}

TEST(Corpus, ModelConfigTakesCorpusShapes) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    EXPECT_EQ(cfg.vocab_size, pairing_corpus().manifest.vocab.size());
    EXPECT_EQ(cfg.visual_in, corpus_visual_width(pairing_corpus()));
    EXPECT_EQ(cfg.hidden, 16u);
}

TEST(Metrics, JsonRoundTrip) {
    oracle::Gen g(3);
    std::ostringstream out;
    std::vector<StepMetrics> rows;
    for (std::size_t i = 0; i < 100; ++i) {
        StepMetrics m;
        m.step = i + 1;
        m.lr = g.unit() * 1e-3;
        m.loss = {g.unit(), g.unit() * 2, g.unit() / 3, g.real(0, 1e-9), 0};
        m.loss.total = total_loss(m.loss.mlm, m.loss.itm, m.loss.ikm, m.loss.iec);
        rows.push_back(m);
        out << to_json(m).dump() << '\n';
    }
    std::istringstream in(out.str());
    EXPECT_EQ(read_metrics_stream(in), rows);
}

TEST(Metrics, MalformedLineReported) {
    std::istringstream in("{\"step\":1}\nnot json\n");
    EXPECT_THROW(read_metrics_stream(in), Error);
}

TEST(ZeroShotTaskFile, RandomRoundTrip) {
    oracle::Gen g(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = oracle::random_task(g);
        EXPECT_EQ(zero_shot_task_from_json(nlohmann::json::parse(to_json(t).dump())), t);
    }
}

TEST(ZeroShotTaskFile, GoldOutOfRangeRejected) {
    auto t = task().task;
    t.items[0].gold = t.classes.size();
    EXPECT_THROW(t.validate(), Error);
}

TEST(Argmax, FirstIndexWinsTies) {
    EXPECT_EQ(argmax_first(std::vector<double>{0.2, 0.5, 0.5}), 1u);
    EXPECT_EQ(argmax_first(std::vector<double>{1, 1, 1}), 0u);
    EXPECT_EQ(argmax_first(std::vector<double>{-3}), 0u);
}

TEST(Argmax, InvariantUnderPositiveAffineMaps) {
    oracle::Gen g(5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> s(1 + g.below(8));
        for (auto& x : s) {
            x = static_cast<double>(g.below(5));
        }
        const double a = 0.5 + g.below(4), b = g.real(-10, 10);
        std::vector<double> t = s;
        for (auto& x : t) {
            x = a * x + b;
        }
        const auto i = argmax_first(s);
        EXPECT_EQ(argmax_first(t), i);
        for (std::size_t j = 0; j < s.size(); ++j) {
            EXPECT_TRUE(j < i ? s[j] < s[i] : s[j] <= s[i]);
        }
    }
}

TEST(ZeroShot, ZeroedModelPredictsFirstClass) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    const auto vocab = Vocabulary::from_tokens(pairing_corpus().manifest.vocab);
    const auto r = zero_shot_classify(ModelParams<float>::zeros(cfg), cfg, task().task, vocab, AssemblyConfig{});
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        EXPECT_EQ(r.predictions[i], 0u);
        for (const double s : r.scores[i]) {
            EXPECT_NEAR(s, 1.0 / 3, 1e-6);
        }
    }
}

TEST(ZeroShot, ClassPermutationMapsPredictions) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    const auto vocab = Vocabulary::from_tokens(pairing_corpus().manifest.vocab);
    const auto params = ModelParams<float>::initialize(cfg, 9);
    const auto& base = task().task;
    const auto r = zero_shot_classify(params, cfg, base, vocab, AssemblyConfig{});
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    auto shuffled = base;
    for (std::size_t j = 0; j < perm.size(); ++j) {
        shuffled.classes[j] = base.classes[perm[j]];
    }
    for (auto& item : shuffled.items) {
        item.gold = static_cast<std::size_t>(std::find(perm.begin(), perm.end(), item.gold) - perm.begin());
    }
    const auto p = zero_shot_classify(params, cfg, shuffled, vocab, AssemblyConfig{}, 2);
    EXPECT_EQ(p.correct, r.correct);
    for (std::size_t i = 0; i < base.items.size(); ++i) {
        for (std::size_t j = 0; j < perm.size(); ++j) {
            EXPECT_EQ(p.scores[i][j], r.scores[i][perm[j]]);
        }
        EXPECT_EQ(perm[p.predictions[i]], r.predictions[i]);
    }
}

TEST(ZeroShot, AccuracyIsRecountOfPredictions) {
    const auto cfg = model_config_for(pairing_corpus(), small_model());
    const auto vocab = Vocabulary::from_tokens(pairing_corpus().manifest.vocab);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto r = zero_shot_classify(ModelParams<float>::initialize(cfg, seed), cfg, task().task, vocab,
                                          AssemblyConfig{});
        std::size_t correct = 0;
        for (std::size_t i = 0; i < r.predictions.size(); ++i) {
            EXPECT_EQ(r.predictions[i], argmax_first(r.scores[i]));
            correct += r.predictions[i] == task().task.items[i].gold;
        }
        EXPECT_EQ(r.correct, correct);
        EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / task().task.items.size());
    }
}

std::vector<StepMetrics> random_metrics(oracle::Gen& g, std::size_t n) {
    std::vector<StepMetrics> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].step = i + 1;
        rows[i].loss = {g.unit(), g.unit(), g.unit(), g.unit(), 0};
        rows[i].loss.total = total_loss(rows[i].loss.mlm, rows[i].loss.itm, rows[i].loss.ikm, rows[i].loss.iec);
    }
    return rows;
}

TEST(Report, SummaryMatchesRecount) {
    oracle::Gen g(6);
    for (int trial = 0; trial < 100; ++trial) {
        const auto rows = random_metrics(g, 1 + g.below(50));
        const auto rep = summarize(rows);
        ASSERT_EQ(rep.components.size(), 5u);
        EXPECT_EQ(rep.steps, rows.size());
        double mean_sum = 0;
        for (std::size_t c = 0; c < 5; ++c) {
            const auto pick = [&](const StepMetrics& m) {
                const double v[] = {m.loss.mlm, m.loss.itm, m.loss.ikm, m.loss.iec, m.loss.total};
                return v[c];
            };
            double sum = 0, mn = pick(rows[0]);
            for (const auto& m : rows) {
                sum += pick(m);
                mn = std::min(mn, pick(m));
            }
            const auto& s = rep.components[c];
            EXPECT_NEAR(s.mean, sum / rows.size(), 1e-12);
            EXPECT_EQ(s.first, pick(rows.front()));
            EXPECT_EQ(s.last, pick(rows.back()));
            EXPECT_EQ(s.min, mn);
            if (c < 4) {
                mean_sum += s.mean;
            }
        }
        EXPECT_NEAR(rep.component_mean_sum, mean_sum, 1e-12);
        EXPECT_NEAR(rep.components[4].mean, rep.component_mean_sum, 1e-12);
    }
}

TEST(Report, EmptyLogRejected) { EXPECT_THROW(summarize(std::vector<StepMetrics>{}), Error); }

TEST(Report, FilesWritten) {
    oracle::Gen g(7);
    const auto rows = random_metrics(g, 10);
    const auto rep = summarize(rows);
    const auto text = format_report(rep);
    for (const char* name : {"mlm", "itm", "ikm", "iec", "total"}) {
        EXPECT_NE(text.find(name), std::string::npos);
    }
    const auto dir = std::filesystem::temp_directory_path() / "geovlp_report_test";
    std::filesystem::remove_all(dir);
    write_report_files(dir, rep, rows);
    EXPECT_TRUE(std::filesystem::exists(dir / "summary.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "summary.json"));
    std::ifstream curves(dir / "loss_curves.tsv");
    std::size_t lines = 0;
    for (std::string line; std::getline(curves, line);) {
        ++lines;
    }
    EXPECT_EQ(lines, rows.size() + 1);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace geovlp
