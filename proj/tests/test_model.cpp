// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "geovlp/error.h"
#include "geovlp/gradcheck.h"
#include "geovlp/model.h"
#include "oracles.h"

namespace geovlp {
namespace {

using LD = long double;
using Grid = std::vector<std::vector<LD>>;

Grid layer_norm_ref(const Grid& x, const Matrix<double>& gain, const Matrix<double>& bias) {
    Grid out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        LD mean = 0, var = 0;
        for (const LD v : x[i]) {
            mean += v;
        }
        mean /= x[i].size();
        for (const LD v : x[i]) {
            var += (v - mean) * (v - mean);
        }
        var /= x[i].size();
        for (std::size_t j = 0; j < x[i].size(); ++j) {
            out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5L) * gain(0, j) + bias(0, j);
        }
    }
    return out;
}

Grid affine_ref(const Grid& x, const Matrix<double>& w, const Matrix<double>& b) {
    Grid out(x.size(), std::vector<LD>(static_cast<std::size_t>(w.cols())));
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            LD s = b(0, j);
            for (Eigen::Index k = 0; k < w.rows(); ++k) {
                s += x[i][k] * w(k, j);
            }
            out[i][j] = s;
        }
    }
    return out;
}

struct RefLogits {
    Grid mlm;
    std::vector<LD> itm, ikm, iec;
};

// Scalar re-derivation of the encoder for one example of a batch.
RefLogits reference_forward(const ModelParams<double>& P, const ModelConfig& cfg, const Batch& batch, std::size_t b) {
    const std::size_t H = cfg.hidden, Lt = batch.text_len, Lv = batch.visual_len, L = Lt + Lv;
    Grid x(L, std::vector<LD>(H));
    std::vector<bool> valid(L);
    for (std::size_t i = 0; i < Lt; ++i) {
        const auto tok = batch.token_ids[b * Lt + i];
        const auto seg = batch.segment_ids[b * Lt + i];
        for (std::size_t j = 0; j < H; ++j) {
            x[i][j] = LD(P.token_embedding(tok, j)) + P.position_embedding(i, j) + P.segment_embedding(seg, j);
        }
        valid[i] = batch.text_mask[b * Lt + i] != 0;
    }
    for (std::size_t r = 0; r < Lv; ++r) {
        for (std::size_t j = 0; j < H; ++j) {
            LD s = LD(P.visual_bias(0, j)) + P.segment_embedding(kSegmentVisual, j);
            for (std::size_t k = 0; k < batch.visual_width; ++k) {
                s += LD(batch.visual[(b * Lv + r) * batch.visual_width + k]) * P.visual_weight(k, j);
            }
            x[Lt + r][j] = s;
        }
        valid[Lt + r] = batch.visual_mask[b * Lv + r] != 0;
    }
    Grid h = layer_norm_ref(x, P.embed_ln_gain, P.embed_ln_bias);
    const std::size_t dh = H / cfg.heads;
    for (const auto& W : P.layers) {
        const Grid q = affine_ref(h, W.wq, W.bq), k = affine_ref(h, W.wk, W.bk), v = affine_ref(h, W.wv, W.bv);
        Grid attn(L, std::vector<LD>(H, 0));
        for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
            for (std::size_t i = 0; i < L; ++i) {
                std::vector<LD> w(L, 0);
                LD denom = 0;
                for (std::size_t j = 0; j < L; ++j) {
                    if (!valid[j]) {
                        continue;
                    }
                    LD s = 0;
                    for (std::size_t d = 0; d < dh; ++d) {
                        s += q[i][hd * dh + d] * k[j][hd * dh + d];
                    }
                    w[j] = std::exp(s / std::sqrt(LD(dh)));
                    denom += w[j];
                }
                for (std::size_t j = 0; j < L; ++j) {
                    for (std::size_t d = 0; d < dh; ++d) {
                        attn[i][hd * dh + d] += w[j] / denom * v[j][hd * dh + d];
                    }
                }
            }
        }
        Grid o = affine_ref(attn, W.wo, W.bo);
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < H; ++j) {
                o[i][j] += h[i][j];
            }
        }
        const Grid h1 = layer_norm_ref(o, W.ln1_gain, W.ln1_bias);
        Grid a = affine_ref(h1, W.w1, W.b1);
        for (auto& row : a) {
            for (auto& z : row) {
                z = 0.5L * z * (1 + std::erf(z / std::sqrt(2.0L)));
            }
        }
        Grid f = affine_ref(a, W.w2, W.b2);
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < H; ++j) {
                f[i][j] += h1[i][j];
            }
        }
        h = layer_norm_ref(f, W.ln2_gain, W.ln2_bias);
    }
    RefLogits r;
    const Grid cls = {h[0]};
    r.itm = affine_ref(cls, P.itm_weight, P.itm_bias)[0];
    r.ikm = affine_ref(cls, P.ikm_weight, P.ikm_bias)[0];
    r.iec = affine_ref(cls, P.iec_weight, P.iec_bias)[0];
    Grid rows;
    for (const auto p : batch.mlm_positions[b]) {
        rows.push_back(h[static_cast<std::size_t>(p)]);
    }
    r.mlm = rows.empty() ? Grid{} : affine_ref(rows, P.mlm_weight, P.mlm_bias);
    return r;
}

ModelParams<double> randomized(const ModelConfig& cfg, std::uint64_t seed) {
    auto p = ModelParams<double>::initialize(cfg, seed);
    oracle::Gen g(seed + 1);
    p.visit([&](const std::string&, Matrix<double>& m, ParamKind) {
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] += g.real(-0.3, 0.3);
        }
    });
    return p;
}

Batch batch_of(const ModelConfig& cfg, std::size_t size, std::size_t text_len, std::size_t visual_len,
               std::uint64_t seed) {
    Rng rng(seed);
    return random_batch(cfg, size, text_len, visual_len, rng);
}

TEST(Forward, HeadShapes) {
    const auto cfg = oracle::tiny_config(11, 5);
    const auto batch = batch_of(cfg, 3, 7, 2, 1);
    const auto logits = forward(ModelParams<double>::initialize(cfg, 1), cfg, batch);
    EXPECT_EQ(logits.itm.rows(), 3);
    EXPECT_EQ(logits.itm.cols(), 3);
    EXPECT_EQ(logits.ikm.cols(), 3);
    EXPECT_EQ(logits.iec.cols(), 2);
    ASSERT_EQ(logits.mlm.size(), 3u);
    for (std::size_t b = 0; b < 3; ++b) {
        EXPECT_EQ(logits.mlm[b].rows(), static_cast<Eigen::Index>(batch.mlm_positions[b].size()));
        EXPECT_EQ(logits.mlm[b].cols(), 11);
    }
}

TEST(Forward, MatchesScalarReference) {
    for (const auto& [layers, heads, visual] : {std::tuple{1u, 2u, 2u}, {2u, 4u, 3u}, {2u, 1u, 0u}}) {
        auto cfg = oracle::tiny_config(9, 4);
        cfg.layers = layers;
        cfg.heads = heads;
        const auto params = randomized(cfg, 10 + layers + heads);
        const auto batch = batch_of(cfg, 3, 8, visual, 20 + heads);
        const auto logits = forward(params, cfg, batch);
        for (std::size_t b = 0; b < batch.size; ++b) {
            const auto ref = reference_forward(params, cfg, batch, b);
            for (int c = 0; c < 3; ++c) {
                EXPECT_NEAR(logits.itm(b, c), static_cast<double>(ref.itm[c]), 1e-10);
                EXPECT_NEAR(logits.ikm(b, c), static_cast<double>(ref.ikm[c]), 1e-10);
            }
            for (int c = 0; c < 2; ++c) {
                EXPECT_NEAR(logits.iec(b, c), static_cast<double>(ref.iec[c]), 1e-10);
            }
            for (std::size_t m = 0; m < ref.mlm.size(); ++m) {
                for (std::size_t v = 0; v < 9; ++v) {
                    EXPECT_NEAR(logits.mlm[b](m, v), static_cast<double>(ref.mlm[m][v]), 1e-10);
                }
            }
        }
    }
}

TEST(Loss, ZeroParametersGiveUniformLogits) {
    const auto cfg = oracle::tiny_config(13, 4);
    const auto batch = batch_of(cfg, 2, 6, 2, 3);
    const auto params = ModelParams<double>::zeros(cfg);
    const auto logits = forward(params, cfg, batch);
    EXPECT_TRUE(logits.itm.isZero());
    const auto l = loss(params, cfg, batch);
    EXPECT_NEAR(l.itm, std::log(3.0), 1e-12);
    EXPECT_NEAR(l.ikm, std::log(3.0), 1e-12);
    EXPECT_NEAR(l.iec, std::log(2.0), 1e-12);
    EXPECT_NEAR(l.mlm, std::log(13.0), 1e-12);
    EXPECT_EQ(l.total, ((l.mlm + l.itm) + l.ikm) + l.iec);
}

TEST(Loss, MatchesCrossEntropyOfReferenceLogits) {
    const auto cfg = oracle::tiny_config(9, 4);
    const auto params = randomized(cfg, 4);
    const auto batch = batch_of(cfg, 3, 7, 2, 5);
    LD itm = 0, iec = 0, mlm = 0;
    std::size_t masked = 0;
    for (std::size_t b = 0; b < batch.size; ++b) {
        const auto ref = reference_forward(params, cfg, batch, b);
        std::vector<double> z(ref.itm.begin(), ref.itm.end());
        itm -= std::log(oracle::softmax(z)[batch.itm_labels[b]]);
        z.assign(ref.iec.begin(), ref.iec.end());
        iec -= std::log(oracle::softmax(z)[batch.iec_labels[b]]);
        for (std::size_t m = 0; m < ref.mlm.size(); ++m) {
            z.assign(ref.mlm[m].begin(), ref.mlm[m].end());
            mlm -= std::log(oracle::softmax(z)[batch.mlm_targets[b][m]]);
            ++masked;
        }
    }
    const auto l = loss(params, cfg, batch);
    EXPECT_NEAR(l.itm, static_cast<double>(itm / 3), 1e-10);
    EXPECT_NEAR(l.iec, static_cast<double>(iec / 3), 1e-10);
    EXPECT_NEAR(l.mlm, static_cast<double>(mlm / masked), 1e-10);
}

TEST(Loss, NoMaskedTokensGivesZeroMlm) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto batch = batch_of(cfg, 2, 6, 1, 6);
    for (std::size_t b = 0; b < 2; ++b) {
        batch.mlm_positions[b].clear();
        batch.mlm_targets[b].clear();
    }
    const auto l = loss(randomized(cfg, 6), cfg, batch);
    EXPECT_EQ(l.mlm, 0.0);
    EXPECT_GT(l.itm, 0.0);
}

TEST(Loss, UnlabeledExamplesExcluded) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto batch = batch_of(cfg, 2, 6, 1, 7);
    const auto params = randomized(cfg, 7);
    const auto ref = reference_forward(params, cfg, batch, 0);
    batch.itm_labels[1] = -1;
    std::vector<double> z(ref.itm.begin(), ref.itm.end());
    EXPECT_NEAR(loss(params, cfg, batch).itm, -std::log(oracle::softmax(z)[batch.itm_labels[0]]), 1e-10);
}

TEST(Forward, PaddingDoesNotChangeOutputs) {
    const auto cfg = oracle::tiny_config(9, 4);
    const auto params = randomized(cfg, 8);
    oracle::Gen g(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto short_ex = oracle::random_example(g, 9, 4);
        auto long_ex = oracle::random_example(g, 9, 4);
        while (long_ex.token_ids.size() <= short_ex.token_ids.size()) {
            short_ex = oracle::random_example(g, 9, 4);
            long_ex = oracle::random_example(g, 9, 4);
        }
        const std::vector<TrainingExample> alone = {short_ex};
        const std::vector<TrainingExample> padded = {short_ex, long_ex};
        const auto a = forward(params, cfg, make_batch(alone, 4));
        const auto b = forward(params, cfg, make_batch(padded, 4));
        EXPECT_LT((a.itm.row(0) - b.itm.row(0)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((a.iec.row(0) - b.iec.row(0)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((a.mlm[0] - b.mlm[0]).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Loss, DuplicatedBatchHasSameMeanLoss) {
    const auto cfg = oracle::tiny_config(9, 4);
    const auto params = randomized(cfg, 9).cast<float>();
    oracle::Gen g(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TrainingExample> one = {oracle::random_example(g, 9, 4), oracle::random_example(g, 9, 4)};
        std::vector<TrainingExample> two = one;
        two.insert(two.end(), one.begin(), one.end());
        const auto a = loss(params, cfg, make_batch(one, 4));
        const auto b = loss(params, cfg, make_batch(two, 4));
        EXPECT_NEAR(a.total, b.total, 1e-6);
        EXPECT_NEAR(a.mlm, b.mlm, 1e-6);
    }
}

TEST(Softmax, RowsSumToOne) {
    oracle::Gen g(10);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix<double> z(1 + g.below(4), 1 + g.below(6));
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            z.data()[i] = g.real(-800, 800);
        }
        const auto p = softmax_rows(z);
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
            EXPECT_GE(p.row(r).minCoeff(), 0.0);
        }
    }
}

class GradCheck : public ::testing::TestWithParam<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> {};

TEST_P(GradCheck, RelativeErrorBelowThreshold) {
    const auto [hidden, layers, heads, visual] = GetParam();
    GradCheckConfig gc;
    gc.model = oracle::tiny_config(10, 5);
    gc.model.hidden = hidden;
    gc.model.layers = layers;
    gc.model.heads = heads;
    gc.model.ffn = 2 * hidden;
    gc.visual_len = visual;
    gc.seed = hidden * 7 + layers;
    const auto report = gradient_check(gc);
    EXPECT_LT(report.max_relative_error, 1e-4);
    for (const auto& blk : report.blocks) {
        EXPECT_LT(blk.relative_error, 1e-4) << blk.name;
    }
    RecordProperty("max_relative_error", std::to_string(report.max_relative_error));
}

INSTANTIATE_TEST_SUITE_P(Configs, GradCheck,
                         ::testing::Values(std::tuple{8u, 1u, 2u, 3u}, std::tuple{12u, 2u, 3u, 2u},
                                           std::tuple{16u, 2u, 4u, 0u}, std::tuple{4u, 3u, 1u, 4u}));

TEST(Backward, GradientMatchesLossValue) {
    const auto cfg = oracle::tiny_config(9, 4);
    const auto params = randomized(cfg, 11);
    const auto batch = batch_of(cfg, 2, 6, 2, 11);
    ModelParams<double> grads;
    const auto l = backward(params, cfg, batch, grads);
    EXPECT_EQ(l.total, loss(params, cfg, batch).total);
}

TEST(Backward, UnlabeledHeadHasZeroGradient) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto batch = batch_of(cfg, 2, 6, 2, 12);
    batch.iec_labels = {-1, -1};
    ModelParams<double> grads;
    backward(randomized(cfg, 12), cfg, batch, grads);
    EXPECT_TRUE(grads.iec_weight.isZero(0.0));
    EXPECT_TRUE(grads.iec_bias.isZero(0.0));
    EXPECT_FALSE(grads.itm_weight.isZero(0.0));
}

TEST(Backward, PaddedPositionsGetNoTokenGradient) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto batch = batch_of(cfg, 1, 6, 0, 13);
    std::fill(batch.token_ids.begin(), batch.token_ids.end(), 5);
    batch.token_ids.back() = 8;
    batch.text_mask.back() = 0;
    for (auto& p : batch.mlm_positions[0]) {
        p = std::min(p, 4);
    }
    ModelParams<double> grads;
    backward(randomized(cfg, 13), cfg, batch, grads);
    EXPECT_TRUE(grads.token_embedding.row(8).isZero(0.0));
    EXPECT_FALSE(grads.token_embedding.row(5).isZero(0.0));
}

TEST(Optimizer, LinearDecaySchedule) {
    EXPECT_DOUBLE_EQ(linear_decay_lr(1e-4, 0, 2000), 1e-4);
    EXPECT_DOUBLE_EQ(linear_decay_lr(1e-4, 1000, 2000), 5e-5);
    EXPECT_DOUBLE_EQ(linear_decay_lr(1e-4, 2000, 2000), 0.0);
}

TEST(Optimizer, FirstStepIsSignedUpdateWithDecoupledDecay) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto params = randomized(cfg, 14);
    const auto before = params;
    const auto batch = batch_of(cfg, 2, 6, 2, 14);
    ModelParams<double> grads;
    backward(params, cfg, batch, grads);
    OptimizerConfig oc;
    oc.lr = 1e-3;
    oc.max_steps = 10;
    AdamW<double> opt(params, oc);
    EXPECT_DOUBLE_EQ(opt.step(params, grads), 1e-3);
    const auto check = [&](const Matrix<double>& w0, const Matrix<double>& g, const Matrix<double>& w1, double decay) {
        for (Eigen::Index i = 0; i < w0.size(); ++i) {
            const double gi = g.data()[i];
            const double expect = w0.data()[i] - 1e-3 * (gi / (std::abs(gi) + 1e-8) + decay * w0.data()[i]);
            EXPECT_NEAR(w1.data()[i], expect, 1e-15);
        }
    };
    check(before.itm_weight, grads.itm_weight, params.itm_weight, 0.01);
    check(before.itm_bias, grads.itm_bias, params.itm_bias, 0.0);
    check(before.embed_ln_gain, grads.embed_ln_gain, params.embed_ln_gain, 0.0);
    check(before.layers[0].w1, grads.layers[0].w1, params.layers[0].w1, 0.01);
}

TEST(Optimizer, OneStepReducesLoss) {
    const auto cfg = oracle::tiny_config(9, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto params = ModelParams<double>::initialize(cfg, seed);
        const auto batch = batch_of(cfg, 4, 8, 2, seed);
        OptimizerConfig oc;
        oc.lr = 1e-3;
        oc.max_steps = 10;
        AdamW<double> opt(params, oc);
        const double before = train_step(params, cfg, opt, batch, nullptr).total;
        EXPECT_LT(loss(params, cfg, batch).total, before);
    }
}

TEST(Optimizer, TrainingIsDeterministic) {
    auto cfg = oracle::tiny_config(9, 4);
    cfg.dropout = 0.1;
    const auto run = [&] {
        auto params = ModelParams<float>::initialize(cfg, 3);
        OptimizerConfig oc;
        oc.max_steps = 5;
        AdamW<float> opt(params, oc);
        Rng drop(4);
        const auto batch = batch_of(cfg, 3, 7, 2, 5);
        for (int s = 0; s < 5; ++s) {
            train_step(params, cfg, opt, batch, &drop);
        }
        std::ostringstream out;
        write_checkpoint_stream(out, {cfg, {}, params});
        return out.str();
    };
    EXPECT_EQ(run(), run());
}

TEST(Optimizer, NonFiniteLossLeavesParametersUntouched) {
    const auto cfg = oracle::tiny_config(9, 4);
    auto params = ModelParams<double>::initialize(cfg, 1);
    params.itm_bias(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const auto w = params.itm_weight;
    AdamW<double> opt(params, OptimizerConfig{});
    try {
        train_step(params, cfg, opt, batch_of(cfg, 2, 6, 1, 1), nullptr);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::non_finite_loss);
    }
    EXPECT_EQ(params.itm_weight, w);
    EXPECT_EQ(opt.steps_taken(), 0u);
}

TEST(Shapes, Mismatches) {
    const auto cfg = oracle::tiny_config(9, 4);
    const auto params = ModelParams<double>::zeros(cfg);
    const auto expect_shape = [&](const Batch& b) {
        try {
            forward(params, cfg, b);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
        }
    };
    expect_shape(batch_of(cfg, 1, 25, 0, 1));
    auto wide = cfg;
    wide.visual_in = 6;
    expect_shape(batch_of(wide, 1, 6, 2, 1));
    auto bad_token = batch_of(cfg, 1, 6, 0, 1);
    bad_token.token_ids[1] = 9;
    expect_shape(bad_token);
    oracle::Gen g(1);
    std::vector<TrainingExample> mixed = {oracle::random_example(g, 9, 4), oracle::random_example(g, 9, 5)};
    mixed[0].visual_features = {1, 4, {0, 0, 0, 0}};
    mixed[1].visual_features = {1, 5, {0, 0, 0, 0, 0}};
    EXPECT_THROW(make_batch(mixed, 4), Error);
}

TEST(Checkpoint, RoundTripsRandomModels) {
    oracle::Gen g(15);
    for (int trial = 0; trial < 100; ++trial) {
        ModelConfig cfg = oracle::tiny_config(6 + g.below(20), 1 + g.below(8));
        cfg.heads = 1 + g.below(2);
        cfg.hidden = cfg.heads * (1 + g.below(4));
        cfg.layers = 1 + g.below(3);
        cfg.ffn = 1 + g.below(12);
        cfg.dropout = g.unit() * 0.5;
        Checkpoint ck{cfg, {{"step", trial}, {"note", g.text()}}, randomized(cfg, trial).cast<float>()};
        std::stringstream buf;
        write_checkpoint_stream(buf, ck);
        const auto back = read_checkpoint_stream(buf);
        EXPECT_EQ(back.config, cfg);
        EXPECT_EQ(back.metadata, ck.metadata);
        std::vector<Matrix<float>> a, b;
        ck.params.visit([&](const std::string&, const Matrix<float>& m, ParamKind) { a.push_back(m); });
        back.params.visit([&](const std::string&, const Matrix<float>& m, ParamKind) { b.push_back(m); });
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_EQ(a[i], b[i]);
        }
    }
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
    const auto cfg = oracle::tiny_config(9, 4);
    std::ostringstream out;
    write_checkpoint_stream(out, {cfg, {}, ModelParams<float>::zeros(cfg)});
    std::string bytes = out.str();
    EXPECT_EQ(bytes.substr(0, 8), "GVLPCKPT");
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_checkpoint_stream(truncated), Error);
    bytes[0] = 'X';
    std::istringstream bad(bytes);
    EXPECT_THROW(read_checkpoint_stream(bad), Error);
}

TEST(Config, Validation) {
    auto cfg = oracle::tiny_config(9, 4);
    cfg.heads = 3;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = oracle::tiny_config(9, 4);
    cfg.dropout = 1.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = oracle::tiny_config(9, 4);
    EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
}

}  // namespace
}  // namespace geovlp
