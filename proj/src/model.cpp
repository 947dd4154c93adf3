// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "geovlp/error.h"

namespace geovlp {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct Block {
    std::string name;
    Matrix<T>* value;
    ParamKind kind;
};

template <typename P>
auto collect_blocks(P& p) {
    using M = std::remove_reference_t<decltype(p.token_embedding)>;
    using T = typename M::Scalar;
    std::vector<Block<T>> out;
    const auto add = [&](std::string name, auto& m, ParamKind kind) {
        out.push_back({std::move(name), const_cast<Matrix<T>*>(&m), kind});
    };
    add("token_embedding", p.token_embedding, ParamKind::weight);
    add("position_embedding", p.position_embedding, ParamKind::weight);
    add("segment_embedding", p.segment_embedding, ParamKind::weight);
    add("visual_weight", p.visual_weight, ParamKind::weight);
    add("visual_bias", p.visual_bias, ParamKind::bias);
    add("embed_ln_gain", p.embed_ln_gain, ParamKind::norm);
    add("embed_ln_bias", p.embed_ln_bias, ParamKind::norm);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& L = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        add(pre + "wq", L.wq, ParamKind::weight);
        add(pre + "bq", L.bq, ParamKind::bias);
        add(pre + "wk", L.wk, ParamKind::weight);
        add(pre + "bk", L.bk, ParamKind::bias);
        add(pre + "wv", L.wv, ParamKind::weight);
        add(pre + "bv", L.bv, ParamKind::bias);
        add(pre + "wo", L.wo, ParamKind::weight);
        add(pre + "bo", L.bo, ParamKind::bias);
        add(pre + "ln1_gain", L.ln1_gain, ParamKind::norm);
        add(pre + "ln1_bias", L.ln1_bias, ParamKind::norm);
        add(pre + "w1", L.w1, ParamKind::weight);
        add(pre + "b1", L.b1, ParamKind::bias);
        add(pre + "w2", L.w2, ParamKind::weight);
        add(pre + "b2", L.b2, ParamKind::bias);
        add(pre + "ln2_gain", L.ln2_gain, ParamKind::norm);
        add(pre + "ln2_bias", L.ln2_bias, ParamKind::norm);
    }
    add("mlm_weight", p.mlm_weight, ParamKind::weight);
    add("mlm_bias", p.mlm_bias, ParamKind::bias);
    add("itm_weight", p.itm_weight, ParamKind::weight);
    add("itm_bias", p.itm_bias, ParamKind::bias);
    add("ikm_weight", p.ikm_weight, ParamKind::weight);
    add("ikm_bias", p.ikm_bias, ParamKind::bias);
    add("iec_weight", p.iec_weight, ParamKind::weight);
    add("iec_bias", p.iec_bias, ParamKind::bias);
    return out;
}

template <typename T>
void add_bias(Matrix<T>& x, const Matrix<T>& bias) {
    x.rowwise() += bias.row(0);
}

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    return cdf + x * pdf;
}

template <typename T>
struct NormCache {
    Matrix<T> xhat;
    std::vector<T> rstd;
};

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, NormCache<T>& cache) {
    const Eigen::Index n = x.cols();
    cache.xhat.resize(x.rows(), n);
    cache.rstd.resize(static_cast<std::size_t>(x.rows()));
    Matrix<T> y(x.rows(), n);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T mean = x.row(r).sum() / T(n);
        const auto centered = (x.row(r).array() - mean).matrix();
        const T var = centered.squaredNorm() / T(n);
        const T rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
        cache.rstd[static_cast<std::size_t>(r)] = rstd;
        cache.xhat.row(r) = centered * rstd;
        y.row(r) = cache.xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
    }
    return y;
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const NormCache<T>& cache,
                              Matrix<T>& dgain, Matrix<T>& dbias) {
    const Eigen::Index n = dy.cols();
    dgain.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
    dbias.row(0) += dy.colwise().sum();
    Matrix<T> dx(dy.rows(), n);
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const auto dxhat = dy.row(r).cwiseProduct(gain.row(0));
        const T mean_d = dxhat.sum() / T(n);
        const T mean_dx = dxhat.dot(cache.xhat.row(r)) / T(n);
        dx.row(r) = ((dxhat.array() - mean_d) - cache.xhat.row(r).array() * mean_dx) *
                    cache.rstd[static_cast<std::size_t>(r)];
    }
    return dx;
}

// Inverted-dropout mask; empty when not training.
template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
    if (rng == nullptr || p <= 0.0) {
        return {};
    }
    Matrix<T> mask(rows, cols);
    const T keep = T(1) / T(1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = rng->uniform01() < p ? T(0) : keep;
    }
    return mask;
}

template <typename T>
void apply_mask(Matrix<T>& x, const Matrix<T>& mask) {
    if (mask.size() != 0) {
        x.array() *= mask.array();
    }
}

template <typename T>
struct LayerCache {
    Matrix<T> input;
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> probs;
    Matrix<T> attn;
    Matrix<T> attn_dropout;
    NormCache<T> ln1;
    Matrix<T> h1;
    Matrix<T> pre_act;
    Matrix<T> act;
    Matrix<T> ffn_dropout;
    NormCache<T> ln2;
};

template <typename T>
struct ExampleCache {
    Matrix<T> visual_in;
    NormCache<T> embed_ln;
    Matrix<T> embed_dropout;
    std::vector<LayerCache<T>> layers;
    Matrix<T> output;
    std::vector<bool> key_valid;
};

void check_batch(const ModelConfig& cfg, const Batch& batch) {
    const auto fail = [](const std::string& what) { throw Error(ErrorKind::shape_mismatch, what); };
    if (batch.text_len == 0) {
        fail("batch has no text positions");
    }
    if (batch.text_len > cfg.max_positions) {
        fail("text length " + std::to_string(batch.text_len) + " exceeds max_positions " +
             std::to_string(cfg.max_positions));
    }
    if (batch.visual_len > 0 && batch.visual_width != cfg.visual_in) {
        fail("visual width " + std::to_string(batch.visual_width) + " differs from model visual_in " +
             std::to_string(cfg.visual_in));
    }
    if (batch.token_ids.size() != batch.size * batch.text_len ||
        batch.segment_ids.size() != batch.token_ids.size() || batch.text_mask.size() != batch.token_ids.size() ||
        batch.visual.size() != batch.size * batch.visual_len * batch.visual_width ||
        batch.visual_mask.size() != batch.size * batch.visual_len || batch.mlm_positions.size() != batch.size ||
        batch.mlm_targets.size() != batch.size || batch.itm_labels.size() != batch.size ||
        batch.ikm_labels.size() != batch.size || batch.iec_labels.size() != batch.size) {
        fail("batch buffers are inconsistent with its declared shape");
    }
    for (const auto id : batch.token_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            fail("token id " + std::to_string(id) + " outside the vocabulary");
        }
    }
    for (const auto s : batch.segment_ids) {
        if (s < 0 || static_cast<std::size_t>(s) >= kSegmentVisual) {
            fail("segment id " + std::to_string(s) + " out of range");
        }
    }
    for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t m = 0; m < batch.mlm_positions[b].size(); ++m) {
            const auto p = batch.mlm_positions[b][m];
            const auto t = batch.mlm_targets[b][m];
            if (p < 0 || static_cast<std::size_t>(p) >= batch.text_len || t < 0 ||
                static_cast<std::size_t>(t) >= cfg.vocab_size) {
                fail("masked position or target out of range");
            }
        }
    }
}

template <typename T>
Matrix<T> encode(const ModelParams<T>& P, const ModelConfig& cfg, const Batch& batch, std::size_t b,
                 ExampleCache<T>& cache, Rng* rng) {
    const auto Lt = static_cast<Eigen::Index>(batch.text_len);
    const auto Lv = static_cast<Eigen::Index>(batch.visual_len);
    const Eigen::Index L = Lt + Lv;
    const auto H = static_cast<Eigen::Index>(cfg.hidden);

    Matrix<T> x(L, H);
    for (Eigen::Index i = 0; i < Lt; ++i) {
        const std::size_t at = b * batch.text_len + static_cast<std::size_t>(i);
        x.row(i) = P.token_embedding.row(batch.token_ids[at]) + P.position_embedding.row(i) +
                   P.segment_embedding.row(batch.segment_ids[at]);
    }
    cache.key_valid.assign(static_cast<std::size_t>(L), false);
    for (Eigen::Index i = 0; i < Lt; ++i) {
        cache.key_valid[static_cast<std::size_t>(i)] = batch.text_mask[b * batch.text_len + static_cast<std::size_t>(i)] != 0;
    }
    if (Lv > 0) {
        const auto W = static_cast<Eigen::Index>(batch.visual_width);
        cache.visual_in.resize(Lv, W);
        const float* src = batch.visual.data() + b * batch.visual_len * batch.visual_width;
        for (Eigen::Index i = 0; i < Lv * W; ++i) {
            cache.visual_in.data()[i] = static_cast<T>(src[i]);
        }
        Matrix<T> projected = cache.visual_in * P.visual_weight;
        add_bias(projected, P.visual_bias);
        projected.rowwise() += P.segment_embedding.row(kSegmentVisual);
        x.bottomRows(Lv) = projected;
        for (Eigen::Index j = 0; j < Lv; ++j) {
            cache.key_valid[static_cast<std::size_t>(Lt + j)] =
                batch.visual_mask[b * batch.visual_len + static_cast<std::size_t>(j)] != 0;
        }
    }

    Matrix<T> h = layer_norm(x, P.embed_ln_gain, P.embed_ln_bias, cache.embed_ln);
    cache.embed_dropout = dropout_mask<T>(L, H, cfg.dropout, rng);
    apply_mask(h, cache.embed_dropout);

    const auto heads = static_cast<Eigen::Index>(cfg.heads);
    const Eigen::Index dh = H / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    cache.layers.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const LayerParams<T>& W = P.layers[l];
        LayerCache<T>& c = cache.layers[l];
        c.input = h;
        c.q = h * W.wq;
        add_bias(c.q, W.bq);
        c.k = h * W.wk;
        add_bias(c.k, W.bk);
        c.v = h * W.wv;
        add_bias(c.v, W.bv);
        c.attn.resize(L, H);
        c.probs.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index hd = 0; hd < heads; ++hd) {
            Matrix<T> s = (c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose()) * scale;
            Matrix<T>& p = c.probs[static_cast<std::size_t>(hd)];
            p.setZero(L, L);
            for (Eigen::Index i = 0; i < L; ++i) {
                T mx = -std::numeric_limits<T>::infinity();
                for (Eigen::Index j = 0; j < L; ++j) {
                    if (cache.key_valid[static_cast<std::size_t>(j)]) {
                        mx = std::max(mx, s(i, j));
                    }
                }
                T denom = 0;
                for (Eigen::Index j = 0; j < L; ++j) {
                    if (cache.key_valid[static_cast<std::size_t>(j)]) {
                        p(i, j) = std::exp(s(i, j) - mx);
                        denom += p(i, j);
                    }
                }
                p.row(i) /= denom;
            }
            c.attn.middleCols(hd * dh, dh) = p * c.v.middleCols(hd * dh, dh);
        }
        Matrix<T> o = c.attn * W.wo;
        add_bias(o, W.bo);
        c.attn_dropout = dropout_mask<T>(L, H, cfg.dropout, rng);
        apply_mask(o, c.attn_dropout);
        c.h1 = layer_norm(Matrix<T>(h + o), W.ln1_gain, W.ln1_bias, c.ln1);

        c.pre_act = c.h1 * W.w1;
        add_bias(c.pre_act, W.b1);
        c.act = c.pre_act.unaryExpr([](T v) { return gelu(v); });
        Matrix<T> f = c.act * W.w2;
        add_bias(f, W.b2);
        c.ffn_dropout = dropout_mask<T>(L, H, cfg.dropout, rng);
        apply_mask(f, c.ffn_dropout);
        h = layer_norm(Matrix<T>(c.h1 + f), W.ln2_gain, W.ln2_bias, c.ln2);
    }
    cache.output = h;
    return h;
}

template <typename T>
struct ExampleLogits {
    Matrix<T> mlm;
    Matrix<T> itm, ikm, iec;  // 1 x classes
};

template <typename T>
ExampleLogits<T> heads_forward(const ModelParams<T>& P, const Batch& batch, std::size_t b, const Matrix<T>& out) {
    ExampleLogits<T> r;
    const auto& positions = batch.mlm_positions[b];
    r.mlm.resize(static_cast<Eigen::Index>(positions.size()), P.mlm_weight.cols());
    for (std::size_t m = 0; m < positions.size(); ++m) {
        r.mlm.row(static_cast<Eigen::Index>(m)) = out.row(positions[m]) * P.mlm_weight + P.mlm_bias.row(0);
    }
    const auto cls = out.row(0);
    r.itm = cls * P.itm_weight + P.itm_bias;
    r.ikm = cls * P.ikm_weight + P.ikm_bias;
    r.iec = cls * P.iec_weight + P.iec_bias;
    return r;
}

// -log softmax(logits)[label], computed with a shifted log-sum-exp.
template <typename T>
double nll(const auto& logits, int label) {
    const T mx = logits.maxCoeff();
    T sum = 0;
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
        sum += std::exp(logits(j) - mx);
    }
    return static_cast<double>(std::log(sum) + mx - logits(label));
}

template <typename T>
Matrix<T> softmax_row(const auto& logits) {
    Matrix<T> p = logits;
    const T mx = p.maxCoeff();
    p = (p.array() - mx).exp().matrix();
    p /= p.sum();
    return p;
}

struct LabelCounts {
    std::size_t mlm = 0, itm = 0, ikm = 0, iec = 0;
};

LabelCounts count_labels(const Batch& batch) {
    LabelCounts n;
    for (std::size_t b = 0; b < batch.size; ++b) {
        n.mlm += batch.mlm_positions[b].size();
        n.itm += batch.itm_labels[b] >= 0;
        n.ikm += batch.ikm_labels[b] >= 0;
        n.iec += batch.iec_labels[b] >= 0;
    }
    return n;
}

void check_label(int label, int classes, const char* head) {
    if (label >= classes) {
        throw Error(ErrorKind::shape_mismatch, std::string(head) + " label " + std::to_string(label) + " out of range");
    }
}

template <typename T>
LossBreakdown run(const ModelParams<T>& P, const ModelConfig& cfg, const Batch& batch, ModelParams<T>* grads,
                  Rng* rng) {
    cfg.validate();
    check_batch(cfg, batch);
    const LabelCounts n = count_labels(batch);
    double sum_mlm = 0, sum_itm = 0, sum_ikm = 0, sum_iec = 0;
    if (grads != nullptr) {
        *grads = ModelParams<T>::zeros(cfg);
    }
    const auto Lt = static_cast<Eigen::Index>(batch.text_len);
    const auto Lv = static_cast<Eigen::Index>(batch.visual_len);
    const auto H = static_cast<Eigen::Index>(cfg.hidden);
    const auto heads = static_cast<Eigen::Index>(cfg.heads);
    const Eigen::Index dh = H / heads;
    const T scale = T(1) / std::sqrt(T(dh));

    for (std::size_t b = 0; b < batch.size; ++b) {
        ExampleCache<T> cache;
        const Matrix<T> out = encode(P, cfg, batch, b, cache, rng);
        const ExampleLogits<T> logits = heads_forward(P, batch, b, out);
        const auto& targets = batch.mlm_targets[b];
        for (std::size_t m = 0; m < targets.size(); ++m) {
            sum_mlm += nll<T>(logits.mlm.row(static_cast<Eigen::Index>(m)), targets[m]);
        }
        const int yi = batch.itm_labels[b], yk = batch.ikm_labels[b], ye = batch.iec_labels[b];
        check_label(yi, 3, "itm");
        check_label(yk, 3, "ikm");
        check_label(ye, 2, "iec");
        if (yi >= 0) sum_itm += nll<T>(logits.itm.row(0), yi);
        if (yk >= 0) sum_ikm += nll<T>(logits.ikm.row(0), yk);
        if (ye >= 0) sum_iec += nll<T>(logits.iec.row(0), ye);
        if (grads == nullptr) {
            continue;
        }

        ModelParams<T>& G = *grads;
        Matrix<T> dout = Matrix<T>::Zero(out.rows(), H);
        // Heads.
        for (std::size_t m = 0; m < targets.size(); ++m) {
            Matrix<T> d = softmax_row<T>(logits.mlm.row(static_cast<Eigen::Index>(m)));
            d(0, targets[m]) -= T(1);
            d /= T(n.mlm);
            const auto pos = batch.mlm_positions[b][m];
            G.mlm_weight.noalias() += out.row(pos).transpose() * d;
            G.mlm_bias += d;
            dout.row(pos) += d * P.mlm_weight.transpose();
        }
        const auto cls_head = [&](const Matrix<T>& lg, int label, std::size_t count, const Matrix<T>& w,
                                  Matrix<T>& gw, Matrix<T>& gb) {
            if (label < 0) {
                return;
            }
            Matrix<T> d = softmax_row<T>(lg.row(0));
            d(0, label) -= T(1);
            d /= T(count);
            gw.noalias() += out.row(0).transpose() * d;
            gb += d;
            dout.row(0) += d * w.transpose();
        };
        cls_head(logits.itm, yi, n.itm, P.itm_weight, G.itm_weight, G.itm_bias);
        cls_head(logits.ikm, yk, n.ikm, P.ikm_weight, G.ikm_weight, G.ikm_bias);
        cls_head(logits.iec, ye, n.iec, P.iec_weight, G.iec_weight, G.iec_bias);

        // Encoder layers in reverse.
        Matrix<T> dh_cur = dout;
        for (std::size_t li = cfg.layers; li-- > 0;) {
            const LayerParams<T>& W = P.layers[li];
            LayerParams<T>& GW = G.layers[li];
            const LayerCache<T>& c = cache.layers[li];

            Matrix<T> dz2 = layer_norm_backward(dh_cur, W.ln2_gain, c.ln2, GW.ln2_gain, GW.ln2_bias);
            Matrix<T> df = dz2;
            apply_mask(df, c.ffn_dropout);
            GW.w2.noalias() += c.act.transpose() * df;
            GW.b2.row(0) += df.colwise().sum();
            Matrix<T> dact = df * W.w2.transpose();
            Matrix<T> dpre = dact.cwiseProduct(c.pre_act.unaryExpr([](T v) { return gelu_grad(v); }));
            GW.w1.noalias() += c.h1.transpose() * dpre;
            GW.b1.row(0) += dpre.colwise().sum();
            Matrix<T> dh1 = dz2 + dpre * W.w1.transpose();

            Matrix<T> dz1 = layer_norm_backward(dh1, W.ln1_gain, c.ln1, GW.ln1_gain, GW.ln1_bias);
            Matrix<T> dinput = dz1;
            Matrix<T> dproj = dz1;
            apply_mask(dproj, c.attn_dropout);
            GW.wo.noalias() += c.attn.transpose() * dproj;
            GW.bo.row(0) += dproj.colwise().sum();
            Matrix<T> dattn = dproj * W.wo.transpose();

            Matrix<T> dq(c.q.rows(), H), dk(c.k.rows(), H), dv(c.v.rows(), H);
            for (Eigen::Index hd = 0; hd < heads; ++hd) {
                const Matrix<T>& p = c.probs[static_cast<std::size_t>(hd)];
                const auto da = dattn.middleCols(hd * dh, dh);
                Matrix<T> dp = da * c.v.middleCols(hd * dh, dh).transpose();
                dv.middleCols(hd * dh, dh) = p.transpose() * da;
                Matrix<T> ds(p.rows(), p.cols());
                for (Eigen::Index i = 0; i < p.rows(); ++i) {
                    const T dot = p.row(i).dot(dp.row(i));
                    ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
                }
                ds *= scale;
                dq.middleCols(hd * dh, dh) = ds * c.k.middleCols(hd * dh, dh);
                dk.middleCols(hd * dh, dh) = ds.transpose() * c.q.middleCols(hd * dh, dh);
            }
            GW.wq.noalias() += c.input.transpose() * dq;
            GW.bq.row(0) += dq.colwise().sum();
            GW.wk.noalias() += c.input.transpose() * dk;
            GW.bk.row(0) += dk.colwise().sum();
            GW.wv.noalias() += c.input.transpose() * dv;
            GW.bv.row(0) += dv.colwise().sum();
            dinput.noalias() += dq * W.wq.transpose();
            dinput.noalias() += dk * W.wk.transpose();
            dinput.noalias() += dv * W.wv.transpose();
            dh_cur = std::move(dinput);
        }

        // Embeddings.
        apply_mask(dh_cur, cache.embed_dropout);
        Matrix<T> dx = layer_norm_backward(dh_cur, P.embed_ln_gain, cache.embed_ln, G.embed_ln_gain, G.embed_ln_bias);
        for (Eigen::Index i = 0; i < Lt; ++i) {
            const std::size_t at = b * batch.text_len + static_cast<std::size_t>(i);
            G.token_embedding.row(batch.token_ids[at]) += dx.row(i);
            G.position_embedding.row(i) += dx.row(i);
            G.segment_embedding.row(batch.segment_ids[at]) += dx.row(i);
        }
        if (Lv > 0) {
            const auto dvis = dx.bottomRows(Lv);
            G.visual_weight.noalias() += cache.visual_in.transpose() * dvis;
            G.visual_bias.row(0) += dvis.colwise().sum();
            G.segment_embedding.row(kSegmentVisual) += dvis.colwise().sum();
        }
    }

    LossBreakdown r;
    r.mlm = n.mlm ? sum_mlm / static_cast<double>(n.mlm) : 0.0;
    r.itm = n.itm ? sum_itm / static_cast<double>(n.itm) : 0.0;
    r.ikm = n.ikm ? sum_ikm / static_cast<double>(n.ikm) : 0.0;
    r.iec = n.iec ? sum_iec / static_cast<double>(n.iec) : 0.0;
    r.total = total_loss(r.mlm, r.itm, r.ikm, r.iec);
    return r;
}

template <typename T>
Matrix<T> uniform_block(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
    Matrix<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<T>((2.0 * rng.uniform01() - 1.0) * limit);
    }
    return m;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw Error(ErrorKind::io, "truncated checkpoint");
    }
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

constexpr char kCheckpointMagic[8] = {'G', 'V', 'L', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (hidden == 0 || heads == 0 || hidden % heads != 0) {
        throw Error(ErrorKind::validation, "hidden must be a positive multiple of heads");
    }
    if (layers == 0 || ffn == 0 || vocab_size == 0 || max_positions == 0) {
        throw Error(ErrorKind::validation, "layers, ffn, vocab_size and max_positions must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw Error(ErrorKind::validation, "dropout must lie in [0, 1)");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"hidden", hidden},         {"layers", layers},           {"heads", heads},
            {"ffn", ffn},               {"vocab_size", vocab_size},   {"visual_in", visual_in},
            {"max_positions", max_positions}, {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.ffn = j.at("ffn").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.visual_in = j.at("visual_in").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
    const auto H = static_cast<Eigen::Index>(cfg.hidden);
    const auto F = static_cast<Eigen::Index>(cfg.ffn);
    const auto V = static_cast<Eigen::Index>(cfg.vocab_size);
    ModelParams p;
    p.token_embedding = Matrix<T>::Zero(V, H);
    p.position_embedding = Matrix<T>::Zero(static_cast<Eigen::Index>(cfg.max_positions), H);
    p.segment_embedding = Matrix<T>::Zero(kSegmentCount, H);
    p.visual_weight = Matrix<T>::Zero(static_cast<Eigen::Index>(cfg.visual_in), H);
    p.visual_bias = Matrix<T>::Zero(1, H);
    p.embed_ln_gain = Matrix<T>::Zero(1, H);
    p.embed_ln_bias = Matrix<T>::Zero(1, H);
    p.layers.resize(cfg.layers);
    for (auto& L : p.layers) {
        for (auto* w : {&L.wq, &L.wk, &L.wv, &L.wo}) *w = Matrix<T>::Zero(H, H);
        for (auto* b : {&L.bq, &L.bk, &L.bv, &L.bo, &L.ln1_gain, &L.ln1_bias, &L.b2, &L.ln2_gain, &L.ln2_bias}) {
            *b = Matrix<T>::Zero(1, H);
        }
        L.w1 = Matrix<T>::Zero(H, F);
        L.b1 = Matrix<T>::Zero(1, F);
        L.w2 = Matrix<T>::Zero(F, H);
    }
    p.mlm_weight = Matrix<T>::Zero(H, V);
    p.mlm_bias = Matrix<T>::Zero(1, V);
    p.itm_weight = Matrix<T>::Zero(H, 3);
    p.itm_bias = Matrix<T>::Zero(1, 3);
    p.ikm_weight = Matrix<T>::Zero(H, 3);
    p.ikm_bias = Matrix<T>::Zero(1, 3);
    p.iec_weight = Matrix<T>::Zero(H, 2);
    p.iec_bias = Matrix<T>::Zero(1, 2);
    return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p = zeros(cfg);
    Rng rng(seed);
    for (auto& blk : collect_blocks(p)) {
        Matrix<T>& m = *blk.value;
        switch (blk.kind) {
            case ParamKind::bias:
                break;
            case ParamKind::norm:
                if (blk.name.ends_with("gain")) {
                    m.setOnes();
                }
                break;
            case ParamKind::weight: {
                // Embedding tables are indexed by row, so their fan-in is the hidden width.
                const bool table = blk.name.ends_with("_embedding");
                const double fan_in = static_cast<double>(table ? m.cols() : m.rows());
                m = uniform_block<T>(m.rows(), m.cols(), 1.0 / std::sqrt(std::max(fan_in, 1.0)), rng);
                break;
            }
        }
    }
    return p;
}

template <typename T>
void ModelParams<T>::visit(const std::function<void(const std::string&, Matrix<T>&, ParamKind)>& fn) {
    for (auto& blk : collect_blocks(*this)) {
        fn(blk.name, *blk.value, blk.kind);
    }
}

template <typename T>
void ModelParams<T>::visit(const std::function<void(const std::string&, const Matrix<T>&, ParamKind)>& fn) const {
    for (auto& blk : collect_blocks(*this)) {
        fn(blk.name, *blk.value, blk.kind);
    }
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix<T>& m, ParamKind) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Matrix<T>& m, ParamKind) { ok = ok && m.allFinite(); });
    return ok;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    out.layers.resize(layers.size());
    auto src = collect_blocks(*this);
    auto dst = collect_blocks(out);
    for (std::size_t i = 0; i < src.size(); ++i) {
        *dst[i].value = src[i].value->template cast<U>();
    }
    return out;
}

Batch make_batch(std::span<const TrainingExample* const> examples, std::size_t visual_width) {
    Batch batch;
    batch.size = examples.size();
    batch.visual_width = visual_width;
    for (const TrainingExample* e : examples) {
        batch.text_len = std::max(batch.text_len, e->token_ids.size());
        batch.visual_len = std::max(batch.visual_len, e->visual_features.rows);
        if (e->visual_features.rows > 0 && e->visual_features.cols != visual_width) {
            throw Error(ErrorKind::shape_mismatch, "example '" + e->source_image_id + "' has visual width " +
                                                       std::to_string(e->visual_features.cols) + ", expected " +
                                                       std::to_string(visual_width));
        }
    }
    batch.token_ids.assign(batch.size * batch.text_len, 0);
    batch.segment_ids.assign(batch.size * batch.text_len, 0);
    batch.text_mask.assign(batch.size * batch.text_len, 0);
    batch.visual.assign(batch.size * batch.visual_len * visual_width, 0.0f);
    batch.visual_mask.assign(batch.size * batch.visual_len, 0);
    for (std::size_t b = 0; b < batch.size; ++b) {
        const TrainingExample& e = *examples[b];
        for (std::size_t i = 0; i < e.token_ids.size(); ++i) {
            batch.token_ids[b * batch.text_len + i] = e.token_ids[i];
            batch.segment_ids[b * batch.text_len + i] = e.segment_ids[i];
            batch.text_mask[b * batch.text_len + i] = 1;
        }
        std::copy(e.visual_features.values.begin(), e.visual_features.values.end(),
                  batch.visual.begin() + static_cast<std::ptrdiff_t>(b * batch.visual_len * visual_width));
        for (std::size_t j = 0; j < e.visual_features.rows; ++j) {
            batch.visual_mask[b * batch.visual_len + j] = 1;
        }
        batch.mlm_positions.push_back(e.mlm_positions);
        batch.mlm_targets.push_back(e.mlm_targets);
        batch.itm_labels.push_back(e.itm_label);
        batch.ikm_labels.push_back(e.ikm_label);
        batch.iec_labels.push_back(e.iec_label);
    }
    return batch;
}

Batch make_batch(std::span<const TrainingExample> examples, std::size_t visual_width) {
    std::vector<const TrainingExample*> ptrs;
    for (const auto& e : examples) {
        ptrs.push_back(&e);
    }
    return make_batch(std::span<const TrainingExample* const>(ptrs), visual_width);
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
    Matrix<T> out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        out.row(r) = softmax_row<T>(logits.row(r));
    }
    return out;
}

template <typename T>
HeadLogits<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch) {
    cfg.validate();
    check_batch(cfg, batch);
    HeadLogits<T> r;
    const auto B = static_cast<Eigen::Index>(batch.size);
    r.itm.resize(B, 3);
    r.ikm.resize(B, 3);
    r.iec.resize(B, 2);
    for (std::size_t b = 0; b < batch.size; ++b) {
        ExampleCache<T> cache;
        const Matrix<T> out = encode(params, cfg, batch, b, cache, nullptr);
        ExampleLogits<T> e = heads_forward(params, batch, b, out);
        const auto row = static_cast<Eigen::Index>(b);
        r.itm.row(row) = e.itm;
        r.ikm.row(row) = e.ikm;
        r.iec.row(row) = e.iec;
        r.mlm.push_back(std::move(e.mlm));
    }
    return r;
}

template <typename T>
LossBreakdown loss(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch) {
    return run<T>(params, cfg, batch, nullptr, nullptr);
}

template <typename T>
LossBreakdown backward(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch,
                       ModelParams<T>& grads, Rng* dropout_rng) {
    return run<T>(params, cfg, batch, &grads, dropout_rng);
}

// ---------------------------------------------------------------------------

double linear_decay_lr(double lr0, std::size_t step, std::size_t max_steps) {
    if (max_steps == 0) {
        return lr0;
    }
    return lr0 * (1.0 - static_cast<double>(std::min(step, max_steps)) / static_cast<double>(max_steps));
}

template <typename T>
AdamW<T>::AdamW(const ModelParams<T>& params, OptimizerConfig cfg) : cfg_(cfg) {
    m_.layers.resize(params.layers.size());
    v_.layers.resize(params.layers.size());
    auto src = collect_blocks(params);
    auto m = collect_blocks(m_);
    auto v = collect_blocks(v_);
    for (std::size_t i = 0; i < src.size(); ++i) {
        *m[i].value = Matrix<T>::Zero(src[i].value->rows(), src[i].value->cols());
        *v[i].value = Matrix<T>::Zero(src[i].value->rows(), src[i].value->cols());
    }
}

template <typename T>
double AdamW<T>::step(ModelParams<T>& params, const ModelParams<T>& grads) {
    if (step_ >= cfg_.max_steps) {
        throw Error(ErrorKind::validation, "optimizer already took max_steps updates");
    }
    const double lr = linear_decay_lr(cfg_.lr, step_, cfg_.max_steps);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    auto p = collect_blocks(params);
    auto g = collect_blocks(grads);
    auto m = collect_blocks(m_);
    auto v = collect_blocks(v_);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto& pm = *p[i].value;
        const auto& gm = *g[i].value;
        auto& mm = *m[i].value;
        auto& vm = *v[i].value;
        mm = b1 * mm + (T(1) - b1) * gm;
        vm = b2 * vm + (T(1) - b2) * gm.cwiseProduct(gm);
        const T decay = p[i].kind == ParamKind::weight ? static_cast<T>(cfg_.weight_decay) : T(0);
        for (Eigen::Index k = 0; k < pm.size(); ++k) {
            const double mhat = static_cast<double>(mm.data()[k]) / bc1;
            const double vhat = static_cast<double>(vm.data()[k]) / bc2;
            const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + static_cast<double>(decay * pm.data()[k]);
            pm.data()[k] -= static_cast<T>(lr * update);
        }
    }
    return lr;
}

template <typename T>
LossBreakdown train_step(ModelParams<T>& params, const ModelConfig& cfg, AdamW<T>& optimizer, const Batch& batch,
                         Rng* dropout_rng) {
    ModelParams<T> grads;
    const LossBreakdown l = backward(params, cfg, batch, grads, dropout_rng);
    if (!std::isfinite(l.total) || !grads.all_finite()) {
        throw Error(ErrorKind::non_finite_loss,
                    "non-finite loss at step " + std::to_string(optimizer.steps_taken()) + " (mlm=" +
                        std::to_string(l.mlm) + " itm=" + std::to_string(l.itm) + " ikm=" + std::to_string(l.ikm) +
                        " iec=" + std::to_string(l.iec) + ")");
    }
    optimizer.step(params, grads);
    return l;
}

// ---------------------------------------------------------------------------

void write_checkpoint_stream(std::ostream& out, const Checkpoint& ck) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);
    const std::string header = nlohmann::json{{"config", ck.config.to_json()}, {"metadata", ck.metadata}}.dump();
    write_u32(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    const auto blocks = collect_blocks(ck.params);
    write_u32(out, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& blk : blocks) {
        write_u32(out, static_cast<std::uint32_t>(blk.name.size()));
        out.write(blk.name.data(), static_cast<std::streamsize>(blk.name.size()));
        write_u32(out, static_cast<std::uint32_t>(blk.value->rows()));
        write_u32(out, static_cast<std::uint32_t>(blk.value->cols()));
        for (Eigen::Index i = 0; i < blk.value->size(); ++i) {
            write_u32(out, std::bit_cast<std::uint32_t>(blk.value->data()[i]));
        }
    }
}

Checkpoint read_checkpoint_stream(std::istream& in) {
    char magic[sizeof(kCheckpointMagic)];
    if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kCheckpointMagic)) {
        throw Error(ErrorKind::validation, "not a checkpoint file");
    }
    if (const auto version = read_u32(in); version != kCheckpointVersion) {
        throw Error(ErrorKind::validation, "unsupported checkpoint version " + std::to_string(version));
    }
    std::string header(read_u32(in), '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(header.size()))) {
        throw Error(ErrorKind::io, "truncated checkpoint header");
    }
    const auto j = nlohmann::json::parse(header);
    Checkpoint ck;
    ck.config = ModelConfig::from_json(j.at("config"));
    ck.metadata = j.value("metadata", nlohmann::json::object());
    ck.params = ModelParams<float>::zeros(ck.config);
    auto blocks = collect_blocks(ck.params);
    if (read_u32(in) != blocks.size()) {
        throw Error(ErrorKind::shape_mismatch, "checkpoint block count does not match its config");
    }
    for (auto& blk : blocks) {
        std::string name(read_u32(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
        const auto rows = read_u32(in);
        const auto cols = read_u32(in);
        if (name != blk.name || rows != blk.value->rows() || cols != blk.value->cols()) {
            throw Error(ErrorKind::shape_mismatch, "checkpoint block '" + name + "' does not match '" + blk.name + "'");
        }
        for (Eigen::Index i = 0; i < blk.value->size(); ++i) {
            blk.value->data()[i] = std::bit_cast<float>(read_u32(in));
        }
    }
    return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    write_checkpoint_stream(out, checkpoint);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    return read_checkpoint_stream(in);
}

// ---------------------------------------------------------------------------

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template HeadLogits<float> forward(const ModelParams<float>&, const ModelConfig&, const Batch&);
template HeadLogits<double> forward(const ModelParams<double>&, const ModelConfig&, const Batch&);
template LossBreakdown loss(const ModelParams<float>&, const ModelConfig&, const Batch&);
template LossBreakdown loss(const ModelParams<double>&, const ModelConfig&, const Batch&);
template LossBreakdown backward(const ModelParams<float>&, const ModelConfig&, const Batch&, ModelParams<float>&,
                                Rng*);
template LossBreakdown backward(const ModelParams<double>&, const ModelConfig&, const Batch&, ModelParams<double>&,
                                Rng*);
template Matrix<float> softmax_rows(const Matrix<float>&);
template Matrix<double> softmax_rows(const Matrix<double>&);
template class AdamW<float>;
template class AdamW<double>;
template LossBreakdown train_step(ModelParams<float>&, const ModelConfig&, AdamW<float>&, const Batch&, Rng*);
template LossBreakdown train_step(ModelParams<double>&, const ModelConfig&, AdamW<double>&, const Batch&, Rng*);

}  // namespace geovlp
