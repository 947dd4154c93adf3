// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Micro transformer encoder over [CLS] c [SEP] k [SEP] t [SEP] v with four
// heads: masked-token prediction, 3-way image-text matching, 3-way
// image-knowledge matching and binary image edit checking. Gradients are
// computed by hand; the scalar type is a template parameter so gradient
// checks can run in double precision.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "geovlp/formats.h"
#include "geovlp/rng.h"

namespace geovlp {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kSegmentVisual = 3;
inline constexpr std::size_t kSegmentCount = 4;

struct ModelConfig {
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn = 256;
    std::size_t vocab_size = 0;
    std::size_t visual_in = 0;  // region feature width + geometry
    std::size_t max_positions = 72;
    double dropout = 0.1;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    bool operator==(const ModelConfig&) const = default;
};

enum class ParamKind { weight, bias, norm };

template <typename T>
struct LayerParams {
    Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix<T> ln1_gain, ln1_bias;
    Matrix<T> w1, b1, w2, b2;
    Matrix<T> ln2_gain, ln2_bias;
};

template <typename T>
struct ModelParams {
    Matrix<T> token_embedding;     // vocab x hidden
    Matrix<T> position_embedding;  // max_positions x hidden
    Matrix<T> segment_embedding;   // 4 x hidden (caption, knowledge, tags, visual)
    Matrix<T> visual_weight;       // visual_in x hidden
    Matrix<T> visual_bias;
    Matrix<T> embed_ln_gain, embed_ln_bias;
    std::vector<LayerParams<T>> layers;
    Matrix<T> mlm_weight, mlm_bias;  // hidden x vocab
    Matrix<T> itm_weight, itm_bias;  // hidden x 3
    Matrix<T> ikm_weight, ikm_bias;  // hidden x 3
    Matrix<T> iec_weight, iec_bias;  // hidden x 2

    /// All blocks zero-filled, shaped for `cfg`.
    static ModelParams zeros(const ModelConfig& cfg);

    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1.
    static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);

    /// fn(name, block, kind) for every parameter block in a fixed order.
    void visit(const std::function<void(const std::string&, Matrix<T>&, ParamKind)>& fn);
    void visit(const std::function<void(const std::string&, const Matrix<T>&, ParamKind)>& fn) const;

    std::size_t parameter_count() const;
    bool all_finite() const;

    template <typename U>
    ModelParams<U> cast() const;
};

/// Padded batch. Text and visual tails beyond each example's length are padding.
struct Batch {
    std::size_t size = 0;
    std::size_t text_len = 0;
    std::size_t visual_len = 0;
    std::size_t visual_width = 0;
    std::vector<std::int32_t> token_ids;    // size x text_len
    std::vector<std::int32_t> segment_ids;  // size x text_len
    std::vector<std::uint8_t> text_mask;    // 1 = real token
    std::vector<float> visual;              // size x visual_len x visual_width
    std::vector<std::uint8_t> visual_mask;  // 1 = real object
    std::vector<std::vector<std::int32_t>> mlm_positions;
    std::vector<std::vector<std::int32_t>> mlm_targets;
    std::vector<int> itm_labels;  // -1 = no label
    std::vector<int> ikm_labels;
    std::vector<int> iec_labels;
};

Batch make_batch(std::span<const TrainingExample* const> examples, std::size_t visual_width);
Batch make_batch(std::span<const TrainingExample> examples, std::size_t visual_width);

template <typename T>
struct HeadLogits {
    std::vector<Matrix<T>> mlm;  // per example: masked positions x vocab
    Matrix<T> itm;               // batch x 3
    Matrix<T> ikm;               // batch x 3
    Matrix<T> iec;               // batch x 2
};

struct LossBreakdown {
    double mlm = 0.0;
    double itm = 0.0;
    double ikm = 0.0;
    double iec = 0.0;
    double total = 0.0;
};

/// Sum of the four components in a fixed order.
inline double total_loss(double mlm, double itm, double ikm, double iec) { return ((mlm + itm) + ikm) + iec; }

/// Evaluation-mode forward pass (no dropout).
template <typename T>
HeadLogits<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch);

/// Mean cross-entropy of each head over the labeled items in the batch; MLM is
/// averaged over all masked positions and is 0 when there are none.
template <typename T>
LossBreakdown loss(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch);

/// Loss and exact gradient of the total. `grads` is resized and overwritten.
/// With a dropout generator the pass runs in training mode.
template <typename T>
LossBreakdown backward(const ModelParams<T>& params, const ModelConfig& cfg, const Batch& batch,
                       ModelParams<T>& grads, Rng* dropout_rng = nullptr);

/// Row-wise softmax.
template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits);

// ---------------------------------------------------------------------------
// Optimization

struct OptimizerConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t max_steps = 2000;
};

/// lr0 * (1 - step / max_steps)
double linear_decay_lr(double lr0, std::size_t step, std::size_t max_steps);

/// Adaptive moments with bias correction and decoupled weight decay; biases
/// and normalization parameters are not decayed.
template <typename T>
class AdamW {
public:
    AdamW(const ModelParams<T>& params, OptimizerConfig cfg);

    /// Applies one update at the scheduled rate and returns the rate used.
    double step(ModelParams<T>& params, const ModelParams<T>& grads);

    std::size_t steps_taken() const { return step_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    OptimizerConfig cfg_;
    ModelParams<T> m_;
    ModelParams<T> v_;
    std::size_t step_ = 0;
};

/// backward + optimizer update. Throws NonFiniteLoss before touching the
/// parameters if the loss or any gradient is not finite.
template <typename T>
LossBreakdown train_step(ModelParams<T>& params, const ModelConfig& cfg, AdamW<T>& optimizer, const Batch& batch,
                         Rng* dropout_rng);

// ---------------------------------------------------------------------------
// Checkpoints: "GVLPCKPT" magic, u32 version, u32 JSON length + JSON
// (model config and metadata), u32 block count, then per block: u32 name
// length + name, u32 rows, u32 cols, rows*cols little-endian f32.

struct Checkpoint {
    ModelConfig config;
    nlohmann::json metadata = nlohmann::json::object();
    ModelParams<float> params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint_stream(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint_stream(std::istream& in);

}  // namespace geovlp
