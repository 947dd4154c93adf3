// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of the encoder gradients.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geovlp/model.h"

namespace geovlp {

struct GradCheckConfig {
    ModelConfig model;          // dropout is forced to 0
    std::size_t batch_size = 2;
    std::size_t text_len = 6;   // including padding
    std::size_t visual_len = 3;
    double epsilon = 1e-4;
    // Blocks whose true gradient vanishes (e.g. key biases, by softmax shift
    // invariance) compare against this instead of a near-zero norm.
    double norm_floor = 1e-6;
    std::uint64_t seed = 0;
};

struct BlockError {
    std::string name;
    std::size_t size = 0;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    double relative_error = 0.0;  // |a - n| / max(|a| + |n|, floor), Frobenius norms
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<BlockError> blocks;
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    double loss = 0.0;
};

/// Random padded batch with every head labeled and at least one masked token per example.
Batch random_batch(const ModelConfig& model, std::size_t batch_size, std::size_t text_len, std::size_t visual_len,
                   Rng& rng);

/// Compares backward() against central differences of the total loss on
/// every parameter, in double precision.
GradCheckReport gradient_check(const GradCheckConfig& cfg);

}  // namespace geovlp
