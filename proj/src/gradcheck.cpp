// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "geovlp/error.h"

namespace geovlp {

Batch random_batch(const ModelConfig& model, std::size_t batch_size, std::size_t text_len, std::size_t visual_len,
                   Rng& rng) {
    if (text_len < 3 || model.vocab_size <= 5) {
        throw Error(ErrorKind::validation, "gradient-check batch needs text_len >= 3 and vocab_size > 5");
    }
    Batch b;
    b.size = batch_size;
    b.text_len = text_len;
    b.visual_len = visual_len;
    b.visual_width = model.visual_in;
    const std::size_t words = model.vocab_size - 5;
    for (std::size_t e = 0; e < batch_size; ++e) {
        // Later examples get shorter so padding is exercised.
        const std::size_t len = std::max<std::size_t>(3, text_len - e % 2);
        const std::size_t objs = visual_len == 0 ? 0 : std::max<std::size_t>(1, visual_len - e % 2);
        std::vector<std::int32_t> positions, targets;
        for (std::size_t i = 0; i < text_len; ++i) {
            const bool real = i < len;
            std::int32_t id = 0;
            if (real) {
                id = i == 0 ? 2 : static_cast<std::int32_t>(5 + rng.uniform_index(words));
            }
            b.token_ids.push_back(id);
            b.segment_ids.push_back(real ? static_cast<std::int32_t>(rng.uniform_index(3)) : 0);
            b.text_mask.push_back(real ? 1 : 0);
            if (real && i > 0 && (positions.empty() || rng.uniform01() < 0.3)) {
                positions.push_back(static_cast<std::int32_t>(i));
                targets.push_back(static_cast<std::int32_t>(5 + rng.uniform_index(words)));
            }
        }
        for (std::size_t j = 0; j < visual_len; ++j) {
            for (std::size_t c = 0; c < model.visual_in; ++c) {
                b.visual.push_back(j < objs ? static_cast<float>(rng.normal()) : 0.0f);
            }
            b.visual_mask.push_back(j < objs ? 1 : 0);
        }
        b.mlm_positions.push_back(std::move(positions));
        b.mlm_targets.push_back(std::move(targets));
        b.itm_labels.push_back(static_cast<int>(rng.uniform_index(3)));
        b.ikm_labels.push_back(static_cast<int>(rng.uniform_index(3)));
        b.iec_labels.push_back(static_cast<int>(rng.uniform_index(2)));
    }
    return b;
}

GradCheckReport gradient_check(const GradCheckConfig& cfg) {
    ModelConfig model = cfg.model;
    model.dropout = 0.0;
    model.validate();
    Rng rng(derive_seed(cfg.seed, 41, 0));
    ModelParams<double> params = ModelParams<float>::initialize(model, derive_seed(cfg.seed, 42, 0)).cast<double>();
    const Batch batch = random_batch(model, cfg.batch_size, cfg.text_len, cfg.visual_len, rng);

    ModelParams<double> grads;
    GradCheckReport report;
    report.loss = backward(params, model, batch, grads).total;

    std::vector<Matrix<double>*> analytic;
    grads.visit([&](const std::string&, Matrix<double>& m, ParamKind) { analytic.push_back(&m); });
    std::size_t block = 0;
    params.visit([&](const std::string& name, Matrix<double>& m, ParamKind) {
        const Matrix<double>& a = *analytic[block++];
        Matrix<double> numeric(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double saved = m.data()[i];
            m.data()[i] = saved + cfg.epsilon;
            const double up = loss(params, model, batch).total;
            m.data()[i] = saved - cfg.epsilon;
            const double down = loss(params, model, batch).total;
            m.data()[i] = saved;
            numeric.data()[i] = (up - down) / (2.0 * cfg.epsilon);
        }
        BlockError e;
        e.name = name;
        e.size = static_cast<std::size_t>(m.size());
        e.analytic_norm = a.norm();
        e.numeric_norm = numeric.norm();
        e.relative_error = (a - numeric).norm() / std::max(e.analytic_norm + e.numeric_norm, cfg.norm_floor);
        e.max_abs_error = (a - numeric).cwiseAbs().maxCoeff();
        report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
        report.max_abs_error = std::max(report.max_abs_error, e.max_abs_error);
        report.blocks.push_back(std::move(e));
    });
    return report;
}

}  // namespace geovlp
