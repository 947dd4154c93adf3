// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop, zero-shot classification by image-text matching score, and
// run reports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geovlp/assembler.h"
#include "geovlp/formats.h"
#include "geovlp/model.h"

namespace geovlp {

// Reference pre-training scale, kept for documentation; desk runs use the defaults below.
inline constexpr std::size_t kReferenceBatchSize = 720;
inline constexpr std::size_t kReferenceMaxSteps = 1'000'000;

struct TrainRunConfig {
    std::size_t batch_size = 8;
    std::size_t max_steps = 2000;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    std::size_t checkpoint_interval = 0;  // 0 = only the final checkpoint

    void validate(std::size_t corpus_size) const;
};

struct StepMetrics {
    std::size_t step = 0;  // 1-based
    double lr = 0.0;
    LossBreakdown loss;
    bool operator==(const StepMetrics& o) const {
        return step == o.step && lr == o.lr && loss.mlm == o.loss.mlm && loss.itm == o.loss.itm &&
               loss.ikm == o.loss.ikm && loss.iec == o.loss.iec && loss.total == o.loss.total;
    }
};

nlohmann::json to_json(const StepMetrics& m);
StepMetrics step_metrics_from_json(const nlohmann::json& j);
std::vector<StepMetrics> read_metrics(const std::filesystem::path& path);
std::vector<StepMetrics> read_metrics_stream(std::istream& in, const std::string& source = "<stream>");

/// Checks the manifest against the examples (count, realized label counts,
/// token ids within the vocabulary, one visual width). Throws CorpusManifestMismatch.
void check_corpus(const Corpus& corpus);

/// Visual row width shared by the corpus examples (0 if none has objects).
std::size_t corpus_visual_width(const Corpus& corpus);

/// `base` with vocabulary size, visual width and position count taken from the corpus.
ModelConfig model_config_for(const Corpus& corpus, ModelConfig base);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepMetrics> metrics;
};

using CheckpointSink = std::function<void(std::size_t step, const Checkpoint&)>;

/// Deterministic function of (corpus, model config, run config). Each step's
/// metrics line is written to `metrics_out` as it completes.
TrainResult train(const Corpus& corpus, const ModelConfig& model, const TrainRunConfig& cfg,
                  std::ostream* metrics_out = nullptr, const CheckpointSink& on_checkpoint = {});

// ---------------------------------------------------------------------------
// Zero-shot classification

struct ZeroShotClass {
    std::string name;
    std::string knowledge;
    bool operator==(const ZeroShotClass&) const = default;
};

struct ZeroShotItem {
    ImageRecord record;
    std::size_t gold = 0;
    bool operator==(const ZeroShotItem&) const = default;
};

/// File format: one JSON document
/// {"format_version":1, "classes":[{"name","knowledge"}], "items":[{"record":{...}, "gold":i}]}.
struct ZeroShotTask {
    std::vector<ZeroShotClass> classes;
    std::vector<ZeroShotItem> items;

    void validate() const;
    bool operator==(const ZeroShotTask&) const = default;
};

nlohmann::json to_json(const ZeroShotTask& task);
ZeroShotTask zero_shot_task_from_json(const nlohmann::json& j);
ZeroShotTask read_zero_shot_task(const std::filesystem::path& path);
void write_zero_shot_task(const std::filesystem::path& path, const ZeroShotTask& task);

struct ZeroShotResult {
    std::vector<std::vector<double>> scores;  // item x class: ITM probability of label 0
    std::vector<std::size_t> predictions;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

/// First index of the maximum.
std::size_t argmax_first(std::span<const double> scores);

/// Scores every (item, class) pair with c = class name, k = class knowledge,
/// t and v from the item, and predicts the highest-scoring class.
ZeroShotResult zero_shot_classify(const ModelParams<float>& params, const ModelConfig& model,
                                  const ZeroShotTask& task, const Vocabulary& vocab,
                                  const AssemblyConfig& assembly, std::size_t threads = 1);

nlohmann::json to_json(const ZeroShotResult& result);

// ---------------------------------------------------------------------------
// Reports

struct ComponentSummary {
    std::string name;
    double first = 0.0;
    double last = 0.0;
    double mean = 0.0;
    double min = 0.0;
};

struct RunReport {
    std::size_t steps = 0;
    std::vector<ComponentSummary> components;  // mlm, itm, ikm, iec, total
    double component_mean_sum = 0.0;
    std::optional<CorpusManifest> manifest;
    std::optional<nlohmann::json> zero_shot;
};

/// Throws Validation on an empty log.
RunReport summarize(std::span<const StepMetrics> metrics);

/// Fixed-width text table.
std::string format_report(const RunReport& report);

/// Writes summary.txt, summary.json and loss_curves.tsv (step, lr, components, total).
void write_report_files(const std::filesystem::path& dir, const RunReport& report,
                        std::span<const StepMetrics> metrics);

}  // namespace geovlp
