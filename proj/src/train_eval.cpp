// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/train_eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "geovlp/error.h"
#include "geovlp/parallel.h"
#include "geovlp/rng.h"

namespace geovlp {

namespace {

constexpr std::uint64_t kStreamInit = 50;
constexpr std::uint64_t kStreamShuffle = 51;
constexpr std::uint64_t kStreamDropout = 52;

[[noreturn]] void mismatch(const std::string& what) { throw Error(ErrorKind::corpus_manifest_mismatch, what); }

}  // namespace

void TrainRunConfig::validate(std::size_t corpus_size) const {
    if (batch_size == 0 || max_steps == 0) {
        throw Error(ErrorKind::validation, "batch_size and max_steps must be positive");
    }
    if (corpus_size == 0) {
        throw Error(ErrorKind::validation, "corpus is empty");
    }
    if (batch_size > corpus_size) {
        throw Error(ErrorKind::validation, "batch_size " + std::to_string(batch_size) + " exceeds corpus size " +
                                               std::to_string(corpus_size));
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw Error(ErrorKind::validation, "lr must be positive");
    }
}

nlohmann::json to_json(const StepMetrics& m) {
    return {{"step", m.step},         {"lr", m.lr},           {"mlm", m.loss.mlm}, {"itm", m.loss.itm},
            {"ikm", m.loss.ikm},      {"iec", m.loss.iec},    {"total", m.loss.total}};
}

StepMetrics step_metrics_from_json(const nlohmann::json& j) {
    StepMetrics m;
    m.step = j.at("step").get<std::size_t>();
    m.lr = j.at("lr").get<double>();
    m.loss.mlm = j.at("mlm").get<double>();
    m.loss.itm = j.at("itm").get<double>();
    m.loss.ikm = j.at("ikm").get<double>();
    m.loss.iec = j.at("iec").get<double>();
    m.loss.total = j.at("total").get<double>();
    return m;
}

std::vector<StepMetrics> read_metrics_stream(std::istream& in, const std::string& source) {
    std::vector<StepMetrics> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(step_metrics_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::malformed_row, source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<StepMetrics> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    return read_metrics_stream(in, path.string());
}

// ---------------------------------------------------------------------------

std::size_t corpus_visual_width(const Corpus& corpus) {
    std::size_t width = 0;
    for (const TrainingExample& e : corpus.examples) {
        if (e.visual_features.rows == 0) {
            continue;
        }
        if (width != 0 && e.visual_features.cols != width) {
            mismatch("example '" + e.source_image_id + "' has visual width " + std::to_string(e.visual_features.cols) +
                     ", others have " + std::to_string(width));
        }
        width = e.visual_features.cols;
    }
    return width;
}

void check_corpus(const Corpus& corpus) {
    const CorpusManifest& m = corpus.manifest;
    if (m.example_count != corpus.examples.size()) {
        mismatch("manifest declares " + std::to_string(m.example_count) + " examples, file has " +
                 std::to_string(corpus.examples.size()));
    }
    if (m.vocab.size() <= static_cast<std::size_t>(Vocabulary::kSpecialCount)) {
        mismatch("manifest vocabulary is missing or has no words");
    }
    std::array<std::size_t, 3> itm{}, ikm{};
    std::array<std::size_t, 2> iec{};
    for (const TrainingExample& e : corpus.examples) {
        if (e.itm_label < 0 || e.itm_label > 2 || e.ikm_label < 0 || e.ikm_label > 2 || e.iec_label < 0 ||
            e.iec_label > 1) {
            mismatch("example '" + e.source_image_id + "' has an out-of-range label");
        }
        ++itm[static_cast<std::size_t>(e.itm_label)];
        ++ikm[static_cast<std::size_t>(e.ikm_label)];
        ++iec[static_cast<std::size_t>(e.iec_label)];
        for (const auto id : e.token_ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= m.vocab.size()) {
                mismatch("example '" + e.source_image_id + "' uses token id " + std::to_string(id) +
                         " outside the manifest vocabulary");
            }
        }
        for (const auto id : e.mlm_targets) {
            if (id < 0 || static_cast<std::size_t>(id) >= m.vocab.size()) {
                mismatch("example '" + e.source_image_id + "' has a masked target outside the vocabulary");
            }
        }
    }
    if (itm != m.itm_counts || ikm != m.ikm_counts || iec != m.iec_counts) {
        mismatch("realized label counts differ from the manifest");
    }
    corpus_visual_width(corpus);
}

ModelConfig model_config_for(const Corpus& corpus, ModelConfig base) {
    base.vocab_size = corpus.manifest.vocab.size();
    const std::size_t width = corpus_visual_width(corpus);
    if (width != 0) {
        base.visual_in = width;
    }
    std::size_t longest = 0;
    for (const TrainingExample& e : corpus.examples) {
        longest = std::max(longest, e.token_ids.size());
    }
    if (corpus.manifest.config.contains("max_text_tokens")) {
        longest = std::max(longest, corpus.manifest.config.at("max_text_tokens").get<std::size_t>());
    }
    base.max_positions = std::max(base.max_positions, longest);
    return base;
}

TrainResult train(const Corpus& corpus, const ModelConfig& model_in, const TrainRunConfig& cfg,
                  std::ostream* metrics_out, const CheckpointSink& on_checkpoint) {
    check_corpus(corpus);
    cfg.validate(corpus.examples.size());
    const ModelConfig model = model_config_for(corpus, model_in);
    model.validate();
    const std::size_t width = model.visual_in;

    ModelParams<float> params = ModelParams<float>::initialize(model, derive_seed(cfg.seed, kStreamInit, 0));
    OptimizerConfig opt;
    opt.lr = cfg.lr;
    opt.max_steps = cfg.max_steps;
    AdamW<float> optimizer(params, opt);
    Rng dropout_rng(derive_seed(cfg.seed, kStreamDropout, 0));

    TrainResult result;
    result.checkpoint.config = model;
    result.checkpoint.metadata = {{"seed", cfg.seed},
                                  {"corpus_config_hash", corpus.manifest.config_hash},
                                  {"corpus_seed", corpus.manifest.seed},
                                  {"batch_size", cfg.batch_size},
                                  {"lr", cfg.lr},
                                  {"max_steps", cfg.max_steps},
                                  {"assembly", corpus.manifest.config},
                                  {"vocab", corpus.manifest.vocab}};

    const std::size_t n = corpus.examples.size();
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::size_t epoch = 0;
    std::vector<const TrainingExample*> picks;
    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
        picks.clear();
        while (picks.size() < cfg.batch_size) {
            if (cursor == order.size()) {
                order.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    order[i] = i;
                }
                Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle, epoch++));
                shuffle_rng.shuffle(order);
                cursor = 0;
            }
            picks.push_back(&corpus.examples[order[cursor++]]);
        }
        const Batch batch = make_batch(std::span<const TrainingExample* const>(picks), width);
        const double lr = linear_decay_lr(cfg.lr, optimizer.steps_taken(), cfg.max_steps);
        Rng* drop = model.dropout > 0.0 ? &dropout_rng : nullptr;
        const LossBreakdown l = train_step(params, model, optimizer, batch, drop);
        StepMetrics m{step + 1, lr, l};
        if (metrics_out) {
            *metrics_out << to_json(m).dump() << '\n';
        }
        result.metrics.push_back(m);
        if (on_checkpoint && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0 &&
            step + 1 < cfg.max_steps) {
            Checkpoint snapshot = result.checkpoint;
            snapshot.params = params;
            snapshot.metadata["step"] = step + 1;
            on_checkpoint(step + 1, snapshot);
        }
    }
    result.checkpoint.params = std::move(params);
    result.checkpoint.metadata["step"] = cfg.max_steps;
    if (on_checkpoint) {
        on_checkpoint(cfg.max_steps, result.checkpoint);
    }
    return result;
}

// ---------------------------------------------------------------------------

void ZeroShotTask::validate() const {
    if (classes.size() < 2) {
        throw Error(ErrorKind::validation, "a zero-shot task needs at least 2 classes");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].gold >= classes.size()) {
            throw Error(ErrorKind::validation, "item " + std::to_string(i) + " has gold class " +
                                                   std::to_string(items[i].gold) + " of " +
                                                   std::to_string(classes.size()));
        }
    }
}

nlohmann::json to_json(const ZeroShotTask& task) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : task.classes) {
        classes.push_back({{"name", c.name}, {"knowledge", c.knowledge}});
    }
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : task.items) {
        items.push_back({{"record", to_json(it.record)}, {"gold", it.gold}});
    }
    return {{"format_version", kFormatVersion}, {"classes", classes}, {"items", items}};
}

ZeroShotTask zero_shot_task_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format_version", kFormatVersion) != kFormatVersion) {
            throw Error(ErrorKind::validation, "unsupported task format_version");
        }
        ZeroShotTask t;
        for (const auto& c : j.at("classes")) {
            t.classes.push_back({c.at("name").get<std::string>(), c.at("knowledge").get<std::string>()});
        }
        std::size_t i = 0;
        for (const auto& it : j.at("items")) {
            t.items.push_back({image_record_from_json(it.at("record"), "item " + std::to_string(i++)),
                               it.at("gold").get<std::size_t>()});
        }
        t.validate();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::missing_field, std::string("zero-shot task: ") + e.what());
    }
}

ZeroShotTask read_zero_shot_task(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::malformed_row, path.string() + ": " + e.what());
    }
    return zero_shot_task_from_json(j);
}

void write_zero_shot_task(const std::filesystem::path& path, const ZeroShotTask& task) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    out << to_json(task).dump() << '\n';
}

std::size_t argmax_first(std::span<const double> scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = i;
        }
    }
    return best;
}

ZeroShotResult zero_shot_classify(const ModelParams<float>& params, const ModelConfig& model,
                                  const ZeroShotTask& task, const Vocabulary& vocab,
                                  const AssemblyConfig& assembly, std::size_t threads) {
    task.validate();
    ZeroShotResult r;
    r.scores.assign(task.items.size(), {});
    r.predictions.assign(task.items.size(), 0);
    parallel_for(task.items.size(), threads, [&](std::size_t i) {
        const ImageRecord& rec = task.items[i].record;
        const auto tags = record_tags(rec, assembly.max_objects);
        std::vector<TrainingExample> inputs;
        for (const ZeroShotClass& c : task.classes) {
            ModelInput in = build_input(c.name, c.knowledge, tags, rec.objects, rec.width, rec.height, vocab, assembly);
            TrainingExample e;
            e.token_ids = std::move(in.token_ids);
            e.segment_ids = std::move(in.segment_ids);
            e.visual_features = std::move(in.visual_features);
            inputs.push_back(std::move(e));
        }
        const Batch batch = make_batch(std::span<const TrainingExample>(inputs), model.visual_in);
        const HeadLogits<float> logits = forward(params, model, batch);
        const Matrix<double> probs = softmax_rows<double>(logits.itm.cast<double>());
        std::vector<double> scores(task.classes.size());
        for (std::size_t c = 0; c < scores.size(); ++c) {
            scores[c] = probs(static_cast<Eigen::Index>(c), 0);
        }
        r.predictions[i] = argmax_first(scores);
        r.scores[i] = std::move(scores);
    });
    for (std::size_t i = 0; i < task.items.size(); ++i) {
        r.correct += r.predictions[i] == task.items[i].gold;
    }
    r.accuracy = task.items.empty() ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(task.items.size());
    return r;
}

nlohmann::json to_json(const ZeroShotResult& r) {
    return {{"accuracy", r.accuracy}, {"correct", r.correct}, {"predictions", r.predictions}, {"scores", r.scores}};
}

// ---------------------------------------------------------------------------

RunReport summarize(std::span<const StepMetrics> metrics) {
    if (metrics.empty()) {
        throw Error(ErrorKind::validation, "metrics log is empty");
    }
    RunReport rep;
    rep.steps = metrics.size();
    const std::array<std::pair<const char*, double LossBreakdown::*>, 5> fields = {{{"mlm", &LossBreakdown::mlm},
                                                                                    {"itm", &LossBreakdown::itm},
                                                                                    {"ikm", &LossBreakdown::ikm},
                                                                                    {"iec", &LossBreakdown::iec},
                                                                                    {"total", &LossBreakdown::total}}};
    for (const auto& [name, field] : fields) {
        ComponentSummary s;
        s.name = name;
        s.first = metrics.front().loss.*field;
        s.last = metrics.back().loss.*field;
        s.min = s.first;
        double sum = 0.0;
        for (const StepMetrics& m : metrics) {
            sum += m.loss.*field;
            s.min = std::min(s.min, m.loss.*field);
        }
        s.mean = sum / static_cast<double>(metrics.size());
        rep.components.push_back(s);
    }
    rep.component_mean_sum = total_loss(rep.components[0].mean, rep.components[1].mean, rep.components[2].mean,
                                        rep.components[3].mean);
    return rep;
}

std::string format_report(const RunReport& rep) {
    std::ostringstream out;
    out << "steps " << rep.steps << "\n\n";
    out << std::left << std::setw(8) << "loss" << std::right << std::setw(12) << "first" << std::setw(12) << "last"
        << std::setw(12) << "mean" << std::setw(12) << "min" << '\n';
    out << std::fixed << std::setprecision(6);
    for (const ComponentSummary& s : rep.components) {
        out << std::left << std::setw(8) << s.name << std::right << std::setw(12) << s.first << std::setw(12)
            << s.last << std::setw(12) << s.mean << std::setw(12) << s.min << '\n';
    }
    out << std::left << std::setw(8) << "sum" << std::right << std::setw(36) << rep.component_mean_sum
        << "  (sum of component means)\n";
    if (rep.manifest) {
        const CorpusManifest& m = *rep.manifest;
        const auto n = static_cast<double>(std::max<std::size_t>(m.example_count, 1));
        const auto ratios = [&](const char* name, auto counts) {
            out << std::left << std::setw(8) << name << std::right;
            for (const auto c : counts) {
                out << std::setw(12) << static_cast<double>(c) / n;
            }
            out << '\n';
        };
        out << "\nlabel ratios over " << m.example_count << " examples\n";
        ratios("itm", m.itm_counts);
        ratios("ikm", m.ikm_counts);
        ratios("iec", m.iec_counts);
        out << std::left << std::setw(8) << "masked" << std::right << std::setw(12)
            << (m.maskable_tokens ? static_cast<double>(m.masked_tokens) / static_cast<double>(m.maskable_tokens) : 0.0)
            << '\n';
    }
    if (rep.zero_shot) {
        out << "\nzero-shot accuracy " << rep.zero_shot->value("accuracy", 0.0) << " ("
            << rep.zero_shot->value("correct", 0) << " correct)\n";
    }
    return out.str();
}

void write_report_files(const std::filesystem::path& dir, const RunReport& rep,
                        std::span<const StepMetrics> metrics) {
    std::filesystem::create_directories(dir);
    const auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) {
            throw Error(ErrorKind::io, "cannot write " + (dir / name).string());
        }
        return out;
    };
    open("summary.txt") << format_report(rep);
    nlohmann::json j = {{"steps", rep.steps}, {"component_mean_sum", rep.component_mean_sum}};
    for (const ComponentSummary& s : rep.components) {
        j["components"][s.name] = {{"first", s.first}, {"last", s.last}, {"mean", s.mean}, {"min", s.min}};
    }
    if (rep.manifest) {
        j["label_counts"] = {{"itm", rep.manifest->itm_counts},
                             {"ikm", rep.manifest->ikm_counts},
                             {"iec", rep.manifest->iec_counts},
                             {"masked_tokens", rep.manifest->masked_tokens},
                             {"maskable_tokens", rep.manifest->maskable_tokens}};
    }
    if (rep.zero_shot) {
        j["zero_shot"] = *rep.zero_shot;
    }
    open("summary.json") << j.dump(2) << '\n';
    auto tsv = open("loss_curves.tsv");
    tsv << "step\tlr\tmlm\titm\tikm\tiec\ttotal\n";
    tsv << std::setprecision(9);
    for (const StepMetrics& m : metrics) {
        tsv << m.step << '\t' << m.lr << '\t' << m.loss.mlm << '\t' << m.loss.itm << '\t' << m.loss.ikm << '\t'
            << m.loss.iec << '\t' << m.loss.total << '\n';
    }
}

}  // namespace geovlp
