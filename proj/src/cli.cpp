// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/cli.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geovlp/assembler.h"
#include "geovlp/concept_extract.h"
#include "geovlp/error.h"
#include "geovlp/formats.h"
#include "geovlp/gradcheck.h"
#include "geovlp/model.h"
#include "geovlp/parallel.h"
#include "geovlp/selftest.h"
#include "geovlp/synth.h"
#include "geovlp/train_eval.h"

namespace geovlp {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class LogLevel { error, warn, info, debug };

struct Context {
    std::ostream& out;
    std::ostream& err;
    LogLevel level = LogLevel::info;
    std::size_t threads = default_thread_count();
    json effective;           // options of the active subcommand
    std::string config_hash;  // digest of `effective`

    void log(LogLevel at, const std::string& message) const {
        if (at <= level) {
            err << message << '\n';
        }
    }
    void warn_all(const Diagnostics& diag) const {
        for (const auto& w : diag.warnings) {
            if (LogLevel::warn <= level) {
                err << json{{"warning", w}}.dump() << '\n';
            }
        }
    }
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    return out;
}

template <std::size_t K>
std::array<std::uint32_t, K> to_ratio(const std::vector<std::uint32_t>& v, const char* flag) {
    if (v.size() != K) {
        throw Error(ErrorKind::validation, std::string(flag) + " needs " + std::to_string(K) + " comma-separated weights");
    }
    std::array<std::uint32_t, K> r{};
    std::copy(v.begin(), v.end(), r.begin());
    return r;
}

void emit(const Context& ctx, json summary) {
    summary["config_hash"] = ctx.config_hash;
    ctx.out << summary.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Subcommand options

struct ExtractOpts {
    std::string parses;
    std::string mode = "concept";
    std::string out;
};

struct BuildKbOpts {
    std::string pages;
    std::string parses;
    std::size_t budget = 64;
    std::string out;
};

struct SamplerOpts {
    double tau = 0.3;
    std::size_t ikm_candidates = 200;
    std::size_t iec_sample_images = 20;
    std::size_t top_k = 10;
    std::string metric = "euclidean";

    SamplerConfig config(std::uint64_t seed) const {
        SamplerConfig c;
        c.tau = tau;
        c.ikm_candidate_count = ikm_candidates;
        c.iec_sample_images = iec_sample_images;
        c.top_k_objects = top_k;
        c.rng_seed = seed;
        if (metric == "euclidean") {
            c.metric = VisualMetric::euclidean;
        } else if (metric == "cosine") {
            c.metric = VisualMetric::cosine;
        } else {
            throw Error(ErrorKind::validation, "--visual-metric must be euclidean or cosine");
        }
        return c;
    }
};

struct InputOpts {
    std::string records;
    std::string kb;
    std::string embeddings;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct CorpusOpts {
    InputOpts in;
    SamplerOpts sampler;
    double mlm_rate = 0.15;
    std::vector<std::uint32_t> itm_ratio{2, 1, 1};
    std::vector<std::uint32_t> ikm_ratio{2, 1, 1};
    std::vector<std::uint32_t> iec_ratio{1, 1};
    std::size_t max_text_tokens = 70;
    std::size_t max_objects = 50;
};

struct TrainOpts {
    std::string corpus;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    double lr = 1e-4;
    std::size_t checkpoint_interval = 0;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn = 256;
    double dropout = 0.1;
};

struct EvalOpts {
    std::string checkpoint;
    std::string task;
    std::string out;
};

struct ReportOpts {
    std::string metrics;
    std::string corpus;
    std::string zeroshot;
    std::string out;
};

struct GradOpts {
    std::size_t hidden = 8;
    std::size_t layers = 1;
    std::size_t heads = 2;
    std::size_t ffn = 16;
    std::size_t vocab = 15;
    std::size_t visual_in = 7;
    std::size_t text_len = 6;
    std::size_t visual_len = 3;
    std::size_t batch = 2;
    double epsilon = 1e-4;
    double tolerance = 1e-4;
    std::uint64_t seed = 0;
};

struct SynthOpts {
    std::string kind = "world";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t images = 1000;
    std::size_t clusters = 8;
    std::size_t concepts_per_cluster = 25;
    std::size_t feature_dim = 16;
    std::size_t classes = 4;
    std::size_t items_per_class = 2;
    std::size_t copies = 1;
};

// ---------------------------------------------------------------------------
// Subcommand bodies

int cmd_extract(const Context& ctx, const ExtractOpts& o) {
    if (o.mode != "concept" && o.mode != "category") {
        throw Error(ErrorKind::validation, "--mode must be concept or category");
    }
    const auto sentences = read_parse_file(o.parses);
    std::ostringstream table;
    std::size_t ok = 0, failed = 0;
    for (const ParsedSentence& s : sentences) {
        try {
            const ExtractedPhrase p = o.mode == "concept" ? extract_concept_name(s.tokens) : extract_category(s.tokens);
            table << s.sentence_id << '\t' << p.text << '\n';
            ++ok;
        } catch (const Error& e) {
            ++failed;
            ctx.err << json{{"error", to_string(e.kind())}, {"sentence_id", s.sentence_id}, {"message", e.what()}}.dump()
                    << '\n';
        }
    }
    const json summary = {{"command", "extract"}, {"mode", o.mode}, {"extracted", ok}, {"failed", failed},
                          {"config_hash", ctx.config_hash}};
    if (o.out.empty()) {
        ctx.out << table.str();
        ctx.log(LogLevel::info, summary.dump());
    } else {
        open_out(o.out) << table.str();
        ctx.out << summary.dump() << '\n';
    }
    return kExitOk;
}

int cmd_build_kb(const Context& ctx, const BuildKbOpts& o) {
    const auto sentences = read_parse_file(o.parses);
    std::map<std::string, const ParsedSentence*> by_id;
    for (const auto& s : sentences) {
        by_id.emplace(s.sentence_id, &s);
    }
    std::ifstream in(o.pages);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + o.pages);
    }
    Diagnostics diag;
    std::vector<WikiPage> pages;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const std::string where = o.pages + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::malformed_row, where + ": " + e.what());
        }
        if (!j.contains("name") || !j.contains("text")) {
            throw Error(ErrorKind::missing_field, where + ": page needs name and text");
        }
        WikiPage p;
        p.concept_name = j.at("name").get<std::string>();
        p.full_text = j.at("text").get<std::string>();
        const std::string id = j.value("parse_id", p.concept_name);
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            diag.warnings.push_back(where + ": no parse with id '" + id + "'; page skipped");
            continue;
        }
        p.first_sentence = it->second->tokens;
        pages.push_back(std::move(p));
    }
    const auto kb = build_knowledge_base(pages, o.budget, &diag);
    ctx.warn_all(diag);
    auto out = open_out(o.out);
    write_knowledge_stream(out, kb);
    emit(ctx, {{"command", "build-kb"}, {"pages", pages.size()}, {"concepts", kb.size()}, {"out", o.out}});
    return kExitOk;
}

struct Inputs {
    std::vector<ImageRecord> records;
    std::vector<VisualConcept> kb;
    EmbeddingTable table{1};
};

Inputs load_inputs(const Context& ctx, const InputOpts& o) {
    Inputs in;
    in.records = read_records(o.records);
    in.kb = read_knowledge_base(o.kb);
    Diagnostics diag;
    in.table = read_embedding_table(o.embeddings, &diag);
    ctx.warn_all(diag);
    return in;
}

json selection_json(const std::optional<KnowledgeSelection>& s, std::span<const VisualConcept> kb) {
    if (!s) {
        return nullptr;
    }
    return {{"concept", kb[s->pool_index].name}, {"similarity", s->similarity}, {"considered", s->considered.size()}};
}

int cmd_sample_audit(const Context& ctx, const InputOpts& in_opts, const SamplerOpts& so) {
    const Inputs in = load_inputs(ctx, in_opts);
    const std::uint64_t seed = *in_opts.seed;
    const auto prepared = audit_samplers(in.records, in.kb, in.table, so.config(seed), seed, ctx.threads);
    auto out = open_out(in_opts.out);
    std::size_t failures = 0;
    for (const PreparedRecord& p : prepared) {
        json j = {{"image_id", p.record.image_id},
                  {"concept", p.concept_index ? json(in.kb[*p.concept_index].name) : json(nullptr)},
                  {"located", p.located ? json(*p.located) : json(nullptr)},
                  {"propagated", p.propagated},
                  {"type2", selection_json(p.type2, in.kb)},
                  {"type3", selection_json(p.type3, in.kb)},
                  {"failures", p.failures}};
        if (p.replacement) {
            const auto& r = *p.replacement;
            j["replacement"] = {{"target", r.target_object_index},   {"donor_image_id", r.donor_image_id},
                                {"donor_object", r.donor_object_index}, {"donor_tag", r.donor_tag},
                                {"visual_distance", r.visual_distance}, {"category_similarity", r.category_similarity}};
        } else {
            j["replacement"] = nullptr;
        }
        failures += p.failures.size();
        out << j.dump() << '\n';
    }
    emit(ctx, {{"command", "sample-audit"},
               {"seed", seed},
               {"records", prepared.size()},
               {"failures", failures},
               {"out", in_opts.out}});
    return kExitOk;
}

int cmd_build_corpus(const Context& ctx, const CorpusOpts& o) {
    const Inputs in = load_inputs(ctx, o.in);
    const std::uint64_t seed = *o.in.seed;
    CorpusBuildOptions opts;
    opts.sampler = o.sampler.config(seed);
    opts.assembly.mlm_rate = o.mlm_rate;
    opts.assembly.itm_ratio = to_ratio<3>(o.itm_ratio, "--itm-ratio");
    opts.assembly.ikm_ratio = to_ratio<3>(o.ikm_ratio, "--ikm-ratio");
    opts.assembly.iec_ratio = to_ratio<2>(o.iec_ratio, "--iec-ratio");
    opts.assembly.max_text_tokens = o.max_text_tokens;
    opts.assembly.max_objects = o.max_objects;
    opts.assembly.rng_seed = seed;
    opts.threads = ctx.threads;
    Diagnostics diag;
    const Corpus corpus = build_corpus(in.records, in.kb, in.table, opts, seed, &diag);
    ctx.warn_all(diag);
    write_corpus(o.in.out, corpus);
    const auto& m = corpus.manifest;
    emit(ctx, {{"command", "build-corpus"},
               {"seed", seed},
               {"examples", m.example_count},
               {"itm_counts", m.itm_counts},
               {"ikm_counts", m.ikm_counts},
               {"iec_counts", m.iec_counts},
               {"masked_tokens", m.masked_tokens},
               {"maskable_tokens", m.maskable_tokens},
               {"corpus_config_hash", m.config_hash},
               {"failures", m.failures.size()},
               {"out", o.in.out}});
    return kExitOk;
}

int cmd_train(const Context& ctx, const TrainOpts& o) {
    const Corpus corpus = read_corpus(o.corpus);
    ModelConfig model;
    model.hidden = o.hidden;
    model.layers = o.layers;
    model.heads = o.heads;
    model.ffn = o.ffn;
    model.dropout = o.dropout;
    TrainRunConfig run;
    run.batch_size = o.batch_size;
    run.max_steps = o.steps;
    run.lr = o.lr;
    run.seed = *o.seed;
    run.checkpoint_interval = o.checkpoint_interval;
    const fs::path dir = o.out;
    fs::create_directories(dir);
    auto metrics = open_out(dir / "metrics.jsonl");
    const auto start = std::chrono::steady_clock::now();
    const TrainResult r = train(corpus, model, run, &metrics, [&](std::size_t step, const Checkpoint& ck) {
        Checkpoint copy = ck;
        copy.metadata["run_config_hash"] = ctx.config_hash;
        const bool final = step == run.max_steps;
        write_checkpoint(dir / (final ? std::string("checkpoint.bin") : "checkpoint-" + std::to_string(step) + ".bin"),
                         copy);
        ctx.log(LogLevel::debug, "checkpoint at step " + std::to_string(step));
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    open_out(dir / "run.json") << json{{"seed", run.seed}, {"config", ctx.effective}, {"config_hash", ctx.config_hash}}
                                      .dump(2)
                               << '\n';
    const auto& last = r.metrics.back().loss;
    emit(ctx, {{"command", "train"},
               {"seed", run.seed},
               {"steps", r.metrics.size()},
               {"final_total", last.total},
               {"final", {{"mlm", last.mlm}, {"itm", last.itm}, {"ikm", last.ikm}, {"iec", last.iec}}},
               {"parameters", r.checkpoint.params.parameter_count()},
               {"seconds", seconds},
               {"out", o.out}});
    return kExitOk;
}

AssemblyConfig assembly_from_metadata(const json& metadata) {
    AssemblyConfig a;
    if (metadata.contains("assembly")) {
        const json& j = metadata.at("assembly");
        a.max_text_tokens = j.value("max_text_tokens", a.max_text_tokens);
        a.max_objects = j.value("max_objects", a.max_objects);
    }
    return a;
}

int cmd_eval(const Context& ctx, const EvalOpts& o) {
    const Checkpoint ck = read_checkpoint(o.checkpoint);
    if (!ck.metadata.contains("vocab")) {
        throw Error(ErrorKind::validation, "checkpoint carries no vocabulary");
    }
    const Vocabulary vocab = Vocabulary::from_tokens(ck.metadata.at("vocab").get<std::vector<std::string>>());
    const ZeroShotTask task = read_zero_shot_task(o.task);
    const ZeroShotResult r =
        zero_shot_classify(ck.params, ck.config, task, vocab, assembly_from_metadata(ck.metadata), ctx.threads);
    if (!o.out.empty()) {
        json j = to_json(r);
        j["config_hash"] = ctx.config_hash;
        open_out(o.out) << j.dump() << '\n';
    }
    emit(ctx, {{"command", "eval-zeroshot"},
               {"items", task.items.size()},
               {"classes", task.classes.size()},
               {"correct", r.correct},
               {"accuracy", r.accuracy}});
    return kExitOk;
}

int cmd_report(const Context& ctx, const ReportOpts& o) {
    const auto metrics = read_metrics(o.metrics);
    RunReport rep = summarize(metrics);
    if (!o.corpus.empty()) {
        rep.manifest = read_corpus(o.corpus).manifest;
    }
    if (!o.zeroshot.empty()) {
        std::ifstream in(o.zeroshot);
        if (!in) {
            throw Error(ErrorKind::io, "cannot open " + o.zeroshot);
        }
        rep.zero_shot = json::parse(in);
    }
    ctx.out << format_report(rep);
    if (!o.out.empty()) {
        write_report_files(o.out, rep, metrics);
    }
    return kExitOk;
}

int cmd_gradcheck(const Context& ctx, const GradOpts& o) {
    GradCheckConfig c;
    c.model.hidden = o.hidden;
    c.model.layers = o.layers;
    c.model.heads = o.heads;
    c.model.ffn = o.ffn;
    c.model.vocab_size = o.vocab;
    c.model.visual_in = o.visual_in;
    c.model.max_positions = o.text_len;
    c.batch_size = o.batch;
    c.text_len = o.text_len;
    c.visual_len = o.visual_len;
    c.epsilon = o.epsilon;
    c.seed = o.seed;
    const GradCheckReport r = gradient_check(c);
    for (const BlockError& b : r.blocks) {
        ctx.log(LogLevel::debug, json{{"block", b.name}, {"relative_error", b.relative_error}}.dump());
    }
    const bool pass = r.max_relative_error < o.tolerance;
    emit(ctx, {{"command", "gradcheck"},
               {"seed", o.seed},
               {"blocks", r.blocks.size()},
               {"max_relative_error", r.max_relative_error},
               {"max_abs_error", r.max_abs_error},
               {"tolerance", o.tolerance},
               {"pass", pass}});
    if (!pass) {
        ctx.err << json{{"error", "GradientCheckFailed"}, {"max_relative_error", r.max_relative_error}}.dump() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_selftest(const Context& ctx) {
    const auto results = run_selftest();
    std::size_t passed = 0;
    for (const auto& r : results) {
        ctx.out << (r.passed ? "PASS " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  " + r.detail) << '\n';
        passed += r.passed;
    }
    emit(ctx, {{"command", "selftest"}, {"passed", passed}, {"failed", results.size() - passed}});
    return passed == results.size() ? kExitOk : kExitRuntime;
}

int cmd_synth(const Context& ctx, const SynthOpts& o) {
    const fs::path dir = o.out;
    fs::create_directories(dir);
    const std::uint64_t seed = *o.seed;
    SynthWorld world;
    json summary = {{"command", "synth"}, {"kind", o.kind}, {"seed", seed}, {"out", o.out}};
    if (o.kind == "world") {
        SynthConfig c;
        c.images = o.images;
        c.clusters = o.clusters;
        c.concepts_per_cluster = o.concepts_per_cluster;
        c.feature_dim = o.feature_dim;
        c.seed = seed;
        world = make_world(c);
    } else if (o.kind == "task") {
        SynthTaskConfig c;
        c.classes = o.classes;
        c.items_per_class = o.items_per_class;
        c.feature_dim = o.feature_dim;
        c.seed = seed;
        SynthTask task = make_zero_shot_task(c);
        write_zero_shot_task(dir / "task.json", task.task);
        write_corpus(dir / "corpus.jsonl", make_pairing_corpus(task, AssemblyConfig{}, SamplerConfig{}.tau, seed, o.copies));
        world = std::move(task.world);
        summary["items"] = task.task.items.size();
    } else {
        throw Error(ErrorKind::validation, "--kind must be world or task");
    }
    auto records = open_out(dir / "records.jsonl");
    write_records_stream(records, world.records);
    auto kb = open_out(dir / "kb.jsonl");
    write_knowledge_stream(kb, world.knowledge_base);
    auto vectors = open_out(dir / "embeddings.txt");
    write_embedding_stream(vectors, world.table);
    summary["records"] = world.records.size();
    summary["concepts"] = world.knowledge_base.size();
    emit(ctx, summary);
    return kExitOk;
}

// ---------------------------------------------------------------------------

const std::set<std::string> kSubcommands = {"extract", "build-kb",  "sample-audit", "build-corpus", "train",
                                            "eval-zeroshot", "report", "gradcheck", "selftest", "synth"};

// Options that do not change any output bytes stay out of the config hash.
const std::set<std::string> kUnhashed = {"help", "config", "threads", "log-level", "out"};

json effective_options(const CLI::App& sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_name();
        std::string key = name;
        while (!key.empty() && key.front() == '-') {
            key.erase(key.begin());
        }
        if (key.empty() || kUnhashed.count(key)) {
            continue;
        }
        if (opt->count() > 0) {
            const auto& res = opt->results();
            j[key] = res.size() == 1 ? json(res.front()) : json(res);
        } else {
            j[key] = opt->get_default_str();
        }
    }
    return j;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

}  // namespace

std::map<std::string, std::string> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::validation, "cannot open config file " + path);
    }
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
            throw Error(ErrorKind::validation, path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

int run_cli(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
    const auto error_record = [&](std::string_view kind, const std::string& message) {
        err << json{{"error", kind}, {"message", message}}.dump() << '\n';
    };

    CLI::App app{"Geo-diverse vision-language pre-training pipeline", "geovlp"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    Context ctx{out, err, LogLevel::info, default_thread_count(), json::object(), {}};
    std::string config_path;
    std::string log_level = "info";
    std::size_t threads = default_thread_count();
    app.add_option("--config", config_path, "Flat key = value file; keys are long flag names without dashes");
    app.add_option("--log-level", log_level, "error, warn, info or debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
    app.add_option("--threads", threads, "Worker threads for parallel stages")->check(CLI::PositiveNumber);

    ExtractOpts ex;
    auto* s_extract = app.add_subcommand("extract", "Extract concept names or categories from a parse file");
    s_extract->add_option("--parses", ex.parses, "CoNLL-U parse file")->required();
    s_extract->add_option("--mode", ex.mode, "concept or category");
    s_extract->add_option("--out", ex.out, "Output TSV (default stdout)");

    BuildKbOpts kb;
    auto* s_kb = app.add_subcommand("build-kb", "Build a knowledge base from pages and first-sentence parses");
    s_kb->add_option("--pages", kb.pages, "JSONL pages: {name, text, parse_id?}")->required();
    s_kb->add_option("--parses", kb.parses, "CoNLL-U parses of first sentences, keyed by sentence id")->required();
    s_kb->add_option("--knowledge-budget", kb.budget, "Knowledge length in whitespace tokens");
    s_kb->add_option("--out", kb.out, "Output knowledge base JSONL")->required();

    const auto add_inputs = [](CLI::App* s, InputOpts& in) {
        s->add_option("--records", in.records, "Image records JSONL")->required();
        s->add_option("--kb", in.kb, "Knowledge base JSONL")->required();
        s->add_option("--embeddings", in.embeddings, "Word-vector text file")->required();
        s->add_option("--seed", in.seed, "Base seed")->required();
        s->add_option("--out", in.out, "Output file")->required();
    };
    const auto add_sampler = [](CLI::App* s, SamplerOpts& so) {
        s->add_option("--tau", so.tau, "Category similarity threshold");
        s->add_option("--ikm-candidates", so.ikm_candidates, "Candidates drawn for the argmax knowledge sampler");
        s->add_option("--iec-sample-images", so.iec_sample_images, "Donor images sampled per record");
        s->add_option("--top-k", so.top_k, "Objects considered when locating the concept");
        s->add_option("--visual-metric", so.metric, "euclidean or cosine");
    };

    InputOpts audit_in;
    SamplerOpts audit_sampler;
    auto* s_audit = app.add_subcommand("sample-audit", "Run the negative samplers and log every decision");
    add_inputs(s_audit, audit_in);
    add_sampler(s_audit, audit_sampler);

    CorpusOpts co;
    auto* s_corpus = app.add_subcommand("build-corpus", "Assemble a labeled pre-training corpus");
    add_inputs(s_corpus, co.in);
    add_sampler(s_corpus, co.sampler);
    s_corpus->add_option("--mlm-rate", co.mlm_rate, "Token selection rate for masking");
    s_corpus->add_option("--itm-ratio", co.itm_ratio, "ITM label weights")->delimiter(',')->expected(3);
    s_corpus->add_option("--ikm-ratio", co.ikm_ratio, "IKM label weights")->delimiter(',')->expected(3);
    s_corpus->add_option("--iec-ratio", co.iec_ratio, "IEC label weights")->delimiter(',')->expected(2);
    s_corpus->add_option("--max-text-tokens", co.max_text_tokens, "Text length limit including specials");
    s_corpus->add_option("--max-objects", co.max_objects, "Visual rows kept per example");

    TrainOpts tr;
    auto* s_train = app.add_subcommand("train", "Train the encoder on a corpus");
    s_train->add_option("--corpus", tr.corpus, "Corpus file")->required();
    s_train->add_option("--seed", tr.seed, "Seed for initialization, shuffling and dropout")->required();
    s_train->add_option("--out", tr.out, "Output directory")->required();
    s_train->add_option("--steps", tr.steps, "Optimizer steps");
    s_train->add_option("--batch-size", tr.batch_size, "Examples per step");
    s_train->add_option("--lr", tr.lr, "Initial learning rate (linear decay to 0)");
    s_train->add_option("--checkpoint-interval", tr.checkpoint_interval, "Steps between checkpoints (0 = final only)");
    s_train->add_option("--hidden", tr.hidden, "Hidden width");
    s_train->add_option("--layers", tr.layers, "Encoder layers");
    s_train->add_option("--heads", tr.heads, "Attention heads");
    s_train->add_option("--ffn", tr.ffn, "Feed-forward width");
    s_train->add_option("--dropout", tr.dropout, "Dropout rate");

    EvalOpts ev;
    auto* s_eval = app.add_subcommand("eval-zeroshot", "Zero-shot classification by image-text matching score");
    s_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    s_eval->add_option("--task", ev.task, "Zero-shot task JSON")->required();
    s_eval->add_option("--out", ev.out, "Result JSON (scores and predictions)");

    ReportOpts rp;
    auto* s_report = app.add_subcommand("report", "Summarize a training run");
    s_report->add_option("--metrics", rp.metrics, "metrics.jsonl from train")->required();
    s_report->add_option("--corpus", rp.corpus, "Corpus file, for realized label ratios");
    s_report->add_option("--zeroshot", rp.zeroshot, "Result JSON from eval-zeroshot");
    s_report->add_option("--out", rp.out, "Directory for summary and curve files");

    GradOpts gc;
    auto* s_grad = app.add_subcommand("gradcheck", "Compare backward gradients with central differences");
    s_grad->add_option("--hidden", gc.hidden, "Hidden width");
    s_grad->add_option("--layers", gc.layers, "Encoder layers");
    s_grad->add_option("--heads", gc.heads, "Attention heads");
    s_grad->add_option("--ffn", gc.ffn, "Feed-forward width");
    s_grad->add_option("--vocab", gc.vocab, "Vocabulary size");
    s_grad->add_option("--visual-in", gc.visual_in, "Visual row width");
    s_grad->add_option("--text-len", gc.text_len, "Padded text length");
    s_grad->add_option("--visual-len", gc.visual_len, "Padded visual length");
    s_grad->add_option("--batch", gc.batch, "Examples in the batch");
    s_grad->add_option("--epsilon", gc.epsilon, "Finite-difference step");
    s_grad->add_option("--tolerance", gc.tolerance, "Largest accepted relative error");
    s_grad->add_option("--seed", gc.seed, "Seed for parameters and batch");

    auto* s_self = app.add_subcommand("selftest", "Run the built-in oracle checks");

    SynthOpts sy;
    auto* s_synth = app.add_subcommand("synth", "Write a synthetic world or zero-shot task");
    s_synth->add_option("--kind", sy.kind, "world or task");
    s_synth->add_option("--seed", sy.seed, "Generator seed")->required();
    s_synth->add_option("--out", sy.out, "Output directory")->required();
    s_synth->add_option("--images", sy.images, "Images in a world");
    s_synth->add_option("--clusters", sy.clusters, "Category clusters in a world");
    s_synth->add_option("--concepts-per-cluster", sy.concepts_per_cluster, "Concepts per cluster");
    s_synth->add_option("--feature-dim", sy.feature_dim, "Region feature width");
    s_synth->add_option("--classes", sy.classes, "Task classes");
    s_synth->add_option("--items-per-class", sy.items_per_class, "Task items per class");
    s_synth->add_option("--copies", sy.copies, "Masked copies of each (item, class) pair in the task corpus");

    std::vector<std::string> args = args_in;
    const auto first_positional = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return !a.empty() && a.front() != '-';
    });
    const bool wants_help = has_flag(args, "--help") || has_flag(args, "-h");
    if (!wants_help) {
        // A global option value could precede the subcommand, so only check the
        // first token that is neither an option nor an option value.
        auto it = args.begin();
        while (it != args.end() && it->rfind("--", 0) == 0) {
            it += (it->find('=') == std::string::npos && it + 1 != args.end()) ? 2 : 1;
        }
        if (it == args.end() || !kSubcommands.count(*it)) {
            const std::string got = it == args.end() ? (first_positional == args.end() ? "" : *first_positional) : *it;
            error_record(to_string(ErrorKind::unknown_subcommand),
                         got.empty() ? "no subcommand given" : "unknown subcommand '" + got + "'");
            err << app.help();
            return kExitValidation;
        }
    }

    try {
        // Config values fill in flags that were not given on the command line.
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                config_path = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                config_path = args[i].substr(9);
            }
        }
        if (!config_path.empty()) {
            for (const auto& [key, value] : read_flat_config(config_path)) {
                if (!has_flag(args, "--" + key)) {
                    args.push_back("--" + key + "=" + value);
                }
            }
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        error_record(to_string(ErrorKind::validation), e.what());
        return kExitValidation;
    } catch (const Error& e) {
        error_record(to_string(e.kind()), e.what());
        return kExitValidation;
    }

    ctx.threads = threads;
    ctx.level = log_level == "error" ? LogLevel::error
                : log_level == "warn" ? LogLevel::warn
                : log_level == "debug" ? LogLevel::debug
                                       : LogLevel::info;
    CLI::App* sub = app.get_subcommands().front();
    ctx.effective = effective_options(*sub);
    ctx.effective["command"] = sub->get_name();
    ctx.config_hash = fnv1a_hex(ctx.effective.dump());

    try {
        if (sub == s_extract) return cmd_extract(ctx, ex);
        if (sub == s_kb) return cmd_build_kb(ctx, kb);
        if (sub == s_audit) return cmd_sample_audit(ctx, audit_in, audit_sampler);
        if (sub == s_corpus) return cmd_build_corpus(ctx, co);
        if (sub == s_train) return cmd_train(ctx, tr);
        if (sub == s_eval) return cmd_eval(ctx, ev);
        if (sub == s_report) return cmd_report(ctx, rp);
        if (sub == s_grad) return cmd_gradcheck(ctx, gc);
        if (sub == s_self) return cmd_selftest(ctx);
        if (sub == s_synth) return cmd_synth(ctx, sy);
        error_record(to_string(ErrorKind::unknown_subcommand), sub->get_name());
        return kExitValidation;
    } catch (const Error& e) {
        error_record(to_string(e.kind()), e.what());
        return e.kind() == ErrorKind::validation ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        error_record("Runtime", e.what());
        return kExitRuntime;
    }
}

}  // namespace geovlp
