// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats and the domain types shared by the whole pipeline.
//
//   parse file      CoNLL-U compatible, 10 tab-separated columns per token
//   detections      one JSON object per line, one image per record
//   embeddings      "<word> <f1> ... <fD>" lines, optional "<count> <dim>" header
//   knowledge base  one JSON object per line: {name, category, knowledge}
//   records         detections record plus caption / concept_name / knowledge
//   corpus          manifest record followed by one TrainingExample per line

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace geovlp {

inline constexpr int kFormatVersion = 1;

/// Number of box-geometry values appended to each region feature at assembly.
inline constexpr std::size_t kGeometryWidth = 6;

struct Diagnostics {
    std::vector<std::string> warnings;
};

struct ParseToken {
    int index = 0;  // 1-based
    std::string surface;
    std::string upos;
    int head = 0;  // 0 = root
    std::string deprel;

    bool operator==(const ParseToken&) const = default;
};

struct ParsedSentence {
    std::string sentence_id;
    std::vector<ParseToken> tokens;

    bool operator==(const ParsedSentence&) const = default;
};

struct BoundingBox {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t w = 0;
    std::int64_t h = 0;

    std::int64_t area() const { return w * h; }
    bool operator==(const BoundingBox&) const = default;
};

struct DetectedObject {
    std::string tag;
    BoundingBox bbox;
    std::int64_t area = 0;
    float score = 0.0f;
    std::vector<float> feature;
    std::optional<std::string> concept_override;

    /// Tag as shown to the model: the located concept name when one was assigned.
    const std::string& display_tag() const { return concept_override ? *concept_override : tag; }

    bool operator==(const DetectedObject&) const = default;
};

struct ImageRecord {
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::string caption;
    std::vector<DetectedObject> objects;
    std::optional<std::string> concept_name;
    std::optional<std::string> knowledge;

    bool operator==(const ImageRecord&) const = default;
};

struct ImageDetections {
    std::string image_id;
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<DetectedObject> objects;

    bool operator==(const ImageDetections&) const = default;
};

struct VisualConcept {
    std::string name;
    std::string category;
    std::string knowledge;

    bool operator==(const VisualConcept&) const = default;
};

/// Word vectors in insertion order with a hash index.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dimension);

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return words_.size(); }

    /// Returns false (and leaves the table unchanged) if `word` already exists.
    bool add(const std::string& word, std::span<const float> vector);

    /// nullptr when the word is out of vocabulary.
    const float* find(const std::string& word) const;

    const std::vector<std::string>& words() const { return words_; }
    std::span<const float> vector(std::size_t i) const {
        return {values_.data() + i * dimension_, dimension_};
    }

    bool operator==(const EmbeddingTable& other) const {
        return dimension_ == other.dimension_ && words_ == other.words_ && values_ == other.values_;
    }

private:
    std::size_t dimension_;
    std::vector<std::string> words_;
    std::vector<float> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Dense row-major float matrix used for per-object visual rows.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;

    std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
    std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }

    bool operator==(const FeatureMatrix&) const = default;
};

enum Segment : std::int32_t { kSegmentCaption = 0, kSegmentKnowledge = 1, kSegmentTags = 2 };

struct TrainingExample {
    std::vector<std::int32_t> token_ids;
    std::vector<std::int32_t> segment_ids;
    FeatureMatrix visual_features;
    std::vector<std::int32_t> mlm_positions;
    std::vector<std::int32_t> mlm_targets;
    int itm_label = 0;
    int ikm_label = 0;
    int iec_label = 0;
    std::string source_image_id;

    // Sampler provenance, kept so label invariants can be audited after the fact.
    std::string knowledge_concept;
    int located_object = -1;
    std::string donor_image_id;
    int donor_object = -1;

    bool operator==(const TrainingExample&) const = default;
};

/// Header record of a corpus file.
struct CorpusManifest {
    int format_version = kFormatVersion;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> vocab;
    std::size_t example_count = 0;
    std::array<std::size_t, 3> itm_counts{};
    std::array<std::size_t, 3> ikm_counts{};
    std::array<std::size_t, 2> iec_counts{};
    std::size_t masked_tokens = 0;
    std::size_t maskable_tokens = 0;
    std::vector<std::string> failures;

    bool operator==(const CorpusManifest&) const = default;
};

struct Corpus {
    CorpusManifest manifest;
    std::vector<TrainingExample> examples;

    bool operator==(const Corpus&) const = default;
};

// Parse files.
std::vector<ParsedSentence> read_parse_file(const std::filesystem::path& path);
std::vector<ParsedSentence> read_parse_stream(std::istream& in, const std::string& source = "<stream>");
void write_parse_stream(std::ostream& out, std::span<const ParsedSentence> sentences);
/// Checks single root, contiguous indices, head existence and reachability.
void validate_parse(const ParsedSentence& sentence, const std::string& where = {});

// Detections.
std::map<std::string, ImageDetections> read_detections(const std::filesystem::path& path,
                                                       std::optional<std::size_t> feature_dim = {});
std::map<std::string, ImageDetections> read_detections_stream(std::istream& in,
                                                              std::optional<std::size_t> feature_dim = {},
                                                              const std::string& source = "<stream>");
void write_detections_stream(std::ostream& out, std::span<const ImageDetections> images);

// Embedding tables.
EmbeddingTable read_embedding_table(const std::filesystem::path& path, Diagnostics* diag = nullptr);
EmbeddingTable read_embedding_stream(std::istream& in, Diagnostics* diag = nullptr,
                                     const std::string& source = "<stream>");
void write_embedding_stream(std::ostream& out, const EmbeddingTable& table);

// Knowledge base.
std::vector<VisualConcept> read_knowledge_base(const std::filesystem::path& path);
std::vector<VisualConcept> read_knowledge_stream(std::istream& in, const std::string& source = "<stream>");
void write_knowledge_stream(std::ostream& out, std::span<const VisualConcept> concepts);

// Image records.
std::vector<ImageRecord> read_records(const std::filesystem::path& path);
std::vector<ImageRecord> read_records_stream(std::istream& in, const std::string& source = "<stream>");
void write_records_stream(std::ostream& out, std::span<const ImageRecord> records);

// Corpus.
Corpus read_corpus(const std::filesystem::path& path);
Corpus read_corpus_stream(std::istream& in, const std::string& source = "<stream>");
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
void write_corpus_stream(std::ostream& out, const Corpus& corpus);
void write_manifest_line(std::ostream& out, const CorpusManifest& manifest);
void write_example_line(std::ostream& out, const TrainingExample& example);

// JSON mappings shared with other file formats.
nlohmann::json to_json(const DetectedObject& object);
DetectedObject detected_object_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json to_json(const ImageRecord& record);
ImageRecord image_record_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json to_json(const TrainingExample& example);
TrainingExample training_example_from_json(const nlohmann::json& j, const std::string& where);

/// 64-bit FNV-1a digest rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace geovlp
