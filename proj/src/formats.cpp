// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#include "geovlp/formats.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "geovlp/error.h"

namespace geovlp {

using nlohmann::json;

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "IoError";
        case ErrorKind::malformed_row: return "MalformedRow";
        case ErrorKind::dangling_head: return "DanglingHead";
        case ErrorKind::multiple_roots: return "MultipleRoots";
        case ErrorKind::dimension_mismatch: return "DimensionMismatch";
        case ErrorKind::negative_box: return "NegativeBox";
        case ErrorKind::area_mismatch: return "AreaMismatch";
        case ErrorKind::ragged_vector: return "RaggedVector";
        case ErrorKind::missing_field: return "MissingField";
        case ErrorKind::no_noun_found: return "NoNounFound";
        case ErrorKind::empty_phrase: return "EmptyPhrase";
        case ErrorKind::empty_pool: return "EmptyPool";
        case ErrorKind::no_dissimilar_concept: return "NoDissimilarConcept";
        case ErrorKind::no_objects: return "NoObjects";
        case ErrorKind::no_valid_donor: return "NoValidDonor";
        case ErrorKind::index_out_of_range: return "IndexOutOfRange";
        case ErrorKind::shape_mismatch: return "ShapeMismatch";
        case ErrorKind::non_finite_loss: return "NonFiniteLoss";
        case ErrorKind::corpus_manifest_mismatch: return "CorpusManifestMismatch";
        case ErrorKind::validation: return "ValidationError";
        case ErrorKind::unknown_subcommand: return "UnknownSubcommand";
    }
    return "Error";
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path.string());
    }
    return in;
}

std::string at_line(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(sep, start);
        out.emplace_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

std::optional<int> parse_int(std::string_view s) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

std::string trim(std::string_view s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

// Streams one JSON object per non-blank line.
template <typename Fn>
void for_each_json_line(std::istream& in, const std::string& source, Fn&& fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::malformed_row, at_line(source, lineno) + ": " + e.what());
        }
        if (!j.is_object()) {
            throw Error(ErrorKind::malformed_row, at_line(source, lineno) + ": expected an object");
        }
        fn(j, at_line(source, lineno));
    }
}

const json& require(const json& j, const char* key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        throw Error(ErrorKind::missing_field, where + ": missing field '" + key + "'");
    }
    return *it;
}

std::string require_string(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
        throw Error(ErrorKind::missing_field, where + ": field '" + key + "' must be a non-empty string");
    }
    return v.get<std::string>();
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& where) {
    try {
        return require(j, key, where).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::malformed_row, where + ": field '" + key + "': " + e.what());
    }
}

void check_version(const json& j, const std::string& where) {
    const auto it = j.find("format_version");
    if (it != j.end() && it->get<int>() != kFormatVersion) {
        throw Error(ErrorKind::validation,
                    where + ": unsupported format_version " + std::to_string(it->get<int>()));
    }
}

ImageDetections detections_from_json(const json& j, const std::string& where) {
    ImageDetections image;
    image.image_id = require_string(j, "image_id", where);
    image.width = get_as<std::int64_t>(j, "width", where);
    image.height = get_as<std::int64_t>(j, "height", where);
    if (image.width <= 0 || image.height <= 0) {
        throw Error(ErrorKind::negative_box, where + ": image size must be positive");
    }
    for (const json& o : require(j, "objects", where)) {
        image.objects.push_back(detected_object_from_json(o, where));
    }
    return image;
}

void check_feature_dims(const std::vector<DetectedObject>& objects, std::optional<std::size_t>& dim,
                        const std::string& where) {
    for (const DetectedObject& o : objects) {
        if (!dim) {
            dim = o.feature.size();
        }
        if (o.feature.size() != *dim) {
            throw Error(ErrorKind::dimension_mismatch,
                        where + ": object '" + o.tag + "' has feature dimension " +
                            std::to_string(o.feature.size()) + ", expected " + std::to_string(*dim));
        }
    }
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Parse files

void validate_parse(const ParsedSentence& sentence, const std::string& where) {
    const auto& tokens = sentence.tokens;
    const std::string prefix = where.empty() ? "sentence '" + sentence.sentence_id + "'" : where;
    if (tokens.empty()) {
        throw Error(ErrorKind::malformed_row, prefix + ": empty sentence");
    }
    int roots = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].index != static_cast<int>(i) + 1) {
            throw Error(ErrorKind::malformed_row, prefix + ": token indices are not contiguous from 1");
        }
        if (tokens[i].head < 0 || tokens[i].head > static_cast<int>(tokens.size())) {
            throw Error(ErrorKind::dangling_head, prefix + ": token " + std::to_string(tokens[i].index) +
                                                      " has head " + std::to_string(tokens[i].head) +
                                                      " outside 0.." + std::to_string(tokens.size()));
        }
        if (tokens[i].head == 0) {
            ++roots;
        }
    }
    if (roots != 1) {
        throw Error(ErrorKind::multiple_roots,
                    prefix + ": expected exactly one root, found " + std::to_string(roots));
    }
    for (const ParseToken& t : tokens) {
        int cursor = t.index;
        for (std::size_t steps = 0; cursor != 0; ++steps) {
            if (steps > tokens.size()) {
                throw Error(ErrorKind::dangling_head,
                            prefix + ": token " + std::to_string(t.index) + " does not reach the root");
            }
            cursor = tokens[cursor - 1].head;
        }
    }
}

std::vector<ParsedSentence> read_parse_stream(std::istream& in, const std::string& source) {
    std::vector<ParsedSentence> sentences;
    ParsedSentence current;
    std::vector<std::size_t> token_lines;
    std::size_t lineno = 0;

    const auto flush = [&] {
        if (current.tokens.empty()) {
            current = {};
            return;
        }
        if (current.sentence_id.empty()) {
            current.sentence_id = std::to_string(sentences.size() + 1);
        }
        const int n = static_cast<int>(current.tokens.size());
        for (std::size_t i = 0; i < current.tokens.size(); ++i) {
            const int head = current.tokens[i].head;
            if (head < 0 || head > n) {
                throw Error(ErrorKind::dangling_head,
                            at_line(source, token_lines[i]) + ": head " + std::to_string(head) +
                                " references a missing token (sentence has " + std::to_string(n) + ")");
            }
        }
        validate_parse(current, at_line(source, token_lines.front()) + " sentence '" +
                                    current.sentence_id + "'");
        sentences.push_back(std::move(current));
        current = {};
        token_lines.clear();
    };

    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            flush();
            continue;
        }
        if (line.front() == '#') {
            const std::string body = trim(std::string_view(line).substr(1));
            for (const std::string_view key : {"sentence_id", "sent_id"}) {
                if (body.starts_with(key)) {
                    const auto eq = body.find('=');
                    if (eq != std::string::npos) {
                        current.sentence_id = trim(std::string_view(body).substr(eq + 1));
                    }
                }
            }
            continue;
        }
        const auto cols = split(line, '\t');
        if (cols.size() != 10) {
            throw Error(ErrorKind::malformed_row, at_line(source, lineno) + ": expected 10 columns, found " +
                                                      std::to_string(cols.size()));
        }
        // Multiword ranges ("1-2") and empty nodes ("1.1") carry no syntactic head.
        if (cols[0].find_first_of("-.") != std::string::npos) {
            continue;
        }
        const auto id = parse_int(cols[0]);
        const auto head = parse_int(cols[6]);
        if (!id || !head) {
            throw Error(ErrorKind::malformed_row, at_line(source, lineno) + ": non-integer ID or HEAD");
        }
        if (*id != static_cast<int>(current.tokens.size()) + 1) {
            throw Error(ErrorKind::malformed_row, at_line(source, lineno) + ": token ID " + cols[0] +
                                                      " breaks the 1-based sequence");
        }
        current.tokens.push_back(ParseToken{*id, cols[1], cols[3], *head, cols[7]});
        token_lines.push_back(lineno);
    }
    flush();
    return sentences;
}

std::vector<ParsedSentence> read_parse_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_parse_stream(in, path.string());
}

void write_parse_stream(std::ostream& out, std::span<const ParsedSentence> sentences) {
    for (const ParsedSentence& s : sentences) {
        out << "# sentence_id = " << s.sentence_id << '\n';
        for (const ParseToken& t : s.tokens) {
            out << t.index << '\t' << t.surface << "\t_\t" << t.upos << "\t_\t_\t" << t.head << '\t'
                << t.deprel << "\t_\t_\n";
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Detections and records

json to_json(const DetectedObject& object) {
    json j = {{"tag", object.tag},
              {"bbox", {object.bbox.x, object.bbox.y, object.bbox.w, object.bbox.h}},
              {"area", object.area},
              {"score", object.score},
              {"feature", object.feature}};
    if (object.concept_override) {
        j["concept_override"] = *object.concept_override;
    }
    return j;
}

DetectedObject detected_object_from_json(const json& j, const std::string& where) {
    DetectedObject o;
    o.tag = require_string(j, "tag", where);
    const auto box = get_as<std::vector<std::int64_t>>(j, "bbox", where);
    if (box.size() != 4) {
        throw Error(ErrorKind::malformed_row, where + ": bbox must have 4 entries");
    }
    o.bbox = {box[0], box[1], box[2], box[3]};
    if (o.bbox.w <= 0 || o.bbox.h <= 0) {
        throw Error(ErrorKind::negative_box, where + ": object '" + o.tag + "' has non-positive box size " +
                                                 std::to_string(o.bbox.w) + "x" + std::to_string(o.bbox.h));
    }
    o.area = o.bbox.area();
    if (const auto it = j.find("area"); it != j.end() && it->get<std::int64_t>() != o.area) {
        throw Error(ErrorKind::area_mismatch, where + ": object '" + o.tag + "' stores area " +
                                                  std::to_string(it->get<std::int64_t>()) + " but w*h = " +
                                                  std::to_string(o.area));
    }
    if (const auto it = j.find("score"); it != j.end()) {
        o.score = it->get<float>();
    }
    o.feature = get_as<std::vector<float>>(j, "feature", where);
    if (const auto it = j.find("concept_override"); it != j.end() && !it->is_null()) {
        o.concept_override = it->get<std::string>();
    }
    return o;
}

std::map<std::string, ImageDetections> read_detections_stream(std::istream& in,
                                                              std::optional<std::size_t> feature_dim,
                                                              const std::string& source) {
    std::map<std::string, ImageDetections> images;
    for_each_json_line(in, source, [&](const json& j, const std::string& where) {
        check_version(j, where);
        ImageDetections image = detections_from_json(j, where);
        check_feature_dims(image.objects, feature_dim, where);
        const std::string id = image.image_id;
        if (!images.emplace(id, std::move(image)).second) {
            throw Error(ErrorKind::validation, where + ": duplicate image_id '" + id + "'");
        }
    });
    return images;
}

std::map<std::string, ImageDetections> read_detections(const std::filesystem::path& path,
                                                       std::optional<std::size_t> feature_dim) {
    auto in = open_input(path);
    return read_detections_stream(in, feature_dim, path.string());
}

void write_detections_stream(std::ostream& out, std::span<const ImageDetections> images) {
    for (const ImageDetections& image : images) {
        json objects = json::array();
        for (const DetectedObject& o : image.objects) {
            objects.push_back(to_json(o));
        }
        const json j = {{"format_version", kFormatVersion},
                        {"image_id", image.image_id},
                        {"width", image.width},
                        {"height", image.height},
                        {"objects", std::move(objects)}};
        out << j.dump() << '\n';
    }
}

json to_json(const ImageRecord& record) {
    json objects = json::array();
    for (const DetectedObject& o : record.objects) {
        objects.push_back(to_json(o));
    }
    json j = {{"format_version", kFormatVersion},
              {"image_id", record.image_id},
              {"width", record.width},
              {"height", record.height},
              {"caption", record.caption},
              {"objects", std::move(objects)}};
    if (record.concept_name) {
        j["concept_name"] = *record.concept_name;
    }
    if (record.knowledge) {
        j["knowledge"] = *record.knowledge;
    }
    return j;
}

ImageRecord image_record_from_json(const json& j, const std::string& where) {
    check_version(j, where);
    ImageDetections image = detections_from_json(j, where);
    ImageRecord record;
    record.image_id = std::move(image.image_id);
    record.width = image.width;
    record.height = image.height;
    record.objects = std::move(image.objects);
    std::optional<std::size_t> dim;
    check_feature_dims(record.objects, dim, where);
    record.caption = get_as<std::string>(j, "caption", where);
    if (const auto it = j.find("concept_name"); it != j.end() && !it->is_null()) {
        record.concept_name = it->get<std::string>();
    }
    if (const auto it = j.find("knowledge"); it != j.end() && !it->is_null()) {
        record.knowledge = it->get<std::string>();
    }
    return record;
}

std::vector<ImageRecord> read_records_stream(std::istream& in, const std::string& source) {
    std::vector<ImageRecord> records;
    std::optional<std::size_t> dim;
    for_each_json_line(in, source, [&](const json& j, const std::string& where) {
        records.push_back(image_record_from_json(j, where));
        check_feature_dims(records.back().objects, dim, where);
    });
    return records;
}

std::vector<ImageRecord> read_records(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_records_stream(in, path.string());
}

void write_records_stream(std::ostream& out, std::span<const ImageRecord> records) {
    for (const ImageRecord& r : records) {
        out << to_json(r).dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Embedding tables

EmbeddingTable::EmbeddingTable(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) {
        throw Error(ErrorKind::dimension_mismatch, "embedding dimension must be positive");
    }
}

bool EmbeddingTable::add(const std::string& word, std::span<const float> vector) {
    if (vector.size() != dimension_) {
        throw Error(ErrorKind::ragged_vector, "vector for '" + word + "' has " + std::to_string(vector.size()) +
                                                  " values, expected " + std::to_string(dimension_));
    }
    if (!index_.emplace(word, words_.size()).second) {
        return false;
    }
    words_.push_back(word);
    values_.insert(values_.end(), vector.begin(), vector.end());
    return true;
}

const float* EmbeddingTable::find(const std::string& word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? nullptr : values_.data() + it->second * dimension_;
}

EmbeddingTable read_embedding_stream(std::istream& in, Diagnostics* diag, const std::string& source) {
    std::optional<EmbeddingTable> table;
    std::optional<std::size_t> header_count;
    std::string line;
    std::size_t lineno = 0;
    std::vector<float> values;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream fields(line);
        std::vector<std::string> parts;
        for (std::string f; fields >> f;) {
            parts.push_back(std::move(f));
        }
        if (parts.empty()) {
            continue;
        }
        if (lineno == 1 && parts.size() == 2) {
            const auto count = parse_int(parts[0]);
            const auto dim = parse_int(parts[1]);
            if (count && dim && *count >= 0 && *dim > 0) {
                header_count = static_cast<std::size_t>(*count);
                table.emplace(static_cast<std::size_t>(*dim));
                continue;
            }
        }
        if (!table) {
            if (parts.size() < 2) {
                throw Error(ErrorKind::ragged_vector, at_line(source, lineno) + ": no vector values");
            }
            table.emplace(parts.size() - 1);
        }
        if (parts.size() - 1 != table->dimension()) {
            throw Error(ErrorKind::ragged_vector, at_line(source, lineno) + ": expected " +
                                                      std::to_string(table->dimension()) + " values, found " +
                                                      std::to_string(parts.size() - 1));
        }
        values.clear();
        for (std::size_t i = 1; i < parts.size(); ++i) {
            try {
                std::size_t used = 0;
                values.push_back(std::stof(parts[i], &used));
                if (used != parts[i].size()) {
                    throw std::invalid_argument(parts[i]);
                }
            } catch (const std::exception&) {
                throw Error(ErrorKind::ragged_vector, at_line(source, lineno) + ": bad value '" + parts[i] + "'");
            }
        }
        if (!table->add(parts[0], values) && diag) {
            diag->warnings.push_back(at_line(source, lineno) + ": duplicate word '" + parts[0] +
                                     "', keeping first occurrence");
        }
    }
    if (!table || table->size() == 0) {
        throw Error(ErrorKind::validation, source + ": embedding table is empty");
    }
    if (header_count && *header_count != table->size() && diag) {
        diag->warnings.push_back(source + ": header declares " + std::to_string(*header_count) + " words, read " +
                                 std::to_string(table->size()));
    }
    return std::move(*table);
}

EmbeddingTable read_embedding_table(const std::filesystem::path& path, Diagnostics* diag) {
    auto in = open_input(path);
    return read_embedding_stream(in, diag, path.string());
}

void write_embedding_stream(std::ostream& out, const EmbeddingTable& table) {
    out << table.size() << ' ' << table.dimension() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.words()[i];
        for (const float v : table.vector(i)) {
            std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
            out << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Knowledge base

std::vector<VisualConcept> read_knowledge_stream(std::istream& in, const std::string& source) {
    std::vector<VisualConcept> concepts;
    for_each_json_line(in, source, [&](const json& j, const std::string& where) {
        concepts.push_back({require_string(j, "name", where), require_string(j, "category", where),
                            require_string(j, "knowledge", where)});
    });
    return concepts;
}

std::vector<VisualConcept> read_knowledge_base(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_knowledge_stream(in, path.string());
}

void write_knowledge_stream(std::ostream& out, std::span<const VisualConcept> concepts) {
    for (const VisualConcept& c : concepts) {
        out << json{{"name", c.name}, {"category", c.category}, {"knowledge", c.knowledge}}.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Corpus

json to_json(const TrainingExample& e) {
    json rows = json::array();
    for (std::size_t r = 0; r < e.visual_features.rows; ++r) {
        const auto row = e.visual_features.row(r);
        rows.push_back(std::vector<float>(row.begin(), row.end()));
    }
    return {{"record", "example"},
            {"token_ids", e.token_ids},
            {"segment_ids", e.segment_ids},
            {"visual_features", std::move(rows)},
            {"visual_width", e.visual_features.cols},
            {"mlm_positions", e.mlm_positions},
            {"mlm_targets", e.mlm_targets},
            {"itm_label", e.itm_label},
            {"ikm_label", e.ikm_label},
            {"iec_label", e.iec_label},
            {"source_image_id", e.source_image_id},
            {"knowledge_concept", e.knowledge_concept},
            {"located_object", e.located_object},
            {"donor_image_id", e.donor_image_id},
            {"donor_object", e.donor_object}};
}

TrainingExample training_example_from_json(const json& j, const std::string& where) {
    TrainingExample e;
    e.token_ids = get_as<std::vector<std::int32_t>>(j, "token_ids", where);
    e.segment_ids = get_as<std::vector<std::int32_t>>(j, "segment_ids", where);
    if (e.segment_ids.size() != e.token_ids.size()) {
        throw Error(ErrorKind::dimension_mismatch, where + ": segment_ids and token_ids differ in length");
    }
    const auto rows = get_as<std::vector<std::vector<float>>>(j, "visual_features", where);
    e.visual_features.rows = rows.size();
    e.visual_features.cols = get_as<std::size_t>(j, "visual_width", where);
    for (const auto& row : rows) {
        if (row.size() != e.visual_features.cols) {
            throw Error(ErrorKind::dimension_mismatch, where + ": ragged visual_features row");
        }
        e.visual_features.values.insert(e.visual_features.values.end(), row.begin(), row.end());
    }
    e.mlm_positions = get_as<std::vector<std::int32_t>>(j, "mlm_positions", where);
    e.mlm_targets = get_as<std::vector<std::int32_t>>(j, "mlm_targets", where);
    if (e.mlm_positions.size() != e.mlm_targets.size()) {
        throw Error(ErrorKind::dimension_mismatch, where + ": mlm_positions and mlm_targets differ in length");
    }
    e.itm_label = get_as<int>(j, "itm_label", where);
    e.ikm_label = get_as<int>(j, "ikm_label", where);
    e.iec_label = get_as<int>(j, "iec_label", where);
    e.source_image_id = get_as<std::string>(j, "source_image_id", where);
    e.knowledge_concept = j.value("knowledge_concept", std::string{});
    e.located_object = j.value("located_object", -1);
    e.donor_image_id = j.value("donor_image_id", std::string{});
    e.donor_object = j.value("donor_object", -1);
    return e;
}

void write_manifest_line(std::ostream& out, const CorpusManifest& m) {
    const json j = {{"record", "manifest"},
                    {"format_version", m.format_version},
                    {"seed", m.seed},
                    {"config_hash", m.config_hash},
                    {"config", m.config},
                    {"vocab", m.vocab},
                    {"example_count", m.example_count},
                    {"itm_counts", m.itm_counts},
                    {"ikm_counts", m.ikm_counts},
                    {"iec_counts", m.iec_counts},
                    {"masked_tokens", m.masked_tokens},
                    {"maskable_tokens", m.maskable_tokens},
                    {"masking", "static"},
                    {"failures", m.failures}};
    out << j.dump() << '\n';
}

void write_example_line(std::ostream& out, const TrainingExample& example) {
    out << to_json(example).dump() << '\n';
}

void write_corpus_stream(std::ostream& out, const Corpus& corpus) {
    write_manifest_line(out, corpus.manifest);
    for (const TrainingExample& e : corpus.examples) {
        write_example_line(out, e);
    }
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write " + path.string());
    }
    write_corpus_stream(out, corpus);
}

Corpus read_corpus_stream(std::istream& in, const std::string& source) {
    Corpus corpus;
    bool have_manifest = false;
    for_each_json_line(in, source, [&](const json& j, const std::string& where) {
        const std::string kind = j.value("record", std::string{});
        if (kind == "manifest") {
            if (have_manifest || !corpus.examples.empty()) {
                throw Error(ErrorKind::corpus_manifest_mismatch, where + ": manifest must be the first record");
            }
            have_manifest = true;
            check_version(j, where);
            CorpusManifest& m = corpus.manifest;
            m.format_version = get_as<int>(j, "format_version", where);
            m.seed = get_as<std::uint64_t>(j, "seed", where);
            m.config_hash = get_as<std::string>(j, "config_hash", where);
            m.config = j.value("config", json::object());
            m.vocab = get_as<std::vector<std::string>>(j, "vocab", where);
            m.example_count = get_as<std::size_t>(j, "example_count", where);
            m.itm_counts = get_as<std::array<std::size_t, 3>>(j, "itm_counts", where);
            m.ikm_counts = get_as<std::array<std::size_t, 3>>(j, "ikm_counts", where);
            m.iec_counts = get_as<std::array<std::size_t, 2>>(j, "iec_counts", where);
            m.masked_tokens = j.value("masked_tokens", std::size_t{0});
            m.maskable_tokens = j.value("maskable_tokens", std::size_t{0});
            m.failures = j.value("failures", std::vector<std::string>{});
        } else if (kind == "example") {
            if (!have_manifest) {
                throw Error(ErrorKind::corpus_manifest_mismatch, where + ": example precedes the manifest");
            }
            corpus.examples.push_back(training_example_from_json(j, where));
        } else {
            throw Error(ErrorKind::malformed_row, where + ": unknown record kind '" + kind + "'");
        }
    });
    if (!have_manifest) {
        throw Error(ErrorKind::corpus_manifest_mismatch, source + ": missing manifest record");
    }
    return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_corpus_stream(in, path.string());
}

}  // namespace geovlp
