// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geovlp {

enum class ErrorKind {
    io,
    malformed_row,
    dangling_head,
    multiple_roots,
    dimension_mismatch,
    negative_box,
    area_mismatch,
    ragged_vector,
    missing_field,
    no_noun_found,
    empty_phrase,
    empty_pool,
    no_dissimilar_concept,
    no_objects,
    no_valid_donor,
    index_out_of_range,
    shape_mismatch,
    non_finite_loss,
    corpus_manifest_mismatch,
    validation,
    unknown_subcommand,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace geovlp
