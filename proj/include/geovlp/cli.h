// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace geovlp {

/// Exit codes: 0 success, 1 validation error, 2 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Flat "key = value" lines; '#' starts a comment. Throws Validation on a
/// malformed line.
std::map<std::string, std::string> read_flat_config(const std::string& path);

/// Runs one subcommand. Error records go to `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geovlp
