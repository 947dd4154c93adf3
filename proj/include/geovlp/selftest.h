// Copyright (C) 2026 The geovlp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small built-in oracle suite exercised by the `selftest` subcommand.

#pragma once

#include <string>
#include <vector>

namespace geovlp {

struct SelfTestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<SelfTestResult> run_selftest();

}  // namespace geovlp
