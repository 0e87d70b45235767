// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Table rendering over evaluation reports: one row per evaluated mode.

#include <string>
#include <vector>

#include "eciwb/evaluation.hpp"

namespace eciwb {

inline constexpr const char* kMissingCell = "n/a";

using TableRow = std::vector<std::string>;

// Throws DataError when reports disagree on their column sets or none are given.
std::vector<TableRow> report_rows(const std::vector<EvalReport>& reports);

std::string render_markdown(const std::vector<EvalReport>& reports);
std::string render_csv(const std::vector<EvalReport>& reports);

}  // namespace eciwb
