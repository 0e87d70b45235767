// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Rule cascade that pulls an option label out of free-form model output.
//
//   1. a line that is nothing but a label (surrounding spaces, brackets and
//      trailing punctuation allowed)
//   2. cue patterns: "answer is X", "answer: X", "(X)", "option X"
//   3. the first standalone occurrence of any label
//
// The first stage that finds anything decides. Cue words are matched
// case-insensitively; labels longer than one character are too, while
// single-character labels (A-E) must match exactly so that the article "a"
// is not read as option A. Two different labels found at the same earliest
// position, or two different lone-label lines, make the response ambiguous.

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace eciwb {

enum class UnparseableReason { kNoLabel, kAmbiguous };

std::string reason_name(UnparseableReason r);

enum class ExtractionStage { kLoneLine = 1, kCuePattern = 2, kFirstMention = 3 };

struct Extraction {
  std::optional<std::string> label;  // as spelled in the label set
  std::optional<UnparseableReason> failure;
  std::optional<ExtractionStage> stage;

  bool parsed() const { return label.has_value(); }
};

// Total and deterministic. Throws ValueError only when label_set is empty.
Extraction extract_answer(std::string_view response, std::span<const std::string> label_set);

}  // namespace eciwb
