// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eciwb/benchmark.hpp"

namespace eciwb {

enum class PromptStyle { kPlain, kThreeStep };

struct Exemplar {
  BenchmarkRecord record;
  std::string solution;  // worked reasoning ending in the answer line
};

struct PromptTemplate {
  PromptStyle style = PromptStyle::kThreeStep;
  std::size_t shots = 0;  // 0, 1 or 3
  std::vector<Exemplar> pool;
  std::uint64_t seed = 0;
  std::string label_suffix = "Reply with exactly one of: ";
};

inline constexpr const char* kExampleDelimiter = "### Example";
inline constexpr const char* kTargetDelimiter = "### Question";

// Numbered Step 1..3 instructions, the question, the context when present,
// the options and the label instruction.
std::string build_three_step_prompt(const BenchmarkRecord& record);
std::string build_plain_prompt(const BenchmarkRecord& record);
std::string build_prompt(const BenchmarkRecord& record, PromptStyle style);

// "Answer: <label>" line used in exemplar solutions and training answers.
std::string answer_line(const std::string& label);

// With shots > 0: `shots` exemplar blocks drawn without replacement from the
// pool (skipping the target's own id), deterministic in (seed, record id),
// then the target block. shots == 0 gives build_prompt() unchanged. Throws
// ValueError when the pool is too small.
std::string build_shots(const PromptTemplate& tmpl, const BenchmarkRecord& record);

}  // namespace eciwb
