// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/prompts.hpp"

#include "eciwb/error.hpp"
#include "eciwb/rng.hpp"

namespace eciwb {

namespace {

std::string body(const BenchmarkRecord& r, const std::string& suffix) {
  std::string out = "Question: " + r.question + "\n";
  if (r.context && !r.context->empty()) out += "Context: " + *r.context + "\n";
  out += "Options:\n";
  for (const auto& [label, text] : r.options) out += "(" + label + ") " + text + "\n";
  out += suffix;
  const auto labels = r.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? ", " : "") + labels[i];
  out += ".\n";
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

const std::string kSuffix = "Reply with exactly one of: ";

std::string render(const BenchmarkRecord& record, PromptStyle style, const std::string& suffix) {
  if (style == PromptStyle::kPlain) return body(record, suffix);
  return "Work through the question below in three steps.\n"
         "Step 1: State the medical knowledge relevant to the question.\n"
         "Step 2: Reason from that knowledge to each of the options.\n"
         "Step 3: Give the label of the single best option.\n\n" +
         body(record, suffix);
}

}  // namespace

std::string build_three_step_prompt(const BenchmarkRecord& record) {
  return render(record, PromptStyle::kThreeStep, kSuffix);
}

std::string build_plain_prompt(const BenchmarkRecord& record) { return render(record, PromptStyle::kPlain, kSuffix); }

std::string build_prompt(const BenchmarkRecord& record, PromptStyle style) { return render(record, style, kSuffix); }

std::string answer_line(const std::string& label) { return "Answer: " + label; }

std::string build_shots(const PromptTemplate& tmpl, const BenchmarkRecord& record) {
  auto target = [&](const BenchmarkRecord& r) { return render(r, tmpl.style, tmpl.label_suffix); };
  if (tmpl.shots == 0) return target(record);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tmpl.pool.size(); ++i)
    if (tmpl.pool[i].record.id != record.id) candidates.push_back(i);
  if (candidates.size() < tmpl.shots)
    throw ValueError("build_shots: " + std::to_string(tmpl.shots) + " shots requested but only " +
                     std::to_string(candidates.size()) + " exemplars are available");
  Rng rng(tmpl.seed ^ fnv1a(record.id));
  for (std::size_t i = 0; i < tmpl.shots; ++i)
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
  std::string out;
  for (std::size_t i = 0; i < tmpl.shots; ++i) {
    const Exemplar& ex = tmpl.pool[candidates[i]];
    out += std::string(kExampleDelimiter) + " " + std::to_string(i + 1) + "\n";
    out += target(ex.record);
    out += ex.solution;
    if (!ex.solution.empty() && ex.solution.back() != '\n') out += "\n";
    out += "\n";
  }
  out += std::string(kTargetDelimiter) + "\n";
  out += target(record);
  return out;
}

}  // namespace eciwb
