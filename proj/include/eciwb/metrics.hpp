// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// BLEU, ROUGE-N and label accuracy over lowercase whitespace tokens.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace eciwb {

using TokenSequence = std::vector<std::string>;

// Lowercases ASCII letters and splits on whitespace.
TokenSequence tokenize(std::string_view text);

struct Ratio {
  std::size_t numerator = 0;
  std::size_t denominator = 0;
  // 0 when the denominator is 0.
  double value() const { return denominator ? static_cast<double>(numerator) / denominator : 0.0; }
};

// Candidate n-gram counts clipped by their maximum count in any reference,
// over the number of candidate n-grams. Throws ValueError on n == 0 or no
// references.
Ratio modified_precision(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t n);

inline constexpr double kBleuSmoothing = 1e-9;

enum class BleuMode {
  kSmoothed,  // zero precisions replaced by epsilon
  kLiteral,   // no smoothing; any zero precision gives 0
};

struct BleuReport {
  double bleu = 0.0;
  std::vector<double> precisions;  // p_1..p_N
  std::vector<Ratio> counts;       // clipped matches / candidate n-grams per n
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;  // closest reference length (shorter on ties)
};

// Sentence BLEU. Throws ValueError on an empty candidate.
BleuReport bleu(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t max_n = 4,
                BleuMode mode = BleuMode::kLiteral);

// Corpus BLEU: clipped counts and lengths summed over all pairs before the
// precisions and brevity penalty are formed.
BleuReport corpus_bleu(std::span<const TokenSequence> candidates,
                       std::span<const std::vector<TokenSequence>> references, std::size_t max_n = 4,
                       BleuMode mode = BleuMode::kSmoothed);

struct RougeReport {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t reference_total = 0;
  std::size_t candidate_total = 0;
  // Every reference is shorter than n; all scores are reported as 0.
  bool degenerate = false;
};

// Recall = sum over references of clipped matched reference n-grams, over the
// sum of reference n-gram counts. Throws ValueError on n == 0 or no references.
RougeReport rouge_n(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t n);

// Micro-averaged over a corpus (counts summed before dividing).
RougeReport corpus_rouge_n(std::span<const TokenSequence> candidates,
                           std::span<const std::vector<TokenSequence>> references, std::size_t n);

// Case-insensitive exact match rate. Throws ValueError on empty or
// mismatched inputs.
double accuracy(std::span<const std::string> predictions, std::span<const std::string> gold);

struct MetricReport {
  BleuReport bleu;
  RougeReport rouge;
  std::size_t bleu_n = 4;
  std::size_t rouge_n = 1;
  std::size_t pairs = 0;
};

// Corpus scores of line-aligned candidates and references.
MetricReport score_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                          std::size_t bleu_n = 4, std::size_t rouge_n = 1);

nlohmann::json to_json(const MetricReport& report);

}  // namespace eciwb
