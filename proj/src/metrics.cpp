// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "eciwb/error.hpp"

namespace eciwb {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::size_t ngram_total(std::size_t len, std::size_t n) { return len >= n ? len - n + 1 : 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::size_t closest_ref_length(std::size_t c, std::span<const TokenSequence> references) {
  std::size_t best = references.front().size();
  for (const auto& r : references) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

BleuReport finish_bleu(std::vector<Ratio> counts, std::size_t c, std::size_t r, BleuMode mode) {
  BleuReport rep;
  rep.counts = std::move(counts);
  rep.candidate_length = c;
  rep.reference_length = r;
  rep.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  double log_sum = 0.0;
  bool zero = false;
  for (const Ratio& ratio : rep.counts) {
    double p = ratio.value();
    if (p == 0.0) {
      if (mode == BleuMode::kLiteral) zero = true;
      p = kBleuSmoothing;
      rep.precisions.push_back(mode == BleuMode::kLiteral ? 0.0 : p);
    } else {
      rep.precisions.push_back(p);
    }
    log_sum += std::log(p);
  }
  const double gm = zero ? 0.0 : std::exp(log_sum / static_cast<double>(rep.counts.size()));
  rep.bleu = std::clamp(rep.brevity_penalty * gm, 0.0, 1.0);
  return rep;
}

void require_refs(std::span<const TokenSequence> references) {
  if (references.empty()) throw ValueError("at least one reference is required");
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::istringstream in{lower(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

Ratio modified_precision(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t n) {
  if (n == 0) throw ValueError("modified_precision: n must be at least 1");
  require_refs(references);
  Ratio ratio;
  ratio.denominator = ngram_total(candidate.size(), n);
  if (ratio.denominator == 0) return ratio;
  const NgramCounts cand = ngrams(candidate, n);
  NgramCounts max_ref;
  for (const auto& ref : references)
    for (const auto& [g, count] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], count);
  for (const auto& [g, count] : cand) {
    auto it = max_ref.find(g);
    if (it != max_ref.end()) ratio.numerator += std::min(count, it->second);
  }
  return ratio;
}

BleuReport bleu(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t max_n,
                BleuMode mode) {
  if (candidate.empty()) throw ValueError("bleu: candidate is empty");
  if (max_n == 0) throw ValueError("bleu: max_n must be at least 1");
  require_refs(references);
  std::vector<Ratio> counts;
  for (std::size_t n = 1; n <= max_n; ++n) counts.push_back(modified_precision(candidate, references, n));
  return finish_bleu(std::move(counts), candidate.size(), closest_ref_length(candidate.size(), references), mode);
}

BleuReport corpus_bleu(std::span<const TokenSequence> candidates,
                       std::span<const std::vector<TokenSequence>> references, std::size_t max_n, BleuMode mode) {
  if (candidates.size() != references.size())
    throw ValueError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates but " +
                     std::to_string(references.size()) + " reference sets");
  if (candidates.empty()) throw ValueError("corpus_bleu: empty corpus");
  if (max_n == 0) throw ValueError("bleu: max_n must be at least 1");
  std::vector<Ratio> counts(max_n);
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    require_refs(references[i]);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const Ratio ratio = modified_precision(candidates[i], references[i], n);
      counts[n - 1].numerator += ratio.numerator;
      counts[n - 1].denominator += ratio.denominator;
    }
    c += candidates[i].size();
    r += closest_ref_length(candidates[i].size(), references[i]);
  }
  if (c == 0) throw ValueError("bleu: every candidate is empty");
  return finish_bleu(std::move(counts), c, r, mode);
}

RougeReport rouge_n(const TokenSequence& candidate, std::span<const TokenSequence> references, std::size_t n) {
  if (n == 0) throw ValueError("rouge_n: n must be at least 1");
  require_refs(references);
  RougeReport rep;
  const NgramCounts cand = ngrams(candidate, n);
  rep.candidate_total = ngram_total(candidate.size(), n) * references.size();
  for (const auto& ref : references) {
    for (const auto& [g, count] : ngrams(ref, n)) {
      rep.reference_total += count;
      auto it = cand.find(g);
      if (it != cand.end()) rep.matched += std::min(count, it->second);
    }
  }
  if (rep.reference_total == 0) {
    rep.degenerate = true;
    return rep;
  }
  rep.recall = static_cast<double>(rep.matched) / rep.reference_total;
  rep.precision = rep.candidate_total ? static_cast<double>(rep.matched) / rep.candidate_total : 0.0;
  rep.f1 = rep.recall + rep.precision > 0 ? 2 * rep.recall * rep.precision / (rep.recall + rep.precision) : 0.0;
  return rep;
}

RougeReport corpus_rouge_n(std::span<const TokenSequence> candidates,
                           std::span<const std::vector<TokenSequence>> references, std::size_t n) {
  if (candidates.size() != references.size() || candidates.empty())
    throw ValueError("corpus_rouge_n: candidates and references must be nonempty and aligned");
  RougeReport total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const RougeReport r = rouge_n(candidates[i], references[i], n);
    total.matched += r.matched;
    total.reference_total += r.reference_total;
    total.candidate_total += r.candidate_total;
  }
  if (total.reference_total == 0) {
    total.degenerate = true;
    return total;
  }
  total.recall = static_cast<double>(total.matched) / total.reference_total;
  total.precision = total.candidate_total ? static_cast<double>(total.matched) / total.candidate_total : 0.0;
  total.f1 = total.recall + total.precision > 0
                 ? 2 * total.recall * total.precision / (total.recall + total.precision)
                 : 0.0;
  return total;
}

double accuracy(std::span<const std::string> predictions, std::span<const std::string> gold) {
  if (predictions.size() != gold.size())
    throw ValueError("accuracy: " + std::to_string(predictions.size()) + " predictions but " +
                     std::to_string(gold.size()) + " gold labels");
  if (gold.empty()) throw ValueError("accuracy: no items");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (lower(predictions[i]) == lower(gold[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

MetricReport score_corpus(std::span<const std::string> candidates, std::span<const std::string> references,
                          std::size_t bleu_n, std::size_t rouge_n_order) {
  if (candidates.size() != references.size())
    throw ValueError("metrics: " + std::to_string(candidates.size()) + " candidate lines but " +
                     std::to_string(references.size()) + " reference lines");
  std::vector<TokenSequence> cands;
  std::vector<std::vector<TokenSequence>> refs;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cands.push_back(tokenize(candidates[i]));
    refs.push_back({tokenize(references[i])});
  }
  MetricReport rep;
  rep.bleu_n = bleu_n;
  rep.rouge_n = rouge_n_order;
  rep.pairs = candidates.size();
  rep.bleu = corpus_bleu(cands, refs, bleu_n, BleuMode::kSmoothed);
  rep.rouge = corpus_rouge_n(cands, refs, rouge_n_order);
  return rep;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json counts = nlohmann::json::array();
  for (const Ratio& r : report.bleu.counts) counts.push_back({{"matched", r.numerator}, {"total", r.denominator}});
  return {
      {"pairs", report.pairs},
      {"bleu",
       {{"n", report.bleu_n},
        {"score", report.bleu.bleu},
        {"precisions", report.bleu.precisions},
        {"counts", counts},
        {"brevity_penalty", report.bleu.brevity_penalty},
        {"candidate_length", report.bleu.candidate_length},
        {"reference_length", report.bleu.reference_length},
        {"smoothing", kBleuSmoothing}}},
      {"rouge",
       {{"n", report.rouge_n},
        {"recall", report.rouge.recall},
        {"precision", report.rouge.precision},
        {"f1", report.rouge.f1},
        {"matched", report.rouge.matched},
        {"reference_total", report.rouge.reference_total},
        {"candidate_total", report.rouge.candidate_total},
        {"degenerate", report.rouge.degenerate}}},
  };
}

}  // namespace eciwb
