// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/extraction.hpp"

#include <cctype>
#include <set>
#include <vector>

#include "eciwb/error.hpp"

namespace eciwb {

std::string reason_name(UnparseableReason r) { return r == UnparseableReason::kAmbiguous ? "ambiguous" : "no_label"; }

namespace {

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

char fold(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = fold(c);
  return out;
}

bool label_equals(std::string_view text, const std::string& label) {
  if (text.size() != label.size()) return false;
  if (label.size() == 1) return text == label;
  return lower(text) == lower(label);
}

// Position of `label` at `pos` in `text` with word boundaries on both sides.
bool label_at(std::string_view text, std::size_t pos, const std::string& label) {
  if (pos + label.size() > text.size()) return false;
  if (!label_equals(text.substr(pos, label.size()), label)) return false;
  if (pos > 0 && is_word(text[pos - 1])) return false;
  const std::size_t end = pos + label.size();
  return end == text.size() || !is_word(text[end]);
}

std::string_view trim(std::string_view s, std::string_view chars) {
  while (!s.empty() && chars.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && chars.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return s;
}

struct Hit {
  std::size_t pos;
  std::size_t label;
};

Extraction decide(const std::vector<Hit>& hits, std::span<const std::string> labels, ExtractionStage stage) {
  Extraction e;
  e.stage = stage;
  std::size_t best = std::string::npos;
  for (const Hit& h : hits) best = std::min(best, h.pos);
  std::set<std::size_t> at_best;
  for (const Hit& h : hits)
    if (h.pos == best) at_best.insert(h.label);
  if (at_best.size() > 1)
    e.failure = UnparseableReason::kAmbiguous;
  else
    e.label = labels[*at_best.begin()];
  return e;
}

// Cue phrases, lowercase; the label may follow after spaces and an opening
// bracket.
constexpr std::string_view kCues[] = {"answer is", "answer:", "option"};

}  // namespace

Extraction extract_answer(std::string_view response, std::span<const std::string> labels) {
  if (labels.empty()) throw ValueError("extract_answer: empty label set");

  // Stage 1: lone-label lines.
  {
    std::set<std::size_t> found;
    std::size_t start = 0;
    while (start <= response.size()) {
      std::size_t end = response.find('\n', start);
      if (end == std::string_view::npos) end = response.size();
      const std::string_view line = trim(trim(response.substr(start, end - start), " \t\r*"), "()[].:!");
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (label_equals(line, labels[i])) found.insert(i);
      start = end + 1;
    }
    if (found.size() == 1) return {labels[*found.begin()], std::nullopt, ExtractionStage::kLoneLine};
    if (found.size() > 1) return {std::nullopt, UnparseableReason::kAmbiguous, ExtractionStage::kLoneLine};
  }

  const std::string folded = lower(response);

  // Stage 2: cue patterns.
  {
    std::vector<Hit> hits;
    for (std::string_view cue : kCues) {
      for (std::size_t p = folded.find(cue); p != std::string::npos; p = folded.find(cue, p + 1)) {
        if (p > 0 && is_word(folded[p - 1])) continue;
        std::size_t q = p + cue.size();
        while (q < response.size() && response[q] == ' ') ++q;
        if (q < response.size() && response[q] == '(') ++q;
        for (std::size_t i = 0; i < labels.size(); ++i)
          if (label_at(response, q, labels[i])) hits.push_back({p, i});
      }
    }
    for (std::size_t p = response.find('('); p != std::string_view::npos; p = response.find('(', p + 1)) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t close = p + 1 + labels[i].size();
        if (close < response.size() && response[close] == ')' && label_equals(response.substr(p + 1, labels[i].size()), labels[i]))
          hits.push_back({p, i});
      }
    }
    if (!hits.empty()) return decide(hits, labels, ExtractionStage::kCuePattern);
  }

  // Stage 3: first standalone mention.
  {
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t p = 0; p < response.size(); ++p) {
        if (label_at(response, p, labels[i])) {
          hits.push_back({p, i});
          break;
        }
      }
    }
    if (!hits.empty()) return decide(hits, labels, ExtractionStage::kFirstMention);
  }
  return {std::nullopt, UnparseableReason::kNoLabel, std::nullopt};
}

}  // namespace eciwb
