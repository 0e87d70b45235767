// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/tokenizer.hpp"

#include "eciwb/error.hpp"

namespace eciwb {

std::vector<std::int64_t> encode(std::string_view text) {
  std::vector<std::int64_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string decode(std::span<const std::int64_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::int64_t id : ids) {
    if (id < 0 || id >= static_cast<std::int64_t>(kVocabSize))
      throw ValueError("decode: token id " + std::to_string(id) + " is outside the vocabulary");
    if (id < 256) out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

}  // namespace eciwb
