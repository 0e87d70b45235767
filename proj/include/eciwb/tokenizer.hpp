// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Byte-level vocabulary: ids 0..255 are raw bytes, then pad and eos.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eciwb {

inline constexpr std::int64_t kPadId = 256;
inline constexpr std::int64_t kEosId = 257;
inline constexpr std::size_t kVocabSize = 258;

std::vector<std::int64_t> encode(std::string_view text);
// Reserved ids are dropped; anything outside the vocabulary throws ValueError.
std::string decode(std::span<const std::int64_t> ids);

}  // namespace eciwb
