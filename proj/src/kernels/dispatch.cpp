// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string_view>

#include "eciwb/kernels.hpp"

namespace eciwb::kernels {
namespace {

const KernelTable& select() {
  const char* forced = std::getenv("ECIWB_KERNELS");
  if (forced != nullptr && std::string_view(forced) == "scalar") return scalar();
  if (const KernelTable* t = avx2()) return *t;
  if (const KernelTable* t = neon()) return *t;
  return scalar();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace eciwb::kernels
