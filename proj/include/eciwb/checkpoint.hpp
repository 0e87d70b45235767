// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint container, all integers little-endian:
//
//   "ECIF"                    4-byte magic
//   u32  version              currently 1
//   u64  metadata length, then that many bytes of UTF-8 JSON
//   u32  record count
//   per record:
//     u32 name length, name bytes
//     u8  layout              0 = float64, 1 = nf4
//     u32 rank, u64 dims[rank]
//     float64: numel raw IEEE-754 doubles
//     nf4:     u32 block_size, u8 double_quant,
//              u64 block count, per block: f64 absmax, u64 count, ceil(count/2) packed bytes,
//              then if double_quant: f64 mean, u64 group_size, u64 n, n int8 codes,
//                                    u64 m, m f64 scales
//
// Tensor names: "model.<param>", "lora.<layer>.<target>.A|B", "eci.pool",
// "eci.mlp.<i>.w|b", "adam.m.<param>", "adam.v.<param>".

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eciwb/eci.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/quantization.hpp"
#include "eciwb/tensor.hpp"
#include "eciwb/training.hpp"

namespace eciwb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
  std::vector<std::pair<std::string, QuantizedTensor>> quantized;

  const Tensor* find(const std::string& name) const;
  const QuantizedTensor* find_quantized(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws FormatError with kind kBadMagic, kVersionMismatch, kTruncated or kCorrupt.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Everything needed to evaluate or resume a run.
struct TrainingBundle {
  LoraModel model;
  std::optional<EciHead> eci;
  TrainConfig train_config;
  TrainState state;
  nlohmann::json extra = nlohmann::json::object();
};

Checkpoint make_checkpoint(const LoraModel& model, const EciHead* eci, const TrainState& state,
                           const TrainConfig& config, const nlohmann::json& extra = nlohmann::json::object());
TrainingBundle bundle_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const LoraModel& model, const EciHead* eci, const TrainState& state,
                     const TrainConfig& config, const nlohmann::json& extra = nlohmann::json::object());
TrainingBundle load_checkpoint(const std::string& path);

}  // namespace eciwb
