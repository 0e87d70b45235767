// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON mappings for the configuration structs. Readers are strict: unknown
// keys and wrongly typed values throw ConfigError; absent keys keep their
// defaults.

#include <json.hpp>

#include "eciwb/eci.hpp"
#include "eciwb/lora.hpp"
#include "eciwb/training.hpp"
#include "eciwb/transformer.hpp"

namespace eciwb {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);

void to_json(nlohmann::json& j, const EciConfig& c);
void from_json(const nlohmann::json& j, EciConfig& c);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Throws ConfigError listing the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace eciwb
