// SPDX-License-Identifier: Apache-2.0
// JSON conversions for the configuration structs (internal).
#pragma once

#include <json.hpp>

#include "densesed/crnn.hpp"
#include "densesed/features.hpp"
#include "densesed/train.hpp"

namespace densesed {

using Json = nlohmann::ordered_json;

Json to_json(const CrnnConfig& c);
Json to_json(const FeatureConfig& c);
Json to_json(const TrainConfig& c);

// Missing keys keep the defaults of `base`; unknown keys are rejected.
CrnnConfig crnn_config_from_json(const Json& j, CrnnConfig base = {});
FeatureConfig feature_config_from_json(const Json& j, FeatureConfig base = {});
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});

// Reject keys outside `allowed`, naming the section.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& section);

}  // namespace densesed
