// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of the configuration structs. The *_from_json readers take a
// base value and override only the keys present, so partial config files
// work; unknown keys are rejected.

#ifndef MTRL_CONFIG_JSON_H_
#define MTRL_CONFIG_JSON_H_

#include <json.hpp>

#include "mtrl/data_synth.h"
#include "mtrl/lstm_cell.h"
#include "mtrl/multitask_net.h"
#include "mtrl/trainer.h"

namespace mtrl {

nlohmann::json to_json(const SynthConfig &cfg);
SynthConfig synth_config_from_json(const nlohmann::json &j, SynthConfig base);

nlohmann::json to_json(const CellDims &dims);
CellDims cell_dims_from_json(const nlohmann::json &j);

nlohmann::json to_json(const FeedbackConfig &cfg);
FeedbackConfig feedback_from_json(const nlohmann::json &j);

nlohmann::json to_json(const OptimConfig &cfg);
OptimConfig optim_config_from_json(const nlohmann::json &j, OptimConfig base);

}  // namespace mtrl

#endif  // MTRL_CONFIG_JSON_H_
