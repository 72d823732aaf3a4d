// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen-data, train, eval, ablate, gradcheck.
//
// Settings resolve as built-in defaults, then the --config JSON file, then
// individual flags. All randomness derives from the single top-level seed.

#ifndef MTRL_CLI_H_
#define MTRL_CLI_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtrl/ablation.h"
#include "mtrl/data_synth.h"
#include "mtrl/multitask_net.h"
#include "mtrl/trainer.h"

namespace mtrl {

struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig synth;
  TowerShape asr;
  TowerShape sre;
  FeedbackConfig feedback;
  std::size_t asr_delay = 5;
  OptimConfig optim;

  /// Fills the per-purpose seeds (synth.seed, optim.seed) from `seed`.
  void derive_seeds();
  std::uint64_t init_seed() const;
};

nlohmann::json to_json(const RunConfig &cfg);
/// Overrides `base` with the keys present in `j`. Per-purpose seeds are
/// derived, so "seed" is only accepted at the top level.
RunConfig run_config_from_json(const nlohmann::json &j, RunConfig base);

/// Entry point with injectable streams; returns the process exit status.
int cli_main(const std::vector<std::string> &args, std::ostream &out,
             std::ostream &err);
int cli_main(int argc, char *argv[]);

}  // namespace mtrl

#endif  // MTRL_CLI_H_
