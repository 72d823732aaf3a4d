// SPDX-License-Identifier: Apache-2.0
//
// Feedback-configuration sweep: trains one joint model per configuration from
// the same seed and data, and reports the task metrics for each.

#ifndef MTRL_ABLATION_H_
#define MTRL_ABLATION_H_

#include <functional>
#include <vector>

#include "mtrl/metrics.h"
#include "mtrl/trainer.h"

namespace mtrl {

struct AblationRow {
  FeedbackConfig config;
  double ref_wer = 0.0;  // published WER%, display only
  double ref_eer = 0.0;  // published EER%, display only
};

/// The 13 published rows: baseline, then {r} and {r,p} into i, f, o, g,
/// {i,f,o} and {i,f,o,g}.
std::vector<AblationRow> published_grid();

/// Tower sizes; input and output dims come from the dataset.
struct TowerShape {
  std::size_t cell = 32;
  std::size_t rec_proj = 16;
  std::size_t nonrec_proj = 16;

  bool operator==(const TowerShape &) const = default;
};

struct AblationSetup {
  TowerShape asr;
  TowerShape sre;
  std::size_t asr_delay = 5;
  OptimConfig optim;
  std::uint64_t init_seed = 1;
};

CellDims asr_dims_for(const SynthConfig &data, const TowerShape &shape);
CellDims sre_dims_for(const SynthConfig &data, const TowerShape &shape);

/// Initializes, trains and evaluates one configuration.
EvalReport train_and_evaluate(const Dataset &ds, const AblationSetup &setup,
                              const FeedbackConfig &config,
                              TrainState *final_state = nullptr);

using RowCallback = std::function<void(std::size_t row, const EvalReport &)>;

std::vector<EvalReport> run_ablation(const Dataset &ds,
                                     const AblationSetup &setup,
                                     const std::vector<AblationRow> &rows,
                                     const RowCallback &on_row = {});

}  // namespace mtrl

#endif  // MTRL_ABLATION_H_
