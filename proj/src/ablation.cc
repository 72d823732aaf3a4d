// SPDX-License-Identifier: Apache-2.0

#include "mtrl/ablation.h"

namespace mtrl {

std::vector<AblationRow> published_grid() {
  auto row = [](const char *src, const char *snk, double wer, double eer) {
    return AblationRow{FeedbackConfig::parse(src, snk), wer, eer};
  };
  return {
      row("none", "none", 7.41, 1.84),
      row("r", "i", 7.05, 0.62),
      row("r+p", "i", 6.97, 0.64),
      row("r", "f", 7.12, 0.66),
      row("r+p", "f", 7.24, 0.65),
      row("r", "o", 7.26, 0.65),
      row("r+p", "o", 7.28, 0.59),
      row("r", "g", 7.11, 0.62),
      row("r+p", "g", 7.11, 0.67),
      row("r", "i+f+o", 7.06, 0.66),
      row("r+p", "i+f+o", 7.23, 0.71),
      row("r", "i+f+o+g", 7.05, 0.55),
      row("r+p", "i+f+o+g", 7.23, 0.62),
  };
}

CellDims asr_dims_for(const SynthConfig &data, const TowerShape &s) {
  return {data.spliced_dim(), s.cell, s.rec_proj, s.nonrec_proj, data.n_phones};
}

CellDims sre_dims_for(const SynthConfig &data, const TowerShape &s) {
  return {data.spliced_dim(), s.cell, s.rec_proj, s.nonrec_proj,
          data.n_speakers};
}

EvalReport train_and_evaluate(const Dataset &ds, const AblationSetup &setup,
                              const FeedbackConfig &config,
                              TrainState *final_state) {
  Rng rng{setup.init_seed};
  TrainState st = make_train_state(
      init_joint_model(asr_dims_for(ds.config, setup.asr),
                       sre_dims_for(ds.config, setup.sre), config,
                       setup.asr_delay, rng),
      setup.optim);
  train(st, ds.train, ds.test);
  EvalReport rep = evaluate(st.model, ds);
  if (final_state) *final_state = std::move(st);
  return rep;
}

std::vector<EvalReport> run_ablation(const Dataset &ds,
                                     const AblationSetup &setup,
                                     const std::vector<AblationRow> &rows,
                                     const RowCallback &on_row) {
  std::vector<EvalReport> reports;
  reports.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EvalReport rep = train_and_evaluate(ds, setup, rows[k].config);
    rep.reference_wer = rows[k].ref_wer;
    rep.reference_eer = rows[k].ref_eer;
    if (on_row) on_row(k, rep);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace mtrl
