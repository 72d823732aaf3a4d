// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference check of backward_sequence against the forward
// joint loss, over every parameter of a small random joint model.

#ifndef MTRL_GRADCHECK_H_
#define MTRL_GRADCHECK_H_

#include <cstdint>
#include <string>

#include "mtrl/multitask_net.h"

namespace mtrl {

struct GradcheckDims {
  std::size_t input = 4;
  std::size_t cell = 6;
  std::size_t rec_proj = 3;
  std::size_t nonrec_proj = 3;
  std::size_t phones = 3;
  std::size_t speakers = 2;
  std::size_t frames = 6;
  std::size_t delay = 1;
};

struct GradcheckResult {
  FeedbackConfig config;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is essentially zero from dominating through rounding noise.
double gradient_rel_error(double analytic, double numeric,
                          double floor = 1e-6);

/// Random model (cross matrices included, drawn nonzero), frames and labels
/// from `seed`; compares every BPTT gradient entry with
/// (L(w + eps) - L(w - eps)) / (2 eps).
GradcheckResult gradcheck_config(const GradcheckDims &dims,
                                 const FeedbackConfig &config,
                                 std::uint64_t seed, double eps = 1e-4);

}  // namespace mtrl

#endif  // MTRL_GRADCHECK_H_
