// SPDX-License-Identifier: Apache-2.0

#include "mtrl/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mtrl {
namespace {

struct Instance {
  JointModel model;
  Mat frames;
  std::vector<std::uint16_t> phones;
  std::size_t speaker = 0;
};

Instance make_instance(const GradcheckDims &d, const FeedbackConfig &config,
                       std::uint64_t seed) {
  Rng rng{seed};
  const CellDims asr{d.input, d.cell, d.rec_proj, d.nonrec_proj, d.phones};
  const CellDims sre{d.input, d.cell, d.rec_proj, d.nonrec_proj, d.speakers};
  Instance in{init_joint_model(asr, sre, config, d.delay, rng), Mat(d.frames, d.input),
              {}, 0};
  // Move every parameter (biases and cross links too) off its initial value
  // so no term of the backward pass is trivially zero.
  in.model.params.visit([&](const std::string &, std::span<double> s) {
    for (double &v : s) v += rng.uniform(-0.5, 0.5);
  });
  for (double &v : in.frames.data) v = rng.uniform(-1.0, 1.0);
  for (std::size_t t = 0; t < d.frames; ++t)
    in.phones.push_back(static_cast<std::uint16_t>(rng.uniform_index(d.phones)));
  in.speaker = rng.uniform_index(d.speakers);
  return in;
}

double loss_of(const Instance &in) {
  const SequenceOutput out = forward_sequence(in.model, in.frames);
  return joint_loss(out.asr_logits, out.sre_logits, in.phones, in.speaker,
                    in.model.asr_delay)
      .loss;
}

}  // namespace

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult gradcheck_config(const GradcheckDims &dims,
                                 const FeedbackConfig &config,
                                 std::uint64_t seed, double eps) {
  Instance in = make_instance(dims, config, seed);
  const SequenceOutput out = forward_sequence(in.model, in.frames);
  const JointLoss loss = joint_loss(out.asr_logits, out.sre_logits, in.phones,
                                    in.speaker, in.model.asr_delay);
  const JointParams grads = backward_sequence(in.model, out.cache,
                                              loss.d_asr_logits,
                                              loss.d_sre_logits);

  std::vector<std::pair<std::string, std::span<const double>>> analytic;
  grads.visit([&](const std::string &name, std::span<const double> s) {
    analytic.emplace_back(name, s);
  });
  std::vector<std::span<double>> live;
  in.model.params.visit(
      [&](const std::string &, std::span<double> s) { live.push_back(s); });

  GradcheckResult res;
  res.config = config;
  for (std::size_t f = 0; f < live.size(); ++f) {
    for (std::size_t j = 0; j < live[f].size(); ++j) {
      const double saved = live[f][j];
      live[f][j] = saved + eps;
      const double up = loss_of(in);
      live[f][j] = saved - eps;
      const double down = loss_of(in);
      live[f][j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = gradient_rel_error(analytic[f].second[j], numeric);
      ++res.checked;
      if (err > res.max_rel_error || res.worst_param.empty()) {
        res.max_rel_error = std::max(res.max_rel_error, err);
        res.worst_param = analytic[f].first + "[" + std::to_string(j) + "]";
      }
    }
  }
  return res;
}

}  // namespace mtrl
