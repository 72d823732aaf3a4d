// SPDX-License-Identifier: Apache-2.0

#include "mtrl/config_json.h"

#include <initializer_list>
#include <stdexcept>
#include <string>

namespace mtrl {
namespace {

using nlohmann::json;

void reject_unknown(const json &j, std::initializer_list<std::string_view> keys,
                    std::string_view what) {
  if (!j.is_object())
    throw std::invalid_argument(std::string(what) + ": expected an object");
  for (const auto &[k, v] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known)
      throw std::invalid_argument(std::string(what) + ": unknown key '" + k +
                                  "'");
  }
}

template <typename T>
void maybe(const json &j, const char *key, T &dst) {
  if (j.contains(key)) j.at(key).get_to(dst);
}

}  // namespace

json to_json(const SynthConfig &c) {
  return {{"n_speakers", c.n_speakers},
          {"n_phones", c.n_phones},
          {"feat_dim", c.feat_dim},
          {"utts_per_speaker", c.utts_per_speaker},
          {"frames_per_utt", c.frames_per_utt},
          {"segment_min", c.segment_min},
          {"segment_max", c.segment_max},
          {"noise_sigma", c.noise_sigma},
          {"splice_radius", c.splice_radius},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json &j, SynthConfig c) {
  reject_unknown(j,
                 {"n_speakers", "n_phones", "feat_dim", "utts_per_speaker",
                  "frames_per_utt", "segment_min", "segment_max", "noise_sigma",
                  "splice_radius", "seed"},
                 "synth config");
  maybe(j, "n_speakers", c.n_speakers);
  maybe(j, "n_phones", c.n_phones);
  maybe(j, "feat_dim", c.feat_dim);
  maybe(j, "utts_per_speaker", c.utts_per_speaker);
  maybe(j, "frames_per_utt", c.frames_per_utt);
  maybe(j, "segment_min", c.segment_min);
  maybe(j, "segment_max", c.segment_max);
  maybe(j, "noise_sigma", c.noise_sigma);
  maybe(j, "splice_radius", c.splice_radius);
  maybe(j, "seed", c.seed);
  return c;
}

json to_json(const CellDims &d) {
  return {{"input", d.input},
          {"cell", d.cell},
          {"rec_proj", d.rec_proj},
          {"nonrec_proj", d.nonrec_proj},
          {"output", d.output}};
}

CellDims cell_dims_from_json(const json &j) {
  reject_unknown(j, {"input", "cell", "rec_proj", "nonrec_proj", "output"},
                 "cell dims");
  CellDims d;
  j.at("input").get_to(d.input);
  j.at("cell").get_to(d.cell);
  j.at("rec_proj").get_to(d.rec_proj);
  j.at("nonrec_proj").get_to(d.nonrec_proj);
  j.at("output").get_to(d.output);
  d.validate();
  return d;
}

json to_json(const FeedbackConfig &c) {
  return {{"sources", c.sources_label()}, {"sinks", c.sinks_label()}};
}

FeedbackConfig feedback_from_json(const json &j) {
  reject_unknown(j, {"sources", "sinks"}, "feedback config");
  return FeedbackConfig::parse(j.value("sources", std::string("none")),
                               j.value("sinks", std::string("none")));
}

json to_json(const OptimConfig &c) {
  return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum},
          {"clip_norm", c.clip_norm},         {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"seed", c.seed}};
}

OptimConfig optim_config_from_json(const json &j, OptimConfig c) {
  reject_unknown(j,
                 {"learning_rate", "momentum", "clip_norm", "epochs",
                  "batch_size", "seed"},
                 "optim config");
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "momentum", c.momentum);
  maybe(j, "clip_norm", c.clip_norm);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "seed", c.seed);
  return c;
}

}  // namespace mtrl
