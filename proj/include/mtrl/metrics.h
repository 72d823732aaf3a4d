// SPDX-License-Identifier: Apache-2.0
//
// Content-task and speaker-task metrics: frame error rate, r-vectors with
// cosine scoring, EER over verification trials and closed-set speaker-ID
// accuracy.

#ifndef MTRL_METRICS_H_
#define MTRL_METRICS_H_

#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "mtrl/data_synth.h"
#include "mtrl/multitask_net.h"

namespace mtrl {

/// Utterance-level speaker embedding: concat(mean_t r^s_t, mean_t p^s_t).
using RVector = Vec;

RVector extract_rvector(const JointModel &model, const Mat &frames);
RVector rvector_from_cache(const SequenceCache &cache);

/// a.b / (|a| |b|); 0 when either operand is the zero vector.
double cosine_score(std::span<const double> a, std::span<const double> b);

/// Equal error rate. Thresholds sweep every distinct score, accepting
/// scores >= threshold; when FAR and FRR never coincide the crossing is
/// interpolated linearly between the adjacent ROC points.
double compute_eer(std::span<const double> target_scores,
                   std::span<const double> nontarget_scores);

/// Fraction of frames t >= delay whose ASR argmax differs from label t-delay.
double frame_error_rate(const JointModel &model,
                        const std::vector<Utterance> &utts);

/// Per utterance, argmax over the frame-averaged SRE softmax.
double speaker_id_accuracy(const JointModel &model,
                           const std::vector<Utterance> &utts);

struct EvalReport {
  FeedbackConfig config;
  double frame_error = 0.0;
  double eer = 0.0;
  double id_accuracy = 0.0;
  std::optional<double> reference_wer;  // percent, display only
  std::optional<double> reference_eer;  // percent, display only
};

/// Enrollment model per speaker is the mean train-utterance r-vector; trials
/// come from build_trials over the test list.
EvalReport evaluate(const JointModel &model, const Dataset &ds);

inline constexpr const char *kReportCsvHeader =
    "config_sources,config_sinks,frame_error,eer,id_accuracy,ref_wer,ref_eer";

void write_report_csv(std::ostream &out, std::span<const EvalReport> reports);

}  // namespace mtrl

#endif  // MTRL_METRICS_H_
