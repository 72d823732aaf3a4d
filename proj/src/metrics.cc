// SPDX-License-Identifier: Apache-2.0

#include "mtrl/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace mtrl {
namespace {

struct FrameCount {
  std::size_t errors = 0;
  std::size_t scored = 0;
};

FrameCount count_frame_errors(const std::vector<Vec> &asr_logits,
                              const Utterance &u, std::size_t delay) {
  FrameCount fc;
  for (std::size_t t = delay; t < asr_logits.size(); ++t) {
    ++fc.scored;
    if (argmax(asr_logits[t]) != u.phone_labels[t - delay]) ++fc.errors;
  }
  return fc;
}

std::size_t predict_speaker(const std::vector<Vec> &sre_logits) {
  Vec avg(sre_logits.front().size(), 0.0);
  for (const Vec &y : sre_logits) {
    const Vec p = softmax(y);
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += p[k];
  }
  for (double &v : avg) v /= static_cast<double>(sre_logits.size());
  return argmax(avg);
}

void check_labels(const Utterance &u) {
  if (u.phone_labels.size() != u.frames.rows)
    throw std::invalid_argument("utterance " + u.id + ": " +
                                std::to_string(u.phone_labels.size()) +
                                " labels for " + std::to_string(u.frames.rows) +
                                " frames");
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

RVector rvector_from_cache(const SequenceCache &cache) {
  if (cache.sre.empty())
    throw std::invalid_argument("extract_rvector: empty utterance");
  const std::size_t nr = cache.sre.front().r.size();
  const std::size_t np = cache.sre.front().p.size();
  RVector v(nr + np, 0.0);
  for (const StepCache &k : cache.sre) {
    for (std::size_t j = 0; j < nr; ++j) v[j] += k.r[j];
    for (std::size_t j = 0; j < np; ++j) v[nr + j] += k.p[j];
  }
  const double T = static_cast<double>(cache.sre.size());
  for (double &x : v) x /= T;
  return v;
}

RVector extract_rvector(const JointModel &model, const Mat &frames) {
  if (frames.rows == 0)
    throw std::invalid_argument("extract_rvector: empty utterance");
  return rvector_from_cache(forward_sequence(model, frames).cache);
}

double cosine_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_score: lengths " +
                                std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double compute_eer(std::span<const double> target_scores,
                   std::span<const double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty())
    throw std::invalid_argument("compute_eer: need at least one target and one "
                                "non-target score");
  std::vector<double> tar(target_scores.begin(), target_scores.end());
  std::vector<double> non(nontarget_scores.begin(), nontarget_scores.end());
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds = tar;
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());
  // ROC points at increasing thresholds; FAR falls and FRR rises. The final
  // point (threshold above every score) is (0, 1).
  double prev_far = 1.0, prev_frr = 0.0;
  std::size_t ti = 0, ni = 0;
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    double far = 0.0, frr = 1.0;
    if (k < thresholds.size()) {
      const double th = thresholds[k];
      while (ti < tar.size() && tar[ti] < th) ++ti;
      while (ni < non.size() && non[ni] < th) ++ni;
      far = static_cast<double>(non.size() - ni) / nn;
      frr = static_cast<double>(ti) / nt;
    }
    const double diff = far - frr;
    if (diff == 0.0) return far;
    if (diff < 0.0) {
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return prev_far;  // unreachable: the final point always has far - frr < 0
}

double frame_error_rate(const JointModel &model,
                        const std::vector<Utterance> &utts) {
  FrameCount total;
  for (const Utterance &u : utts) {
    check_labels(u);
    const FrameCount fc = count_frame_errors(
        forward_sequence(model, u.frames).asr_logits, u, model.asr_delay);
    total.errors += fc.errors;
    total.scored += fc.scored;
  }
  if (total.scored == 0)
    throw std::invalid_argument("frame_error_rate: delay " +
                                std::to_string(model.asr_delay) +
                                " masks every frame");
  return static_cast<double>(total.errors) / static_cast<double>(total.scored);
}

double speaker_id_accuracy(const JointModel &model,
                           const std::vector<Utterance> &utts) {
  if (utts.empty())
    throw std::invalid_argument("speaker_id_accuracy: no utterances");
  std::size_t correct = 0;
  for (const Utterance &u : utts) {
    if (u.speaker >= model.sre_dims.output)
      throw std::invalid_argument("utterance " + u.id + ": speaker " +
                                  std::to_string(u.speaker) +
                                  " outside the model's speaker set");
    if (predict_speaker(forward_sequence(model, u.frames).sre_logits) ==
        u.speaker)
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(utts.size());
}

EvalReport evaluate(const JointModel &model, const Dataset &ds) {
  if (ds.test.empty()) throw std::invalid_argument("evaluate: empty test set");
  EvalReport rep;
  rep.config = model.config;

  std::map<std::size_t, std::pair<RVector, std::size_t>> enroll;
  for (const Utterance &u : ds.train) {
    RVector v = extract_rvector(model, u.frames);
    auto &[sum, n] = enroll[u.speaker];
    if (sum.empty()) sum.assign(v.size(), 0.0);
    for (std::size_t k = 0; k < v.size(); ++k) sum[k] += v[k];
    ++n;
  }
  for (auto &[spk, entry] : enroll)
    for (double &x : entry.first) x /= static_cast<double>(entry.second);

  FrameCount frames;
  std::size_t correct = 0;
  std::vector<RVector> test_vecs;
  for (const Utterance &u : ds.test) {
    check_labels(u);
    const SequenceOutput out = forward_sequence(model, u.frames);
    const FrameCount fc = count_frame_errors(out.asr_logits, u, model.asr_delay);
    frames.errors += fc.errors;
    frames.scored += fc.scored;
    if (predict_speaker(out.sre_logits) == u.speaker) ++correct;
    test_vecs.push_back(rvector_from_cache(out.cache));
  }
  if (frames.scored == 0)
    throw std::invalid_argument("evaluate: delay masks every test frame");
  rep.frame_error =
      static_cast<double>(frames.errors) / static_cast<double>(frames.scored);
  rep.id_accuracy =
      static_cast<double>(correct) / static_cast<double>(ds.test.size());

  std::vector<double> tar, non;
  for (const Trial &tr : build_trials(ds.test)) {
    auto it = enroll.find(tr.enrolled_speaker);
    if (it == enroll.end())
      throw std::invalid_argument("evaluate: speaker " +
                                  std::to_string(tr.enrolled_speaker) +
                                  " has no training utterances to enroll");
    const double s = cosine_score(it->second.first, test_vecs[tr.utterance]);
    (tr.is_target ? tar : non).push_back(s);
  }
  rep.eer = compute_eer(tar, non);
  return rep;
}

void write_report_csv(std::ostream &out, std::span<const EvalReport> reports) {
  out << kReportCsvHeader << '\n';
  for (const EvalReport &r : reports) {
    out << r.config.sources_label() << ',' << r.config.sinks_label() << ','
        << fmt(r.frame_error) << ',' << fmt(r.eer) << ',' << fmt(r.id_accuracy)
        << ',' << (r.reference_wer ? fmt(*r.reference_wer, 2) : "")
        << ',' << (r.reference_eer ? fmt(*r.reference_eer, 2) : "")
        << '\n';
  }
}

}  // namespace mtrl
