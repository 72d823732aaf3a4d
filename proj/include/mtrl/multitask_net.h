// SPDX-License-Identifier: Apache-2.0
//
// Joint content/speaker model: two projected-LSTM towers over the same input
// frames. At step t each tower receives, at every configured sink, the sum
// over configured sources of W[direction, sink, source] times the other
// tower's projection from step t-1. Feedback is symmetric: both directions
// always use the same (sources, sinks) configuration.

#ifndef MTRL_MULTITASK_NET_H_
#define MTRL_MULTITASK_NET_H_

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mtrl/lstm_cell.h"
#include "mtrl/numerics.h"

namespace mtrl {

enum class Source : std::size_t { kR = 0, kP = 1 };
inline constexpr std::array<Source, 2> kAllSources = {Source::kR, Source::kP};

enum class Direction : std::size_t { kSreToAsr = 0, kAsrToSre = 1 };
inline constexpr std::array<Direction, 2> kAllDirections = {
    Direction::kSreToAsr, Direction::kAsrToSre};

struct FeedbackConfig {
  std::array<bool, 2> sources{};  // indexed by Source
  std::array<bool, 4> sinks{};    // indexed by Sink

  bool has(Source s) const { return sources[static_cast<std::size_t>(s)]; }
  bool has(Sink s) const { return sinks[static_cast<std::size_t>(s)]; }
  bool is_baseline() const;

  /// Both sets empty, or both non-empty.
  void validate() const;

  /// "r+p" / "i+f+o+g"; the empty set is "none".
  std::string sources_label() const;
  std::string sinks_label() const;
  static FeedbackConfig parse(std::string_view sources, std::string_view sinks);

  bool operator==(const FeedbackConfig &) const = default;
};

struct CrossKey {
  Direction direction;
  Sink sink;
  Source source;

  auto operator<=>(const CrossKey &) const = default;
};

std::string cross_key_name(const CrossKey &key);

/// Exactly one matrix per (direction, configured sink, configured source),
/// in ascending key order.
using CrossWeights = std::map<CrossKey, Mat>;

/// All trainable parameters of the joint model; doubles as the gradient and
/// momentum buffer type.
struct JointParams {
  CellParams asr;
  CellParams sre;
  CrossWeights cross;

  JointParams zeros_like() const;
  std::size_t parameter_count() const;

  /// f(name, span) over asr fields, sre fields, then cross matrices in key
  /// order.
  template <typename F>
  void visit(F &&f) {
    visit_impl<double>(*this, f);
  }
  template <typename F>
  void visit(F &&f) const {
    visit_impl<const double>(*this, f);
  }

  bool operator==(const JointParams &) const = default;

 private:
  template <typename T, typename Self, typename F>
  static void visit_impl(Self &s, F &f) {
    s.asr.visit([&](const ParamField<T> &p) {
      f(std::string("asr.") + std::string(p.name), p.values);
    });
    s.sre.visit([&](const ParamField<T> &p) {
      f(std::string("sre.") + std::string(p.name), p.values);
    });
    for (auto &[key, mat] : s.cross)
      f(cross_key_name(key), std::span<T>(mat.data));
  }
};

struct JointModel {
  CellDims asr_dims;
  CellDims sre_dims;
  FeedbackConfig config;
  std::size_t asr_delay = 0;
  JointParams params;

  /// Checks tower/cross shapes against dims and config.
  void validate() const;
};

/// Towers from init_cell_params (ASR first, then SRE, from one stream); every
/// cross matrix starts at zero.
JointModel init_joint_model(const CellDims &asr_dims, const CellDims &sre_dims,
                            const FeedbackConfig &config, std::size_t delay,
                            Rng &rng);

/// Allocates zero cross matrices matching `config`.
CrossWeights make_cross_weights(const CellDims &asr_dims,
                                const CellDims &sre_dims,
                                const FeedbackConfig &config);

struct SequenceCache {
  std::vector<StepCache> asr;
  std::vector<StepCache> sre;
};

struct SequenceOutput {
  std::vector<Vec> asr_logits;
  std::vector<Vec> sre_logits;
  SequenceCache cache;
};

/// Runs both towers over `frames` (one frame per row).
SequenceOutput forward_sequence(const JointModel &model, const Mat &frames);

struct JointLoss {
  double loss = 0.0;
  double asr_loss = 0.0;
  double sre_loss = 0.0;
  std::vector<Vec> d_asr_logits;
  std::vector<Vec> d_sre_logits;
};

/// loss = mean_{t >= delay} xent(asr[t], phone[t - delay])
///      + mean_t xent(sre[t], speaker).
JointLoss joint_loss(std::span<const Vec> asr_logits,
                     std::span<const Vec> sre_logits,
                     std::span<const std::uint16_t> phone_labels,
                     std::size_t speaker_label, std::size_t delay);

/// Reverse-time sweep over the cached sequence, including gradient flow
/// through the cross-tower links.
JointParams backward_sequence(const JointModel &model,
                              const SequenceCache &cache,
                              std::span<const Vec> d_asr_logits,
                              std::span<const Vec> d_sre_logits);

}  // namespace mtrl

#endif  // MTRL_MULTITASK_NET_H_
