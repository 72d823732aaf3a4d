// SPDX-License-Identifier: Apache-2.0

#include "mtrl/multitask_net.h"

#include <stdexcept>

namespace mtrl {
namespace {

constexpr std::size_t idx(auto e) { return static_cast<std::size_t>(e); }

const Vec &source_value(const StepCache &k, Source s) {
  return s == Source::kR ? k.r : k.p;
}

std::size_t source_dim(const CellDims &d, Source s) {
  return s == Source::kR ? d.rec_proj : d.nonrec_proj;
}

// Injection received by the tower on the receiving side of `dir`, given the
// sender's cache from the previous step.
SinkInjection gather_injection(const JointModel &model, Direction dir,
                               const StepCache &sender_prev) {
  SinkInjection inj;
  for (const auto &[key, mat] : model.params.cross) {
    if (key.direction != dir) continue;
    auto &slot = inj[key.sink];
    if (!slot) slot = Vec(mat.rows, 0.0);
    matvec_acc(mat, source_value(sender_prev, key.source), *slot);
  }
  return inj;
}

std::string join_labels(std::span<const bool> on,
                        std::span<const std::string_view> names) {
  std::string out;
  for (std::size_t k = 0; k < on.size(); ++k) {
    if (!on[k]) continue;
    if (!out.empty()) out += '+';
    out += names[k];
  }
  return out.empty() ? "none" : out;
}

template <std::size_t N>
std::array<bool, N> parse_labels(std::string_view text,
                                 const std::array<std::string_view, N> &names,
                                 std::string_view what) {
  std::array<bool, N> on{};
  if (text == "none" || text.empty()) return on;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('+', pos), text.size());
    const std::string_view tok = text.substr(pos, end - pos);
    bool found = false;
    for (std::size_t k = 0; k < N; ++k) {
      if (tok == names[k]) {
        on[k] = true;
        found = true;
      }
    }
    if (!found)
      throw std::invalid_argument("unknown feedback " + std::string(what) +
                                  " '" + std::string(tok) + "'");
    pos = end + 1;
  }
  return on;
}

constexpr std::array<std::string_view, 2> kSourceNames = {"r", "p"};
constexpr std::array<std::string_view, 4> kSinkNames = {"i", "f", "o", "g"};

void check_towers(const JointModel &m) {
  if (m.params.asr.dims() != m.asr_dims || m.params.sre.dims() != m.sre_dims)
    throw std::invalid_argument("joint model: tower parameters do not match "
                                "declared dims");
}

}  // namespace

bool FeedbackConfig::is_baseline() const {
  return !sources[0] && !sources[1] && !sinks[0] && !sinks[1] && !sinks[2] &&
         !sinks[3];
}

void FeedbackConfig::validate() const {
  const bool any_src = sources[0] || sources[1];
  const bool any_sink = sinks[0] || sinks[1] || sinks[2] || sinks[3];
  if (any_src != any_sink)
    throw std::invalid_argument("feedback config: sources '" + sources_label() +
                                "' and sinks '" + sinks_label() +
                                "' must both be empty or both non-empty");
}

std::string FeedbackConfig::sources_label() const {
  return join_labels(sources, kSourceNames);
}

std::string FeedbackConfig::sinks_label() const {
  return join_labels(sinks, kSinkNames);
}

FeedbackConfig FeedbackConfig::parse(std::string_view src,
                                     std::string_view snk) {
  FeedbackConfig cfg;
  cfg.sources = parse_labels(src, kSourceNames, "source");
  cfg.sinks = parse_labels(snk, kSinkNames, "sink");
  cfg.validate();
  return cfg;
}

std::string cross_key_name(const CrossKey &key) {
  std::string name = key.direction == Direction::kSreToAsr ? "cross.sre_to_asr."
                                                            : "cross.asr_to_sre.";
  name += sink_name(key.sink);
  name += '.';
  name += kSourceNames[idx(key.source)];
  return name;
}

JointParams JointParams::zeros_like() const {
  JointParams z{CellParams::zeros(asr.dims()), CellParams::zeros(sre.dims()),
                {}};
  for (const auto &[key, mat] : cross) z.cross.emplace(key, Mat(mat.rows, mat.cols));
  return z;
}

std::size_t JointParams::parameter_count() const {
  std::size_t n = asr.parameter_count() + sre.parameter_count();
  for (const auto &[key, mat] : cross) n += mat.data.size();
  return n;
}

CrossWeights make_cross_weights(const CellDims &asr_dims,
                                const CellDims &sre_dims,
                                const FeedbackConfig &config) {
  config.validate();
  CrossWeights cw;
  for (Direction dir : kAllDirections) {
    const CellDims &recv = dir == Direction::kSreToAsr ? asr_dims : sre_dims;
    const CellDims &send = dir == Direction::kSreToAsr ? sre_dims : asr_dims;
    for (Sink sink : kAllSinks) {
      if (!config.has(sink)) continue;
      for (Source src : kAllSources) {
        if (!config.has(src)) continue;
        cw.emplace(CrossKey{dir, sink, src},
                   Mat(recv.cell, source_dim(send, src)));
      }
    }
  }
  return cw;
}

void JointModel::validate() const {
  asr_dims.validate();
  sre_dims.validate();
  config.validate();
  if (asr_dims.input != sre_dims.input)
    throw std::invalid_argument("joint model: towers disagree on input dim (" +
                                std::to_string(asr_dims.input) + " vs " +
                                std::to_string(sre_dims.input) + ")");
  check_towers(*this);
  const CrossWeights expect = make_cross_weights(asr_dims, sre_dims, config);
  if (expect.size() != params.cross.size())
    throw std::invalid_argument("joint model: " +
                                std::to_string(params.cross.size()) +
                                " cross matrices, config needs " +
                                std::to_string(expect.size()));
  for (const auto &[key, mat] : expect) {
    auto it = params.cross.find(key);
    if (it == params.cross.end() || it->second.rows != mat.rows ||
        it->second.cols != mat.cols)
      throw std::invalid_argument("joint model: missing or misshapen " +
                                  cross_key_name(key));
  }
}

JointModel init_joint_model(const CellDims &asr_dims, const CellDims &sre_dims,
                            const FeedbackConfig &config, std::size_t delay,
                            Rng &rng) {
  JointModel m;
  m.asr_dims = asr_dims;
  m.sre_dims = sre_dims;
  m.config = config;
  m.asr_delay = delay;
  m.params.asr = init_cell_params(asr_dims, rng);
  m.params.sre = init_cell_params(sre_dims, rng);
  m.params.cross = make_cross_weights(asr_dims, sre_dims, config);
  m.validate();
  return m;
}

SequenceOutput forward_sequence(const JointModel &model, const Mat &frames) {
  if (frames.rows == 0)
    throw std::invalid_argument("forward_sequence: empty utterance");
  if (frames.cols != model.asr_dims.input)
    throw std::invalid_argument("forward_sequence: frame dim " +
                                std::to_string(frames.cols) + ", model expects " +
                                std::to_string(model.asr_dims.input));
  check_towers(model);

  const std::size_t T = frames.rows;
  SequenceOutput out;
  out.cache.asr.reserve(T);
  out.cache.sre.reserve(T);
  CellState asr_state = CellState::zeros(model.asr_dims);
  CellState sre_state = CellState::zeros(model.sre_dims);
  for (std::size_t t = 0; t < T; ++t) {
    SinkInjection asr_inj, sre_inj;
    if (t > 0) {
      asr_inj = gather_injection(model, Direction::kSreToAsr,
                                 out.cache.sre.back());
      sre_inj = gather_injection(model, Direction::kAsrToSre,
                                 out.cache.asr.back());
    }
    StepOutput a = cell_forward(model.params.asr, frames.row(t), asr_state,
                                asr_inj);
    StepOutput s = cell_forward(model.params.sre, frames.row(t), sre_state,
                                sre_inj);
    asr_state = std::move(a.state);
    sre_state = std::move(s.state);
    out.asr_logits.push_back(a.cache.y);
    out.sre_logits.push_back(s.cache.y);
    out.cache.asr.push_back(std::move(a.cache));
    out.cache.sre.push_back(std::move(s.cache));
  }
  return out;
}

JointLoss joint_loss(std::span<const Vec> asr_logits,
                     std::span<const Vec> sre_logits,
                     std::span<const std::uint16_t> phone_labels,
                     std::size_t speaker_label, std::size_t delay) {
  const std::size_t T = asr_logits.size();
  if (sre_logits.size() != T || phone_labels.size() != T)
    throw std::invalid_argument(
        "joint_loss: " + std::to_string(T) + " asr frames, " +
        std::to_string(sre_logits.size()) + " sre frames, " +
        std::to_string(phone_labels.size()) + " labels");
  if (delay >= T)
    throw std::invalid_argument("joint_loss: delay " + std::to_string(delay) +
                                " leaves no scored frame in " +
                                std::to_string(T) + " frames");

  JointLoss res;
  res.d_asr_logits.resize(T);
  res.d_sre_logits.resize(T);
  const double asr_scale = 1.0 / static_cast<double>(T - delay);
  const double sre_scale = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (t < delay) {
      res.d_asr_logits[t].assign(asr_logits[t].size(), 0.0);
    } else {
      XentResult x = softmax_xent(asr_logits[t], phone_labels[t - delay]);
      res.asr_loss += x.loss;
      for (double &g : x.grad) g *= asr_scale;
      res.d_asr_logits[t] = std::move(x.grad);
    }
    XentResult x = softmax_xent(sre_logits[t], speaker_label);
    res.sre_loss += x.loss;
    for (double &g : x.grad) g *= sre_scale;
    res.d_sre_logits[t] = std::move(x.grad);
  }
  res.asr_loss *= asr_scale;
  res.sre_loss *= sre_scale;
  res.loss = res.asr_loss + res.sre_loss;
  return res;
}

JointParams backward_sequence(const JointModel &model,
                              const SequenceCache &cache,
                              std::span<const Vec> d_asr_logits,
                              std::span<const Vec> d_sre_logits) {
  check_towers(model);
  const std::size_t T = cache.asr.size();
  if (cache.sre.size() != T || d_asr_logits.size() != T ||
      d_sre_logits.size() != T)
    throw std::invalid_argument("backward_sequence: cache/gradient lengths "
                                "disagree");
  for (std::size_t t = 0; t < T; ++t) {
    if (cache.asr[t].c.size() != model.asr_dims.cell ||
        cache.sre[t].c.size() != model.sre_dims.cell ||
        cache.asr[t].x.size() != model.asr_dims.input)
      throw std::invalid_argument("backward_sequence: cache does not match "
                                  "model dims");
  }

  JointParams grads = model.params.zeros_like();

  // Per tower: gradients w.r.t. (c_t, r_t) via the tower's own recurrence,
  // and w.r.t. (r_t, p_t) arriving through the other tower's sinks at t+1.
  struct Carry {
    CellState own;
    Vec cross_r, cross_p;
  };
  auto fresh = [](const CellDims &d) {
    return Carry{CellState::zeros(d), Vec(d.rec_proj, 0.0),
                 Vec(d.nonrec_proj, 0.0)};
  };
  Carry asr = fresh(model.asr_dims), sre = fresh(model.sre_dims);

  for (std::size_t t = T; t-- > 0;) {
    StepBackward ba = cell_backward(
        model.params.asr, cache.asr[t], asr.own,
        {{}, asr.cross_r, asr.cross_p, d_asr_logits[t]}, grads.asr);
    StepBackward bs = cell_backward(
        model.params.sre, cache.sre[t], sre.own,
        {{}, sre.cross_r, sre.cross_p, d_sre_logits[t]}, grads.sre);

    Carry asr_prev = fresh(model.asr_dims), sre_prev = fresh(model.sre_dims);
    asr_prev.own = std::move(ba.d_prev);
    sre_prev.own = std::move(bs.d_prev);

    if (t > 0) {
      for (const auto &[key, mat] : model.params.cross) {
        const bool to_asr = key.direction == Direction::kSreToAsr;
        const Vec &d_sink = (to_asr ? ba : bs).d_inj[idx(key.sink)];
        const StepCache &sender = to_asr ? cache.sre[t - 1] : cache.asr[t - 1];
        Carry &sender_carry = to_asr ? sre_prev : asr_prev;
        outer_acc(grads.cross.at(key), d_sink, source_value(sender, key.source));
        matvec_t_acc(mat, d_sink,
                     key.source == Source::kR ? sender_carry.cross_r
                                              : sender_carry.cross_p);
      }
    }
    asr = std::move(asr_prev);
    sre = std::move(sre_prev);
  }
  return grads;
}

}  // namespace mtrl
