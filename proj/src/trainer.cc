// SPDX-License-Identifier: Apache-2.0

#include "mtrl/trainer.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "binary_io.h"
#include "mtrl/config_json.h"
#include "mtrl/metrics.h"

namespace mtrl {
namespace {

using nlohmann::json;

constexpr std::uint64_t kShufflePurpose = 0x5348;  // per-epoch offset added

std::vector<std::span<double>> fields(JointParams &p) {
  std::vector<std::span<double>> out;
  p.visit([&](const std::string &, std::span<double> s) { out.push_back(s); });
  return out;
}

std::vector<std::span<const double>> fields(const JointParams &p) {
  std::vector<std::span<const double>> out;
  p.visit(
      [&](const std::string &, std::span<const double> s) { out.push_back(s); });
  return out;
}

void check_congruent(const std::vector<std::span<double>> &a,
                     const std::vector<std::span<const double>> &b,
                     std::string_view what) {
  bool ok = a.size() == b.size();
  for (std::size_t k = 0; ok && k < a.size(); ++k)
    ok = a[k].size() == b[k].size();
  if (!ok)
    throw std::invalid_argument(std::string(what) +
                                ": parameter structures differ in shape");
}

void accumulate(JointParams &dst, const JointParams &src) {
  auto d = fields(dst);
  const auto s = fields(src);
  check_congruent(d, s, "accumulate");
  for (std::size_t k = 0; k < d.size(); ++k)
    for (std::size_t j = 0; j < d[k].size(); ++j) d[k][j] += s[k][j];
}

void check_labels(const JointModel &model, const Utterance &u) {
  if (u.phone_labels.size() != u.frames.rows)
    throw std::invalid_argument("utterance " + u.id + ": label/frame count "
                                "mismatch");
  if (u.speaker >= model.sre_dims.output)
    throw std::invalid_argument("utterance " + u.id + ": speaker " +
                                std::to_string(u.speaker) +
                                " outside model output range");
}

json history_to_json(const std::vector<EpochRecord> &h) {
  json arr = json::array();
  for (const EpochRecord &r : h)
    arr.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"heldout_frame_error", r.heldout_frame_error},
                   {"heldout_id_accuracy", r.heldout_id_accuracy}});
  return arr;
}

}  // namespace

void OptimConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("optim: learning_rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("optim: momentum must be in [0, 1)");
  if (!(clip_norm > 0.0))
    throw std::invalid_argument("optim: clip_norm must be > 0");
  if (batch_size == 0) throw std::invalid_argument("optim: batch_size must be > 0");
}

TrainState make_train_state(JointModel model, const OptimConfig &optim) {
  model.validate();
  optim.validate();
  TrainState st;
  st.velocity = model.params.zeros_like();
  st.model = std::move(model);
  st.optim = optim;
  return st;
}

double global_norm(const JointParams &grads) {
  double ss = 0.0;
  for (auto s : fields(grads))
    for (double v : s) ss += v * v;
  return std::sqrt(ss);
}

double clip_global_norm(JointParams &grads, double clip_norm) {
  if (!(clip_norm > 0.0))
    throw std::invalid_argument("clip_global_norm: clip_norm must be > 0");
  const double norm = global_norm(grads);
  if (!(norm > clip_norm)) return 1.0;
  const double scale = clip_norm / norm;
  for (auto s : fields(grads))
    for (double &v : s) v *= scale;
  return scale;
}

void sgd_step(TrainState &state, const JointParams &grads,
              const OptimConfig &optim) {
  auto params = fields(state.model.params);
  auto vel = fields(state.velocity);
  const auto g = fields(grads);
  check_congruent(params, g, "sgd_step");
  check_congruent(vel, g, "sgd_step velocity");
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t j = 0; j < params[k].size(); ++j) {
      vel[k][j] = optim.momentum * vel[k][j] + g[k][j];
      params[k][j] -= optim.learning_rate * vel[k][j];
    }
  }
}

UtteranceGradient utterance_gradient(const JointModel &model,
                                     const Utterance &utt) {
  check_labels(model, utt);
  const SequenceOutput out = forward_sequence(model, utt.frames);
  const JointLoss loss = joint_loss(out.asr_logits, out.sre_logits,
                                    utt.phone_labels, utt.speaker,
                                    model.asr_delay);
  return {loss.loss, backward_sequence(model, out.cache, loss.d_asr_logits,
                                       loss.d_sre_logits)};
}

double mean_loss(const JointModel &model, const std::vector<Utterance> &utts) {
  if (utts.empty()) throw std::invalid_argument("mean_loss: no utterances");
  double total = 0.0;
  for (const Utterance &u : utts) {
    check_labels(model, u);
    const SequenceOutput out = forward_sequence(model, u.frames);
    total += joint_loss(out.asr_logits, out.sre_logits, u.phone_labels,
                        u.speaker, model.asr_delay)
                 .loss;
  }
  return total / static_cast<double>(utts.size());
}

void train(TrainState &state, const std::vector<Utterance> &train_set,
           const std::vector<Utterance> &heldout_set,
           const EpochCallback &on_epoch) {
  const OptimConfig &optim = state.optim;
  optim.validate();
  state.model.validate();
  if (optim.epochs == 0) return;
  if (train_set.empty() || heldout_set.empty())
    throw std::invalid_argument("train: empty training or held-out set");
  for (const Utterance &u : train_set) check_labels(state.model, u);

  const std::size_t first = state.epoch;
  for (std::size_t e = first; e < first + optim.epochs; ++e) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle{derive_seed(optim.seed, kShufflePurpose + e)};
    for (std::size_t k = order.size() - 1; k > 0; --k)
      std::swap(order[k], order[shuffle.uniform_index(k + 1)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b * optim.batch_size < order.size(); ++b) {
      JointParams batch = state.model.params.zeros_like();
      const std::size_t end =
          std::min(order.size(), (b + 1) * optim.batch_size);
      for (std::size_t k = b * optim.batch_size; k < end; ++k) {
        UtteranceGradient ug =
            utterance_gradient(state.model, train_set[order[k]]);
        if (!std::isfinite(ug.loss))
          throw std::runtime_error(
              "train: non-finite loss at epoch " + std::to_string(e + 1) +
              ", batch " + std::to_string(b) + " (utterance " +
              train_set[order[k]].id + ")");
        epoch_loss += ug.loss;
        accumulate(batch, ug.grads);
      }
      clip_global_norm(batch, optim.clip_norm);
      sgd_step(state, batch, optim);
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    rec.heldout_frame_error = frame_error_rate(state.model, heldout_set);
    rec.heldout_id_accuracy = speaker_id_accuracy(state.model, heldout_set);
    state.history.push_back(rec);
    state.epoch = e + 1;
    if (on_epoch) on_epoch(rec);
  }
}

std::string encode_checkpoint(const TrainState &state) {
  const JointModel &m = state.model;
  const json header = {
      {"asr_dims", to_json(m.asr_dims)},
      {"sre_dims", to_json(m.sre_dims)},
      {"feedback", to_json(m.config)},
      {"asr_delay", m.asr_delay},
      {"epoch", state.epoch},
      {"optim", to_json(state.optim)},
      {"history", history_to_json(state.history)},
      {"provenance", state.provenance},
      {"parameter_count", m.params.parameter_count()},
  };
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  io::put_le(out, kCheckpointVersion);
  io::put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (auto s : fields(m.params))
    for (double v : s) io::put_f64(out, v);
  for (auto s : fields(state.velocity))
    for (double v : s) io::put_f64(out, v);
  return out;
}

TrainState decode_checkpoint(std::string_view bytes) {
  io::Reader rd(bytes, "checkpoint");
  if (rd.get_bytes(4) != std::string_view(kCheckpointMagic, 4))
    throw std::runtime_error("checkpoint: bad magic (expected \"MTRL\")");
  const auto version = rd.get_le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const auto header_len = rd.get_le<std::uint64_t>();
  if (header_len > rd.remaining())
    throw std::runtime_error("checkpoint: truncated header (declares " +
                             std::to_string(header_len) + " bytes, " +
                             std::to_string(rd.remaining()) + " available)");
  json header;
  try {
    header = json::parse(rd.get_bytes(header_len));
  } catch (const json::exception &e) {
    throw std::runtime_error("checkpoint: malformed header: " +
                             std::string(e.what()));
  }

  TrainState st;
  try {
    JointModel &m = st.model;
    m.asr_dims = cell_dims_from_json(header.at("asr_dims"));
    m.sre_dims = cell_dims_from_json(header.at("sre_dims"));
    m.config = feedback_from_json(header.at("feedback"));
    m.asr_delay = header.at("asr_delay").get<std::size_t>();
    m.params.asr = CellParams::zeros(m.asr_dims);
    m.params.sre = CellParams::zeros(m.sre_dims);
    m.params.cross = make_cross_weights(m.asr_dims, m.sre_dims, m.config);
    st.epoch = header.at("epoch").get<std::size_t>();
    st.optim = optim_config_from_json(header.at("optim"), OptimConfig{});
    for (const json &r : header.at("history"))
      st.history.push_back({r.at("epoch").get<std::size_t>(),
                            r.at("train_loss").get<double>(),
                            r.at("heldout_frame_error").get<double>(),
                            r.at("heldout_id_accuracy").get<double>()});
    st.provenance = header.at("provenance");
    if (header.at("parameter_count").get<std::size_t>() !=
        m.params.parameter_count())
      throw std::runtime_error("parameter_count disagrees with dims");
  } catch (const std::exception &e) {
    throw std::runtime_error("checkpoint: invalid header: " +
                             std::string(e.what()));
  }
  st.velocity = st.model.params.zeros_like();

  const std::size_t expect = 2 * st.model.params.parameter_count() * 8;
  if (rd.remaining() != expect)
    throw std::runtime_error("checkpoint: body has " +
                             std::to_string(rd.remaining()) +
                             " bytes, header implies " + std::to_string(expect) +
                             (rd.remaining() < expect ? " (truncated)" : ""));
  for (auto s : fields(st.model.params))
    for (double &v : s) v = rd.get_f64();
  for (auto s : fields(st.velocity))
    for (double &v : s) v = rd.get_f64();
  return st;
}

void save_checkpoint(const TrainState &state, const std::filesystem::path &path) {
  io::write_file(path.string(), encode_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path &path) {
  return decode_checkpoint(io::read_file(path.string()));
}

}  // namespace mtrl
