// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch SGD with momentum and global-norm clipping over whole
// utterances, plus the binary checkpoint format.

#ifndef MTRL_TRAINER_H_
#define MTRL_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "mtrl/data_synth.h"
#include "mtrl/multitask_net.h"

namespace mtrl {

struct OptimConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double clip_norm = 5.0;
  std::size_t epochs = 15;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const OptimConfig &) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean utterance loss during the epoch
  double heldout_frame_error = 0.0;
  double heldout_id_accuracy = 0.0;

  bool operator==(const EpochRecord &) const = default;
};

struct TrainState {
  JointModel model;
  JointParams velocity;
  OptimConfig optim;
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;
  /// Free-form run description stored in the checkpoint header.
  nlohmann::json provenance = nlohmann::json::object();
};

TrainState make_train_state(JointModel model, const OptimConfig &optim);

double global_norm(const JointParams &grads);

/// Scales every entry by clip_norm / norm when norm > clip_norm. Returns the
/// scale applied (1 when unchanged).
double clip_global_norm(JointParams &grads, double clip_norm);

/// velocity = momentum * velocity + grads; params -= lr * velocity.
void sgd_step(TrainState &state, const JointParams &grads,
              const OptimConfig &optim);

struct UtteranceGradient {
  double loss = 0.0;
  JointParams grads;
};

/// Forward, joint loss and BPTT for one utterance.
UtteranceGradient utterance_gradient(const JointModel &model,
                                     const Utterance &utt);

/// Mean joint loss over a set of utterances.
double mean_loss(const JointModel &model, const std::vector<Utterance> &utts);

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Runs state.optim.epochs further epochs. Each epoch shuffles the training
/// order with a seed derived from (optim.seed, epoch), sums per-utterance
/// gradients of each batch in order, clips, and steps; then evaluates on the
/// held-out set. Throws std::runtime_error naming the epoch and batch on a
/// non-finite loss.
void train(TrainState &state, const std::vector<Utterance> &train_set,
           const std::vector<Utterance> &heldout_set,
           const EpochCallback &on_epoch = {});

inline constexpr char kCheckpointMagic[4] = {'M', 'T', 'R', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "MTRL", u32 version, u64 header length, JSON header, then parameters and
/// velocities as little-endian f64 in JointParams::visit order.
std::string encode_checkpoint(const TrainState &state);
TrainState decode_checkpoint(std::string_view bytes);

void save_checkpoint(const TrainState &state, const std::filesystem::path &path);
TrainState load_checkpoint(const std::filesystem::path &path);

}  // namespace mtrl

#endif  // MTRL_TRAINER_H_
