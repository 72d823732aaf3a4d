// SPDX-License-Identifier: Apache-2.0
//
// Synthetic joint corpus: each raw frame is a phone prototype plus a speaker
// offset plus Gaussian noise, so phone and speaker information are additively
// mixed in the same features. Frames are spliced with a symmetric context
// window before use.

#ifndef MTRL_DATA_SYNTH_H_
#define MTRL_DATA_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtrl/numerics.h"

namespace mtrl {

struct SynthConfig {
  std::size_t n_speakers = 20;
  std::size_t n_phones = 10;
  std::size_t feat_dim = 20;
  std::size_t utts_per_speaker = 30;
  std::size_t frames_per_utt = 60;
  std::size_t segment_min = 4;
  std::size_t segment_max = 8;
  double noise_sigma = 0.3;
  std::size_t splice_radius = 2;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t spliced_dim() const { return feat_dim * (2 * splice_radius + 1); }
  /// Held-out utterances per speaker: a tenth, at least one.
  std::size_t test_per_speaker() const;

  bool operator==(const SynthConfig &) const = default;
};

struct Utterance {
  std::string id;
  std::size_t speaker = 0;
  Mat frames;  // T x spliced_dim
  std::vector<std::uint16_t> phone_labels;

  std::size_t num_frames() const { return frames.rows; }
  bool operator==(const Utterance &) const = default;
};

struct Dataset {
  SynthConfig config;
  std::vector<Utterance> train;
  std::vector<Utterance> test;

  bool operator==(const Dataset &) const = default;
};

/// Generative prototypes; drawn first from Rng{cfg.seed}, phones then
/// speakers, every entry uniform in [-1, 1).
struct SynthPrototypes {
  std::vector<Vec> phone_means;
  std::vector<Vec> speaker_offsets;
};

SynthPrototypes draw_prototypes(const SynthConfig &cfg, Rng &rng);

/// Concatenates frames t-radius..t+radius, repeating the boundary frames.
Mat splice(const Mat &raw, std::size_t radius);

Dataset gen_dataset(const SynthConfig &cfg);

struct UtteranceRecord {
  std::string id;
  std::size_t speaker = 0;
  std::size_t num_frames = 0;
  std::string split;  // "train" or "test"
  std::string feat_file;
  std::string lab_file;
};

struct DatasetManifest {
  SynthConfig config;
  std::size_t spliced_dim = 0;
  bool speaker_disjoint = false;
  std::vector<UtteranceRecord> utterances;
};

DatasetManifest make_manifest(const Dataset &ds);

/// Writes `manifest` (JSON) plus <id>.feat (little-endian f64, row-major) and
/// <id>.lab (little-endian u16) per utterance.
void save_dataset(const Dataset &ds, const std::filesystem::path &dir);
Dataset load_dataset(const std::filesystem::path &dir);

struct Trial {
  std::size_t enrolled_speaker = 0;
  std::size_t utterance = 0;  // index into the test list
  bool is_target = false;
};

/// Every speaker present in `test` against every test utterance.
std::vector<Trial> build_trials(const std::vector<Utterance> &test);

}  // namespace mtrl

#endif  // MTRL_DATA_SYNTH_H_
