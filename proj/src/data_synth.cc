// SPDX-License-Identifier: Apache-2.0

#include "mtrl/data_synth.h"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "binary_io.h"
#include "mtrl/config_json.h"

namespace mtrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char *kManifestName = "manifest";
constexpr const char *kManifestFormat = "mtrl-dataset";
constexpr int kManifestVersion = 1;

std::string utt_id(std::size_t speaker, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%03zu_u%03zu", speaker, index);
  return buf;
}

std::vector<std::uint16_t> draw_labels(const SynthConfig &cfg, Rng &rng) {
  std::vector<std::uint16_t> labels;
  labels.reserve(cfg.frames_per_utt);
  const std::size_t span = cfg.segment_max - cfg.segment_min + 1;
  while (labels.size() < cfg.frames_per_utt) {
    const auto phone = static_cast<std::uint16_t>(rng.uniform_index(cfg.n_phones));
    const std::size_t len = cfg.segment_min + rng.uniform_index(span);
    for (std::size_t k = 0; k < len && labels.size() < cfg.frames_per_utt; ++k)
      labels.push_back(phone);
  }
  return labels;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_speakers == 0 || n_phones == 0 || feat_dim == 0 ||
      utts_per_speaker == 0 || frames_per_utt == 0)
    throw std::invalid_argument("synth config: counts must be positive");
  if (segment_min == 0 || segment_min > segment_max)
    throw std::invalid_argument("synth config: empty segment length range [" +
                                std::to_string(segment_min) + ", " +
                                std::to_string(segment_max) + "]");
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("synth config: noise_sigma must be >= 0");
  if (n_phones > 65536)
    throw std::invalid_argument("synth config: phone ids must fit in u16");
  if (utts_per_speaker < 2)
    throw std::invalid_argument(
        "synth config: need at least 2 utterances per speaker for a split");
}

std::size_t SynthConfig::test_per_speaker() const {
  return std::max<std::size_t>(1, utts_per_speaker / 10);
}

SynthPrototypes draw_prototypes(const SynthConfig &cfg, Rng &rng) {
  SynthPrototypes p;
  auto draw = [&](std::size_t n, std::vector<Vec> &dst) {
    dst.assign(n, Vec(cfg.feat_dim));
    for (Vec &v : dst)
      for (double &x : v) x = rng.uniform(-1.0, 1.0);
  };
  draw(cfg.n_phones, p.phone_means);
  draw(cfg.n_speakers, p.speaker_offsets);
  return p;
}

Mat splice(const Mat &raw, std::size_t radius) {
  const std::size_t T = raw.rows, d = raw.cols, width = 2 * radius + 1;
  Mat out(T, d * width);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      const auto src_t = static_cast<std::ptrdiff_t>(t + k) -
                         static_cast<std::ptrdiff_t>(radius);
      const auto clamped = static_cast<std::size_t>(
          std::clamp<std::ptrdiff_t>(src_t, 0, static_cast<std::ptrdiff_t>(T) - 1));
      std::copy_n(raw.row(clamped).begin(), d, out.row(t).begin() + k * d);
    }
  }
  return out;
}

Dataset gen_dataset(const SynthConfig &cfg) {
  cfg.validate();
  Rng rng{cfg.seed};
  const SynthPrototypes proto = draw_prototypes(cfg, rng);

  Dataset ds;
  ds.config = cfg;
  std::vector<std::vector<Utterance>> by_speaker(cfg.n_speakers);
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u) {
      Utterance utt;
      utt.id = utt_id(s, u);
      utt.speaker = s;
      utt.phone_labels = draw_labels(cfg, rng);
      Mat raw(cfg.frames_per_utt, cfg.feat_dim);
      for (std::size_t t = 0; t < raw.rows; ++t) {
        const Vec &mu = proto.phone_means[utt.phone_labels[t]];
        const Vec &off = proto.speaker_offsets[s];
        for (std::size_t k = 0; k < cfg.feat_dim; ++k)
          raw(t, k) = mu[k] + off[k] + cfg.noise_sigma * rng.normal();
      }
      utt.frames = splice(raw, cfg.splice_radius);
      by_speaker[s].push_back(std::move(utt));
    }
  }

  // Per speaker, a seeded shuffle picks the held-out tenth.
  const std::size_t n_test = cfg.test_per_speaker();
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    std::vector<std::size_t> order(cfg.utts_per_speaker);
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    for (std::size_t k = order.size() - 1; k > 0; --k)
      std::swap(order[k], order[rng.uniform_index(k + 1)]);
    std::vector<bool> is_test(cfg.utts_per_speaker, false);
    for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;
    for (std::size_t u = 0; u < cfg.utts_per_speaker; ++u)
      (is_test[u] ? ds.test : ds.train).push_back(std::move(by_speaker[s][u]));
  }
  return ds;
}

DatasetManifest make_manifest(const Dataset &ds) {
  DatasetManifest m;
  m.config = ds.config;
  m.spliced_dim = ds.config.spliced_dim();
  std::set<std::size_t> train_spk;
  for (const Utterance &u : ds.train) train_spk.insert(u.speaker);
  m.speaker_disjoint = true;
  for (const Utterance &u : ds.test)
    if (train_spk.count(u.speaker)) m.speaker_disjoint = false;
  auto add = [&](const std::vector<Utterance> &list, const char *split) {
    for (const Utterance &u : list)
      m.utterances.push_back({u.id, u.speaker, u.num_frames(), split,
                              u.id + ".feat", u.id + ".lab"});
  };
  add(ds.train, "train");
  add(ds.test, "test");
  return m;
}

void save_dataset(const Dataset &ds, const fs::path &dir) {
  fs::create_directories(dir);
  const DatasetManifest m = make_manifest(ds);

  json utts = json::array();
  for (const UtteranceRecord &r : m.utterances)
    utts.push_back({{"id", r.id},
                    {"speaker", r.speaker},
                    {"frames", r.num_frames},
                    {"split", r.split},
                    {"feat_file", r.feat_file},
                    {"lab_file", r.lab_file}});
  const json manifest = {{"format", kManifestFormat},
                         {"version", kManifestVersion},
                         {"config", to_json(m.config)},
                         {"spliced_dim", m.spliced_dim},
                         {"speaker_disjoint", m.speaker_disjoint},
                         {"utterances", utts}};
  io::write_file((dir / kManifestName).string(), manifest.dump(2) + "\n");

  auto write_utt = [&](const Utterance &u) {
    if (u.frames.cols != m.spliced_dim || u.phone_labels.size() != u.frames.rows)
      throw std::invalid_argument("save_dataset: utterance " + u.id +
                                  " has inconsistent shape");
    std::string feat;
    feat.reserve(u.frames.data.size() * 8);
    for (double v : u.frames.data) io::put_f64(feat, v);
    io::write_file((dir / (u.id + ".feat")).string(), feat);
    std::string lab;
    for (std::uint16_t l : u.phone_labels) io::put_le(lab, l);
    io::write_file((dir / (u.id + ".lab")).string(), lab);
  };
  for (const Utterance &u : ds.train) write_utt(u);
  for (const Utterance &u : ds.test) write_utt(u);
}

Dataset load_dataset(const fs::path &dir) {
  const fs::path mpath = dir / kManifestName;
  if (!fs::exists(mpath))
    throw std::runtime_error("load_dataset: no manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(io::read_file(mpath.string()));
  } catch (const json::exception &e) {
    throw std::runtime_error("load_dataset: malformed manifest: " +
                             std::string(e.what()));
  }
  if (manifest.value("format", "") != kManifestFormat ||
      manifest.value("version", 0) != kManifestVersion)
    throw std::runtime_error("load_dataset: " + mpath.string() +
                             " is not an mtrl-dataset v1 manifest");

  Dataset ds;
  ds.config = synth_config_from_json(manifest.at("config"), SynthConfig{});
  ds.config.validate();
  const std::size_t dim = manifest.at("spliced_dim").get<std::size_t>();
  if (dim != ds.config.spliced_dim())
    throw std::runtime_error("load_dataset: spliced_dim " + std::to_string(dim) +
                             " disagrees with config");

  std::set<std::string> seen;
  for (const json &r : manifest.at("utterances")) {
    Utterance u;
    u.id = r.at("id").get<std::string>();
    if (!seen.insert(u.id).second)
      throw std::runtime_error("load_dataset: duplicate utterance id " + u.id);
    u.speaker = r.at("speaker").get<std::size_t>();
    if (u.speaker >= ds.config.n_speakers)
      throw std::runtime_error("load_dataset: utterance " + u.id +
                               " has speaker " + std::to_string(u.speaker) +
                               " out of range");
    const auto T = r.at("frames").get<std::size_t>();
    const auto split = r.at("split").get<std::string>();
    if (split != "train" && split != "test")
      throw std::runtime_error("load_dataset: utterance " + u.id +
                               " has unknown split '" + split + "'");

    const fs::path feat_path = dir / r.at("feat_file").get<std::string>();
    const fs::path lab_path = dir / r.at("lab_file").get<std::string>();
    if (!fs::exists(feat_path) || !fs::exists(lab_path))
      throw std::runtime_error("load_dataset: missing data file for utterance " +
                               u.id);
    const std::string feat = io::read_file(feat_path.string());
    const std::string lab = io::read_file(lab_path.string());
    if (feat.size() != T * dim * 8)
      throw std::runtime_error(
          "load_dataset: utterance " + u.id + " feature file has " +
          std::to_string(feat.size()) + " bytes, manifest implies " +
          std::to_string(T * dim * 8));
    if (lab.size() != T * 2)
      throw std::runtime_error(
          "load_dataset: utterance " + u.id + " label file has " +
          std::to_string(lab.size()) + " bytes, manifest implies " +
          std::to_string(T * 2));

    u.frames = Mat(T, dim);
    io::Reader fr(feat, u.id + ".feat");
    for (double &v : u.frames.data) v = fr.get_f64();
    io::Reader lr(lab, u.id + ".lab");
    u.phone_labels.resize(T);
    for (auto &l : u.phone_labels) {
      l = lr.get_le<std::uint16_t>();
      if (l >= ds.config.n_phones)
        throw std::runtime_error("load_dataset: utterance " + u.id +
                                 " has phone label out of range");
    }
    (split == "train" ? ds.train : ds.test).push_back(std::move(u));
  }
  return ds;
}

std::vector<Trial> build_trials(const std::vector<Utterance> &test) {
  std::set<std::size_t> speakers;
  for (const Utterance &u : test) speakers.insert(u.speaker);
  if (speakers.size() < 2)
    throw std::invalid_argument("build_trials: need at least 2 speakers in the "
                                "test set, found " +
                                std::to_string(speakers.size()));
  std::vector<Trial> trials;
  trials.reserve(speakers.size() * test.size());
  for (std::size_t spk : speakers)
    for (std::size_t u = 0; u < test.size(); ++u)
      trials.push_back({spk, u, test[u].speaker == spk});
  return trials;
}

}  // namespace mtrl
