// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <map>

#include <json.hpp>

#include "mtrl/data_synth.h"
#include "temp_dir.h"

using namespace mtrl;
using mtrl::testing::TempDir;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_speakers = 3;
  c.n_phones = 4;
  c.feat_dim = 3;
  c.utts_per_speaker = 4;
  c.frames_per_utt = 9;
  c.seed = 11;
  return c;
}

std::string message_of(const std::function<void()> &f) {
  try {
    f();
  } catch (const std::exception &e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("data_synth") {

TEST_CASE("noise-free frames equal phone mean plus speaker offset") {
  SynthConfig c = small_config();
  c.noise_sigma = 0.0;
  Rng rng{c.seed};
  const SynthPrototypes proto = draw_prototypes(c, rng);
  const Dataset ds = gen_dataset(c);
  const std::size_t centre = c.splice_radius * c.feat_dim;
  for (const auto *split : {&ds.train, &ds.test})
    for (const Utterance &u : *split)
      for (std::size_t t = 0; t < u.num_frames(); ++t)
        for (std::size_t k = 0; k < c.feat_dim; ++k)
          CHECK(u.frames(t, centre + k) ==
                proto.phone_means[u.phone_labels[t]][k] +
                    proto.speaker_offsets[u.speaker][k]);
}

TEST_CASE("prototypes are uniform in [-1, 1)") {
  const SynthConfig c;
  Rng rng{c.seed};
  const SynthPrototypes p = draw_prototypes(c, rng);
  CHECK(p.phone_means.size() == c.n_phones);
  CHECK(p.speaker_offsets.size() == c.n_speakers);
  for (const auto *set : {&p.phone_means, &p.speaker_offsets})
    for (const Vec &v : *set) {
      CHECK(v.size() == c.feat_dim);
      for (double x : v) {
        CHECK(x >= -1.0);
        CHECK(x < 1.0);
      }
    }
}

TEST_CASE("generation is deterministic in the seed") {
  const SynthConfig c = small_config();
  CHECK(gen_dataset(c) == gen_dataset(c));
  SynthConfig other = c;
  other.seed = 12;
  CHECK(!(gen_dataset(c) == gen_dataset(other)));
}

TEST_CASE("default corpus shape") {
  const Dataset ds = gen_dataset(SynthConfig{});
  CHECK(ds.train.size() == 540);
  CHECK(ds.test.size() == 60);
  CHECK(ds.config.spliced_dim() == 100);
  std::map<std::size_t, std::size_t> test_per_speaker;
  for (const Utterance &u : ds.test) ++test_per_speaker[u.speaker];
  CHECK(test_per_speaker.size() == 20);
  for (const auto &[s, n] : test_per_speaker) CHECK(n == 3);
  for (const Utterance &u : ds.train) {
    CHECK(u.num_frames() == 60);
    CHECK(u.frames.cols == 100);
    CHECK(u.phone_labels.size() == 60);
    for (auto l : u.phone_labels) CHECK(l < 10);
  }
}

TEST_CASE("phone labels come in segments of the configured length") {
  SynthConfig c = small_config();
  c.frames_per_utt = 200;
  const Dataset ds = gen_dataset(c);
  for (const Utterance &u : ds.train) {
    // Interior runs span one or more whole segments, so every run of equal
    // labels except the last is at least segment_min long.
    std::size_t run = 1;
    for (std::size_t t = 1; t < u.num_frames(); ++t) {
      if (u.phone_labels[t] == u.phone_labels[t - 1]) {
        ++run;
      } else {
        CHECK(run >= c.segment_min);
        run = 1;
      }
    }
  }
}

TEST_CASE("splice preserves length and repeats the boundary frames") {
  Mat raw(3, 2);
  raw.data = {1, 2, 3, 4, 5, 6};
  const Mat s = splice(raw, 1);
  CHECK(s.rows == 3);
  CHECK(s.cols == 6);
  CHECK(std::vector<double>(s.row(0).begin(), s.row(0).end()) ==
        std::vector<double>{1, 2, 1, 2, 3, 4});
  CHECK(std::vector<double>(s.row(2).begin(), s.row(2).end()) ==
        std::vector<double>{3, 4, 5, 6, 5, 6});
  const Mat wide = splice(raw, 4);
  CHECK(wide.cols == 18);
  CHECK(wide(0, 0) == 1.0);
  CHECK(wide(2, 17) == 6.0);
  CHECK(splice(raw, 0) == raw);
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig c = small_config();
  c.segment_min = 5;
  c.segment_max = 4;
  CHECK_THROWS_AS(gen_dataset(c), std::invalid_argument);
  c = small_config();
  c.n_speakers = 0;
  CHECK_THROWS_AS(gen_dataset(c), std::invalid_argument);
  c = small_config();
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(gen_dataset(c), std::invalid_argument);
  c = small_config();
  c.utts_per_speaker = 1;
  CHECK_THROWS_AS(gen_dataset(c), std::invalid_argument);
}

TEST_CASE("save and load round-trip exactly") {
  const Dataset ds = gen_dataset(small_config());
  TempDir dir("synth_rt");
  save_dataset(ds, dir.path());
  CHECK(load_dataset(dir.path()) == ds);
}

TEST_CASE("truncated feature file is rejected naming the utterance") {
  const Dataset ds = gen_dataset(small_config());
  TempDir dir("synth_trunc");
  save_dataset(ds, dir.path());
  const std::string id = ds.train[1].id;
  std::filesystem::resize_file(dir / (id + ".feat"),
                               std::filesystem::file_size(dir / (id + ".feat")) - 8);
  const std::string msg = message_of([&] { load_dataset(dir.path()); });
  CHECK(msg.find(id) != std::string::npos);
}

TEST_CASE("manifest frame count disagreeing with the files is rejected") {
  const Dataset ds = gen_dataset(small_config());
  TempDir dir("synth_t");
  save_dataset(ds, dir.path());
  nlohmann::json m;
  std::ifstream(dir / "manifest") >> m;
  m["utterances"][0]["frames"] = 10;
  std::ofstream(dir / "manifest") << m.dump();
  const std::string msg = message_of([&] { load_dataset(dir.path()); });
  CHECK(msg.find(m["utterances"][0]["id"].get<std::string>()) != std::string::npos);
}

TEST_CASE("missing files and foreign manifests are rejected") {
  const Dataset ds = gen_dataset(small_config());
  TempDir dir("synth_missing");
  CHECK_THROWS_AS(load_dataset(dir.path()), std::runtime_error);
  save_dataset(ds, dir.path());
  std::filesystem::remove(dir / (ds.test[0].id + ".lab"));
  const std::string msg = message_of([&] { load_dataset(dir.path()); });
  CHECK(msg.find(ds.test[0].id) != std::string::npos);

  std::ofstream(dir / "manifest") << R"({"format": "something-else", "version": 1})";
  CHECK_THROWS_AS(load_dataset(dir.path()), std::runtime_error);
  std::ofstream(dir / "manifest") << "{not json";
  CHECK_THROWS_AS(load_dataset(dir.path()), std::runtime_error);
}

TEST_CASE("out-of-range label is rejected") {
  const Dataset ds = gen_dataset(small_config());
  TempDir dir("synth_label");
  save_dataset(ds, dir.path());
  std::fstream f(dir / (ds.train[0].id + ".lab"),
                 std::ios::in | std::ios::out | std::ios::binary);
  const char bad[2] = {static_cast<char>(0xff), 0};
  f.write(bad, 2);
  f.close();
  CHECK_THROWS_AS(load_dataset(dir.path()), std::runtime_error);
}

TEST_CASE("manifest records the split and disjointness") {
  const Dataset ds = gen_dataset(small_config());
  const DatasetManifest m = make_manifest(ds);
  CHECK(m.utterances.size() == ds.train.size() + ds.test.size());
  CHECK(m.spliced_dim == 15);
  CHECK_FALSE(m.speaker_disjoint);
  std::size_t n_test = 0;
  for (const UtteranceRecord &r : m.utterances) n_test += r.split == "test";
  CHECK(n_test == ds.test.size());
}

TEST_CASE("trial list covers every speaker against every test utterance") {
  std::vector<Utterance> test;
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t u = 0; u < 3; ++u) test.push_back({"x", s, Mat(1, 1), {0}});
  const auto trials = build_trials(test);
  CHECK(trials.size() == 12);
  std::size_t targets = 0;
  for (const Trial &t : trials) {
    targets += t.is_target;
    CHECK(t.is_target == (test[t.utterance].speaker == t.enrolled_speaker));
  }
  CHECK(targets == 6);

  const auto full = build_trials(gen_dataset(SynthConfig{}).test);
  std::size_t tar = 0;
  for (const Trial &t : full) tar += t.is_target;
  CHECK(tar == 60);
  CHECK(full.size() - tar == 1140);

  test.resize(3);
  CHECK_THROWS_AS(build_trials(test), std::invalid_argument);
}

}
