// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "mtrl/ablation.h"
#include "mtrl/gradcheck.h"
#include "mtrl/multitask_net.h"
#include "oracles.h"

using namespace mtrl;

namespace {

const CellDims kAsr{4, 6, 3, 3, 3};
const CellDims kSre{4, 6, 3, 3, 2};

JointModel random_model(const FeedbackConfig &cfg, std::uint64_t seed,
                        std::size_t delay = 1) {
  Rng rng{seed};
  JointModel m = init_joint_model(kAsr, kSre, cfg, delay, rng);
  oracle::randomize(m.params, rng, 0.7);
  return m;
}

}  // namespace

TEST_SUITE("multitask_net") {

TEST_CASE("cross matrix allocation follows the config") {
  Rng rng{1};
  CHECK(init_joint_model(kAsr, kSre, {}, 0, rng).params.cross.empty());
  const JointModel rg =
      init_joint_model(kAsr, kSre, FeedbackConfig::parse("r", "g"), 0, rng);
  CHECK(rg.params.cross.size() == 2);
  for (const auto &[key, mat] : rg.params.cross) {
    CHECK(key.sink == Sink::kG);
    CHECK(key.source == Source::kR);
    CHECK(mat.rows == 6);
    CHECK(mat.cols == 3);
    for (double v : mat.data) CHECK(v == 0.0);
  }
  CHECK(init_joint_model(kAsr, kSre, FeedbackConfig::parse("r+p", "i+f+o+g"), 0,
                         rng)
            .params.cross.size() == 16);
}

TEST_CASE("cross matrix shapes are receiver cell by sender projection") {
  Rng rng{1};
  const CellDims asr{4, 7, 2, 5, 3}, sre{4, 9, 3, 4, 2};
  const JointModel m =
      init_joint_model(asr, sre, FeedbackConfig::parse("r+p", "o"), 0, rng);
  CHECK(m.params.cross.at({Direction::kSreToAsr, Sink::kO, Source::kR}).rows == 7);
  CHECK(m.params.cross.at({Direction::kSreToAsr, Sink::kO, Source::kR}).cols == 3);
  CHECK(m.params.cross.at({Direction::kSreToAsr, Sink::kO, Source::kP}).cols == 4);
  CHECK(m.params.cross.at({Direction::kAsrToSre, Sink::kO, Source::kR}).rows == 9);
  CHECK(m.params.cross.at({Direction::kAsrToSre, Sink::kO, Source::kR}).cols == 2);
  CHECK(m.params.cross.at({Direction::kAsrToSre, Sink::kO, Source::kP}).cols == 5);
}

TEST_CASE("mirrored towers give a mirrored cross set") {
  for (const AblationRow &row : published_grid()) {
    const auto cw = make_cross_weights(kAsr, kSre, row.config);
    const auto swapped = make_cross_weights(kSre, kAsr, row.config);
    CHECK(cw.size() == swapped.size());
    for (const auto &[key, mat] : cw) {
      CrossKey mirror = key;
      mirror.direction = key.direction == Direction::kSreToAsr
                             ? Direction::kAsrToSre
                             : Direction::kSreToAsr;
      REQUIRE(swapped.count(mirror) == 1);
      CHECK(swapped.at(mirror).rows == mat.rows);
      CHECK(swapped.at(mirror).cols == mat.cols);
    }
  }
}

TEST_CASE("parameter count is towers plus cross matrices") {
  for (const AblationRow &row : published_grid()) {
    const JointModel m = random_model(row.config, 3);
    std::size_t cross = 0;
    for (const auto &[key, mat] : m.params.cross) cross += mat.rows * mat.cols;
    CHECK(m.params.parameter_count() ==
          m.params.asr.parameter_count() + m.params.sre.parameter_count() + cross);
  }
  CHECK(random_model({}, 1).params.parameter_count() == 527);
  CHECK(random_model(FeedbackConfig::parse("r", "g"), 1).params.parameter_count() ==
        563);
}

TEST_CASE("feedback config labels and validation") {
  const FeedbackConfig c = FeedbackConfig::parse("r+p", "i+f+o+g");
  CHECK(c.sources_label() == "r+p");
  CHECK(c.sinks_label() == "i+f+o+g");
  CHECK(FeedbackConfig{}.sources_label() == "none");
  CHECK(FeedbackConfig{}.is_baseline());
  CHECK_THROWS_AS(FeedbackConfig::parse("r", "none"), std::invalid_argument);
  CHECK_THROWS_AS(FeedbackConfig::parse("none", "g"), std::invalid_argument);
  CHECK_THROWS_AS(FeedbackConfig::parse("q", "g"), std::invalid_argument);
}

TEST_CASE("zero cross matrices reproduce independent towers") {
  for (const AblationRow &row : published_grid()) {
    JointModel m = random_model(row.config, 5);
    for (auto &[key, mat] : m.params.cross) mat.data.assign(mat.data.size(), 0.0);
    Rng rng{6};
    const Mat frames = oracle::random_frames(7, 4, rng);
    const SequenceOutput out = forward_sequence(m, frames);
    const oracle::TowerOutputs ref = oracle::independent_towers(m, frames);
    for (std::size_t t = 0; t < 7; ++t) {
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::abs(out.asr_logits[t][k] - ref.asr[t][k]) <= 1e-12);
      for (std::size_t k = 0; k < 2; ++k)
        CHECK(std::abs(out.sre_logits[t][k] - ref.sre[t][k]) <= 1e-12);
    }
  }
}

TEST_CASE("one-frame ASR output ignores every SRE parameter") {
  JointModel m = random_model(FeedbackConfig::parse("r+p", "i+f+o+g"), 7);
  Rng rng{8};
  const Mat frame = oracle::random_frames(1, 4, rng);
  const auto before = forward_sequence(m, frame);
  oracle::randomize(std::span<double>(m.params.sre.w_cx.data), rng, 5.0);
  oracle::randomize(std::span<double>(m.params.sre.w_rm.data), rng, 5.0);
  for (auto &[key, mat] : m.params.cross)
    if (key.direction == Direction::kSreToAsr) oracle::randomize(mat.data, rng, 5.0);
  const auto after = forward_sequence(m, frame);
  CHECK(before.asr_logits == after.asr_logits);
  CHECK(before.sre_logits != after.sre_logits);
}

TEST_CASE("perturbing frame t leaves earlier outputs untouched") {
  const JointModel m = random_model(FeedbackConfig::parse("r", "i+f+o+g"), 9);
  Rng rng{10};
  const Mat frames = oracle::random_frames(6, 4, rng);
  const auto base = forward_sequence(m, frames);
  for (std::size_t t = 0; t < 6; ++t) {
    Mat moved = frames;
    for (double &v : moved.row(t)) v += 0.5;
    const auto out = forward_sequence(m, moved);
    for (std::size_t s = 0; s < t; ++s) {
      CHECK(out.asr_logits[s] == base.asr_logits[s]);
      CHECK(out.sre_logits[s] == base.sre_logits[s]);
    }
    CHECK(out.asr_logits[t] != base.asr_logits[t]);
  }
}

TEST_CASE("cross information arrives exactly one step late") {
  // Only the SRE->ASR link is live; ASR output at step 1 must change when the
  // SRE tower's step-0 projection changes, and not at step 0.
  JointModel m = random_model(FeedbackConfig::parse("r", "g"), 12);
  Rng rng{13};
  const Mat frames = oracle::random_frames(3, 4, rng);
  const auto base = forward_sequence(m, frames);
  for (double &v : m.params.sre.w_rm.data) v *= -1.0;
  const auto out = forward_sequence(m, frames);
  CHECK(out.asr_logits[0] == base.asr_logits[0]);
  CHECK(out.asr_logits[1] != base.asr_logits[1]);
}

TEST_CASE("joint_loss masking and values") {
  std::vector<Vec> two{Vec{0, 0}};
  const std::vector<std::uint16_t> lab{1};
  const JointLoss l = joint_loss(two, two, lab, 0, 0);
  CHECK(l.loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

  // delay 2, 5 frames: the ASR loss averages frames 2..4 only.
  Rng rng{14};
  std::vector<Vec> asr(5, Vec(3)), sre(5, Vec(2));
  for (auto &v : asr) oracle::randomize(v, rng, 2.0);
  for (auto &v : sre) oracle::randomize(v, rng, 2.0);
  const std::vector<std::uint16_t> phones{0, 2, 1, 1, 0};
  const JointLoss d2 = joint_loss(asr, sre, phones, 1, 2);
  double expect = 0.0;
  for (std::size_t t = 2; t < 5; ++t)
    expect += softmax_xent(asr[t], phones[t - 2]).loss;
  CHECK(d2.asr_loss == doctest::Approx(expect / 3.0).epsilon(1e-14));
  CHECK(d2.d_asr_logits[0] == Vec(3, 0.0));
  CHECK(d2.d_asr_logits[1] == Vec(3, 0.0));

  CHECK_THROWS_AS(joint_loss(asr, sre, phones, 1, 5), std::invalid_argument);
  CHECK_THROWS_AS(joint_loss(asr, sre, std::vector<std::uint16_t>{0, 1}, 1, 0),
                  std::invalid_argument);
}

TEST_CASE("joint_loss gradient matches finite differences") {
  Rng rng{15};
  std::vector<Vec> asr(6, Vec(3)), sre(6, Vec(2));
  for (auto &v : asr) oracle::randomize(v, rng, 2.0);
  for (auto &v : sre) oracle::randomize(v, rng, 2.0);
  const std::vector<std::uint16_t> phones{0, 2, 1, 1, 0, 2};
  const JointLoss l = joint_loss(asr, sre, phones, 1, 1);
  auto loss = [&] { return joint_loss(asr, sre, phones, 1, 1).loss; };
  for (std::size_t t = 0; t < 6; ++t) {
    const auto na = oracle::finite_differences(asr[t], loss, 1e-5);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(oracle::rel_error(l.d_asr_logits[t][k], na[k]) < 1e-6);
    const auto ns = oracle::finite_differences(sre[t], loss, 1e-5);
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(oracle::rel_error(l.d_sre_logits[t][k], ns[k]) < 1e-6);
  }
}

TEST_CASE("zero output gradients give zero parameter gradients") {
  const JointModel m = random_model(FeedbackConfig::parse("r+p", "g"), 16);
  Rng rng{17};
  const Mat frames = oracle::random_frames(4, 4, rng);
  const auto out = forward_sequence(m, frames);
  const std::vector<Vec> za(4, Vec(3, 0.0)), zs(4, Vec(2, 0.0));
  CHECK(backward_sequence(m, out.cache, za, zs) == m.params.zeros_like());
}

// Full-sequence oracle on the desk instance: T=6, 3 phones, 2 speakers.
TEST_CASE("sequence gradients match finite differences ({r}->{g})") {
  JointModel m = random_model(FeedbackConfig::parse("r", "g"), 18, 1);
  Rng rng{19};
  const Mat frames = oracle::random_frames(6, 4, rng);
  const std::vector<std::uint16_t> phones{0, 1, 2, 2, 1, 0};
  auto loss = [&] {
    const auto o = forward_sequence(m, frames);
    return joint_loss(o.asr_logits, o.sre_logits, phones, 1, 1).loss;
  };
  const auto out = forward_sequence(m, frames);
  const JointLoss l = joint_loss(out.asr_logits, out.sre_logits, phones, 1, 1);
  const JointParams g =
      backward_sequence(m, out.cache, l.d_asr_logits, l.d_sre_logits);

  std::vector<std::span<const double>> analytic;
  g.visit([&](const std::string &, std::span<const double> s) { analytic.push_back(s); });
  std::vector<std::span<double>> live;
  m.params.visit([&](const std::string &, std::span<double> s) { live.push_back(s); });
  double worst = 0.0;
  for (std::size_t f = 0; f < live.size(); ++f) {
    const auto num = oracle::finite_differences(live[f], loss, 1e-4);
    for (std::size_t j = 0; j < num.size(); ++j)
      worst = std::max(worst, oracle::rel_error(analytic[f][j], num[j]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradcheck passes for every published configuration") {
  for (const AblationRow &row : published_grid()) {
    const GradcheckResult r = gradcheck_config({}, row.config, 31);
    INFO(row.config.sources_label(), " -> ", row.config.sinks_label(), " worst ",
         r.worst_param);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.checked == random_model(row.config, 1).params.parameter_count());
  }
}

TEST_CASE("zero-valued cross matrices still receive gradient") {
  Rng rng{20};
  JointModel m = init_joint_model(kAsr, kSre, FeedbackConfig::parse("r", "g"), 1, rng);
  const Mat frames = oracle::random_frames(6, 4, rng);
  const auto out = forward_sequence(m, frames);
  const JointLoss l = joint_loss(out.asr_logits, out.sre_logits,
                                 std::vector<std::uint16_t>{0, 1, 2, 0, 1, 2}, 1, 1);
  const JointParams g = backward_sequence(m, out.cache, l.d_asr_logits, l.d_sre_logits);
  double biggest = 0.0;
  for (const auto &[key, mat] : g.cross)
    for (double v : mat.data) biggest = std::max(biggest, std::abs(v));
  CHECK(biggest > 1e-8);
}

TEST_CASE("mismatched inputs are rejected") {
  const JointModel m = random_model({}, 21);
  CHECK_THROWS_AS(forward_sequence(m, Mat(0, 4)), std::invalid_argument);
  CHECK_THROWS_AS(forward_sequence(m, Mat(3, 5)), std::invalid_argument);
  const JointModel other = random_model(FeedbackConfig::parse("r", "g"), 22);
  JointModel wide = other;
  wide.asr_dims.cell = 7;
  wide.params.asr = CellParams::zeros(wide.asr_dims);
  Rng rng{1};
  const auto out = forward_sequence(m, oracle::random_frames(2, 4, rng));
  const std::vector<Vec> za(2, Vec(3, 0.0)), zs(2, Vec(2, 0.0));
  CHECK_THROWS_AS(backward_sequence(wide, out.cache, za, zs), std::invalid_argument);
  CHECK_THROWS_AS(init_joint_model(kAsr, {5, 6, 3, 3, 2}, {}, 0, rng),
                  std::invalid_argument);
}

}
