// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mtrl/cli.h"
#include "temp_dir.h"

using namespace mtrl;
using mtrl::testing::read_bytes;
using mtrl::testing::TempDir;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> small_data_flags(const std::string &dir) {
  return {"gen-data", "--out",  dir, "--speakers", "3",  "--phones", "4",
          "--feat-dim", "3",   "--utts", "4", "--frames", "12", "--splice", "1"};
}

std::vector<std::string> small_model_flags() {
  return {"--asr-cell", "6", "--asr-proj", "3", "--sre-cell", "6",
          "--sre-proj", "3", "--delay", "2", "--batch-size", "4"};
}

std::vector<std::string> cat(std::vector<std::string> a,
                             const std::vector<std::string> &b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::size_t count_lines(const std::string &s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gradcheck reports every configuration") {
  const Run r = run({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(count_lines(r.out) == 13);
  std::istringstream lines(r.out);
  std::string line;
  while (std::getline(lines, line)) CHECK(line.rfind("ok ", 0) == 0);

  const Run strict = run({"gradcheck", "--tolerance", "1e-30"});
  CHECK(strict.code == 1);
  CHECK(strict.err.find("tolerance") != std::string::npos);
}

TEST_CASE("bad invocations fail with a message") {
  CHECK(run({}).code == 2);
  const Run unknown = run({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.rfind("error: ", 0) == 0);
  CHECK(run({"train", "--out", "x"}).code == 2);
  CHECK(run({"gen-data", "--out", "x", "--speakers", "many"}).code == 2);

  TempDir dir("cli_bad");
  const Run missing = run({"train", "--data", (dir / "nowhere").string(), "--out",
                           (dir / "m.ckpt").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("no manifest") != std::string::npos);

  const Run bad_fb = run({"gen-data", "--out", dir.path().string()});
  CHECK(bad_fb.code == 0);
  const Run half = run({"train", "--data", dir.path().string(), "--out",
                        (dir / "m.ckpt").string(), "--sources", "r"});
  CHECK(half.code == 1);
  CHECK(count_lines(half.err) == 1);
}

TEST_CASE("help exits cleanly") {
  const Run h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("gen-data") != std::string::npos);
  const Run sub = run({"train", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--sinks") != std::string::npos);
}

TEST_CASE("gen-data is deterministic and seeded") {
  TempDir a("cli_gen_a"), b("cli_gen_b"), c("cli_gen_c");
  REQUIRE(run(small_data_flags(a.path().string())).code == 0);
  REQUIRE(run(small_data_flags(b.path().string())).code == 0);
  REQUIRE(run(cat(small_data_flags(c.path().string()), {"--seed", "2"})).code == 0);
  for (const auto &entry : std::filesystem::directory_iterator(a.path())) {
    const std::string name = entry.path().filename().string();
    CHECK(read_bytes(entry.path()) == read_bytes(b / name));
  }
  CHECK(read_bytes(a / "s000_u000.feat") !=
        read_bytes(c / "s000_u000.feat"));
  CHECK(load_dataset(a.path()).train.size() == 9);
}

TEST_CASE("train with zero epochs writes the initial model") {
  TempDir dir("cli_init");
  REQUIRE(run(small_data_flags(dir.path().string())).code == 0);
  const std::string ckpt = (dir / "m.ckpt").string();
  const Run r = run(cat({"train", "--data", dir.path().string(), "--out", ckpt,
                         "--epochs", "0", "--sources", "r", "--sinks", "g"},
                        small_model_flags()));
  REQUIRE(r.code == 0);
  const TrainState st = load_checkpoint(ckpt);

  RunConfig cfg;
  cfg.derive_seeds();
  const Dataset ds = load_dataset(dir.path());
  Rng rng{cfg.init_seed()};
  const TowerShape shape{6, 3, 3};
  const JointModel init =
      init_joint_model(asr_dims_for(ds.config, shape), sre_dims_for(ds.config, shape),
                       FeedbackConfig::parse("r", "g"), 2, rng);
  CHECK(st.model.params == init.params);
  CHECK(st.epoch == 0);
  CHECK(std::filesystem::exists(ckpt + ".history.csv"));
  CHECK(std::filesystem::exists(ckpt + ".history.csv.run.json"));
}

TEST_CASE("train twice gives byte-identical checkpoints; eval reads them") {
  TempDir dir("cli_train");
  REQUIRE(run(small_data_flags(dir.path().string())).code == 0);
  std::string bytes[2];
  for (int k = 0; k < 2; ++k) {
    const std::string ckpt = (dir / ("m" + std::to_string(k) + ".ckpt")).string();
    const Run r = run(cat({"train", "--data", dir.path().string(), "--out", ckpt,
                           "--epochs", "2", "--sources", "r", "--sinks", "g"},
                          small_model_flags()));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("epoch 2 ") != std::string::npos);
    bytes[k] = read_bytes(ckpt);
  }
  CHECK(bytes[0] == bytes[1]);

  const std::string csv = (dir / "eval.csv").string();
  const Run e = run({"eval", "--data", dir.path().string(), "--ckpt",
                     (dir / "m0.ckpt").string(), "--out", csv});
  REQUIRE(e.code == 0);
  const std::string report = read_bytes(csv);
  CHECK(report.rfind(std::string(kReportCsvHeader) + "\nr,g,", 0) == 0);
  CHECK(report.find(",7.11,0.62\n") != std::string::npos);
}

TEST_CASE("flags override the config file, which overrides defaults") {
  TempDir dir("cli_cfg");
  REQUIRE(run(small_data_flags(dir.path().string())).code == 0);
  const std::string cfg_path = (dir / "run.cfg.json").string();
  std::ofstream(cfg_path) << R"({"optim": {"epochs": 3, "batch_size": 4},
    "asr": {"cell": 6, "rec_proj": 3, "nonrec_proj": 3},
    "sre": {"cell": 6, "rec_proj": 3, "nonrec_proj": 3},
    "asr_delay": 2, "seed": 4})";
  const std::string ckpt = (dir / "m.ckpt").string();
  REQUIRE(run({"train", "--data", dir.path().string(), "--out", ckpt, "--config",
               cfg_path, "--epochs", "1"})
              .code == 0);
  const TrainState st = load_checkpoint(ckpt);
  CHECK(st.optim.epochs == 1);
  CHECK(st.optim.batch_size == 4);
  CHECK(st.model.asr_dims.cell == 6);
  CHECK(st.model.asr_delay == 2);
  RunConfig expect;
  expect.seed = 4;
  expect.derive_seeds();
  CHECK(st.optim.seed == expect.optim.seed);
  CHECK(st.provenance.at("run_config").at("seed") == 4);

  std::ofstream(cfg_path) << R"({"optim": {"seed": 9}})";
  const Run derived = run({"train", "--data", dir.path().string(), "--out", ckpt,
                           "--config", cfg_path});
  CHECK(derived.code == 1);
  CHECK(derived.err.find("derived") != std::string::npos);

  std::ofstream(cfg_path) << R"({"optimizer": {}})";
  CHECK(run({"train", "--data", dir.path().string(), "--out", ckpt, "--config",
             cfg_path})
            .code == 1);
}

}
