// SPDX-License-Identifier: Apache-2.0

#include "mtrl/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "binary_io.h"
#include "mtrl/config_json.h"
#include "mtrl/gradcheck.h"
#include "mtrl/metrics.h"

namespace mtrl {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kDataPurpose = 1;
constexpr std::uint64_t kInitPurpose = 2;
constexpr std::uint64_t kOptimPurpose = 3;

json shape_to_json(const TowerShape &s) {
  return {{"cell", s.cell},
          {"rec_proj", s.rec_proj},
          {"nonrec_proj", s.nonrec_proj}};
}

TowerShape shape_from_json(const json &j, TowerShape s) {
  for (const auto &[k, v] : j.items())
    if (k != "cell" && k != "rec_proj" && k != "nonrec_proj")
      throw std::invalid_argument("tower shape: unknown key '" + k + "'");
  if (j.contains("cell")) j.at("cell").get_to(s.cell);
  if (j.contains("rec_proj")) j.at("rec_proj").get_to(s.rec_proj);
  if (j.contains("nonrec_proj")) j.at("nonrec_proj").get_to(s.nonrec_proj);
  return s;
}

// Flags shared by the subcommands that build a RunConfig.
struct Overrides {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, delay;
  std::optional<double> lr, momentum, clip;
  std::optional<std::string> sources, sinks;
  std::optional<std::size_t> asr_cell, asr_proj, sre_cell, sre_proj;
  // gen-data only
  std::optional<std::size_t> speakers, phones, feat_dim, utts, frames, radius;
  std::optional<double> noise;
};

void add_model_flags(CLI::App *cmd, Overrides &o) {
  cmd->add_option("--config", o.config_file, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "top-level seed");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--lr", o.lr, "learning rate");
  cmd->add_option("--momentum", o.momentum);
  cmd->add_option("--clip", o.clip, "global gradient-norm clip");
  cmd->add_option("--delay", o.delay, "ASR target delay in frames");
  cmd->add_option("--sources", o.sources, "feedback sources, e.g. r or r+p");
  cmd->add_option("--sinks", o.sinks, "feedback sinks, e.g. g or i+f+o+g");
  cmd->add_option("--asr-cell", o.asr_cell);
  cmd->add_option("--asr-proj", o.asr_proj, "both ASR projection sizes");
  cmd->add_option("--sre-cell", o.sre_cell);
  cmd->add_option("--sre-proj", o.sre_proj, "both SRE projection sizes");
}

RunConfig resolve(const Overrides &o) {
  RunConfig cfg;
  if (!o.config_file.empty()) {
    json j;
    try {
      j = json::parse(io::read_file(o.config_file));
    } catch (const json::exception &e) {
      throw std::runtime_error("config " + o.config_file + ": " + e.what());
    }
    cfg = run_config_from_json(j, cfg);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.optim.epochs = *o.epochs;
  if (o.batch_size) cfg.optim.batch_size = *o.batch_size;
  if (o.lr) cfg.optim.learning_rate = *o.lr;
  if (o.momentum) cfg.optim.momentum = *o.momentum;
  if (o.clip) cfg.optim.clip_norm = *o.clip;
  if (o.delay) cfg.asr_delay = *o.delay;
  if (o.sources || o.sinks)
    cfg.feedback = FeedbackConfig::parse(o.sources.value_or(cfg.feedback.sources_label()),
                                         o.sinks.value_or(cfg.feedback.sinks_label()));
  if (o.asr_cell) cfg.asr.cell = *o.asr_cell;
  if (o.asr_proj) cfg.asr.rec_proj = cfg.asr.nonrec_proj = *o.asr_proj;
  if (o.sre_cell) cfg.sre.cell = *o.sre_cell;
  if (o.sre_proj) cfg.sre.rec_proj = cfg.sre.nonrec_proj = *o.sre_proj;
  if (o.speakers) cfg.synth.n_speakers = *o.speakers;
  if (o.phones) cfg.synth.n_phones = *o.phones;
  if (o.feat_dim) cfg.synth.feat_dim = *o.feat_dim;
  if (o.utts) cfg.synth.utts_per_speaker = *o.utts;
  if (o.frames) cfg.synth.frames_per_utt = *o.frames;
  if (o.radius) cfg.synth.splice_radius = *o.radius;
  if (o.noise) cfg.synth.noise_sigma = *o.noise;
  cfg.derive_seeds();
  cfg.synth.validate();
  cfg.optim.validate();
  cfg.feedback.validate();
  return cfg;
}

// Every CSV gets a sidecar with the resolved configuration.
void write_csv(const std::string &path, const std::string &body,
               const json &provenance) {
  io::write_file(path, body);
  io::write_file(path + ".run.json", provenance.dump(2) + "\n");
}

std::string history_csv(const std::vector<EpochRecord> &history) {
  std::ostringstream ss;
  ss << "epoch,train_loss,heldout_frame_error,heldout_id_accuracy\n";
  char buf[160];
  for (const EpochRecord &r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.6f,%.6f\n", r.epoch,
                  r.train_loss, r.heldout_frame_error, r.heldout_id_accuracy);
    ss << buf;
  }
  return ss.str();
}

AblationSetup setup_from(const RunConfig &cfg) {
  AblationSetup s;
  s.asr = cfg.asr;
  s.sre = cfg.sre;
  s.asr_delay = cfg.asr_delay;
  s.optim = cfg.optim;
  s.init_seed = cfg.init_seed();
  return s;
}

int run_gen_data(const Overrides &o, const std::string &out_dir,
                 std::ostream &out) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = gen_dataset(cfg.synth);
  save_dataset(ds, out_dir);
  io::write_file((fs::path(out_dir) / "run.json").string(),
                 to_json(cfg).dump(2) + "\n");
  out << "wrote " << ds.train.size() << " train + " << ds.test.size()
      << " test utterances to " << out_dir << "\n";
  return 0;
}

int run_train(const Overrides &o, const std::string &data_dir,
              const std::string &ckpt, std::string history_path,
              std::ostream &out) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(data_dir);
  const AblationSetup setup = setup_from(cfg);
  Rng rng{setup.init_seed};
  TrainState st = make_train_state(
      init_joint_model(asr_dims_for(ds.config, cfg.asr),
                       sre_dims_for(ds.config, cfg.sre), cfg.feedback,
                       cfg.asr_delay, rng),
      cfg.optim);
  st.provenance = {{"run_config", to_json(cfg)}, {"data", data_dir}};
  train(st, ds.train, ds.test, [&](const EpochRecord &r) {
    out << "epoch " << r.epoch << " loss " << r.train_loss << " frame_err "
        << r.heldout_frame_error << " spk_id " << r.heldout_id_accuracy
        << "\n";
  });
  save_checkpoint(st, ckpt);
  if (history_path.empty()) history_path = ckpt + ".history.csv";
  write_csv(history_path, history_csv(st.history), st.provenance);
  out << "wrote " << ckpt << " and " << history_path << "\n";
  return 0;
}

int run_eval(const std::string &data_dir, const std::string &ckpt,
             const std::string &csv, std::ostream &out) {
  const Dataset ds = load_dataset(data_dir);
  const TrainState st = load_checkpoint(ckpt);
  EvalReport rep = evaluate(st.model, ds);
  for (const AblationRow &row : published_grid()) {
    if (row.config == rep.config) {
      rep.reference_wer = row.ref_wer;
      rep.reference_eer = row.ref_eer;
    }
  }
  std::ostringstream ss;
  write_report_csv(ss, std::span<const EvalReport>(&rep, 1));
  write_csv(csv, ss.str(),
            {{"checkpoint", ckpt}, {"data", data_dir}, {"trained", st.provenance}});
  out << ss.str();
  return 0;
}

int run_ablate(const Overrides &o, const std::string &data_dir,
               const std::string &csv, std::ostream &out) {
  const RunConfig cfg = resolve(o);
  const Dataset ds = load_dataset(data_dir);
  const std::vector<AblationRow> grid = published_grid();
  const auto reports = run_ablation(
      ds, setup_from(cfg), grid, [&](std::size_t k, const EvalReport &r) {
        out << "row " << k + 1 << "/" << grid.size() << " "
            << r.config.sources_label() << " -> " << r.config.sinks_label()
            << ": frame_err " << r.frame_error << " eer " << r.eer
            << " spk_id " << r.id_accuracy << "\n";
      });
  std::ostringstream ss;
  write_report_csv(ss, reports);
  write_csv(csv, ss.str(), {{"run_config", to_json(cfg)}, {"data", data_dir}});
  out << "wrote " << csv << "\n";
  return 0;
}

int run_gradcheck(const GradcheckDims &dims, std::uint64_t seed,
                  double tolerance, std::ostream &out) {
  bool ok = true;
  char buf[256];
  for (const AblationRow &row : published_grid()) {
    const GradcheckResult r = gradcheck_config(dims, row.config, seed);
    const bool pass = r.max_rel_error < tolerance;
    ok = ok && pass;
    std::snprintf(buf, sizeof(buf),
                  "%-4s sources=%-4s sinks=%-8s max_rel_err=%.3e params=%zu "
                  "worst=%s\n",
                  pass ? "ok" : "FAIL", r.config.sources_label().c_str(),
                  r.config.sinks_label().c_str(), r.max_rel_error, r.checked,
                  r.worst_param.c_str());
    out << buf;
  }
  return ok ? 0 : 1;
}

}  // namespace

void RunConfig::derive_seeds() {
  synth.seed = derive_seed(seed, kDataPurpose);
  optim.seed = derive_seed(seed, kOptimPurpose);
}

std::uint64_t RunConfig::init_seed() const {
  return derive_seed(seed, kInitPurpose);
}

json to_json(const RunConfig &c) {
  return {{"seed", c.seed},
          {"synth", to_json(c.synth)},
          {"asr", shape_to_json(c.asr)},
          {"sre", shape_to_json(c.sre)},
          {"feedback", to_json(c.feedback)},
          {"asr_delay", c.asr_delay},
          {"optim", to_json(c.optim)}};
}

RunConfig run_config_from_json(const json &j, RunConfig c) {
  if (!j.is_object())
    throw std::invalid_argument("run config: expected a JSON object");
  for (const auto &[k, v] : j.items()) {
    if (k == "seed") {
      v.get_to(c.seed);
    } else if (k == "synth" || k == "optim") {
      if (v.contains("seed"))
        throw std::invalid_argument("run config: '" + k +
                                    ".seed' is derived; set the top-level "
                                    "\"seed\" instead");
      if (k == "synth")
        c.synth = synth_config_from_json(v, c.synth);
      else
        c.optim = optim_config_from_json(v, c.optim);
    } else if (k == "asr") {
      c.asr = shape_from_json(v, c.asr);
    } else if (k == "sre") {
      c.sre = shape_from_json(v, c.sre);
    } else if (k == "feedback") {
      c.feedback = feedback_from_json(v);
    } else if (k == "asr_delay") {
      v.get_to(c.asr_delay);
    } else {
      throw std::invalid_argument("run config: unknown key '" + k + "'");
    }
  }
  c.derive_seeds();
  return c;
}

int cli_main(const std::vector<std::string> &args, std::ostream &out,
             std::ostream &err) {
  CLI::App app{"Multi-task recurrent speech/speaker model toolkit", "mtrl"};
  app.require_subcommand(1);

  Overrides gen_o, train_o, ablate_o;
  std::string out_dir, data_dir, ckpt, csv, history;

  CLI::App *gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--config", gen_o.config_file, "JSON run configuration");
  gen->add_option("--seed", gen_o.seed, "top-level seed");
  gen->add_option("--speakers", gen_o.speakers);
  gen->add_option("--phones", gen_o.phones);
  gen->add_option("--feat-dim", gen_o.feat_dim);
  gen->add_option("--utts", gen_o.utts, "utterances per speaker");
  gen->add_option("--frames", gen_o.frames, "frames per utterance");
  gen->add_option("--splice", gen_o.radius, "splice radius");
  gen->add_option("--noise", gen_o.noise, "noise standard deviation");

  CLI::App *trn = app.add_subcommand("train", "train one joint model");
  trn->add_option("--data", data_dir, "dataset directory")->required();
  trn->add_option("--out", ckpt, "checkpoint path")->required();
  trn->add_option("--history", history,
                  "history CSV (default: <out>.history.csv)");
  add_model_flags(trn, train_o);

  std::string eval_data, eval_ckpt, eval_csv;
  CLI::App *ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  ev->add_option("--out", eval_csv, "report CSV")->required();

  std::string ab_data, ab_csv;
  CLI::App *ab = app.add_subcommand("ablate", "sweep the 13 feedback configs");
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_csv, "report CSV")->required();
  add_model_flags(ab, ablate_o);

  GradcheckDims gdims;
  std::uint64_t gseed = 7;
  double gtol = 1e-4;
  CLI::App *gc = app.add_subcommand(
      "gradcheck", "finite-difference check of BPTT for every config");
  gc->add_option("--input", gdims.input);
  gc->add_option("--cell", gdims.cell);
  gc->add_option("--rec-proj", gdims.rec_proj);
  gc->add_option("--nonrec-proj", gdims.nonrec_proj);
  gc->add_option("--phones", gdims.phones);
  gc->add_option("--speakers", gdims.speakers);
  gc->add_option("--frames", gdims.frames);
  gc->add_option("--delay", gdims.delay);
  gc->add_option("--seed", gseed);
  gc->add_option("--tolerance", gtol, "max relative error allowed");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) return run_gen_data(gen_o, out_dir, out);
    if (*trn) return run_train(train_o, data_dir, ckpt, history, out);
    if (*ev) return run_eval(eval_data, eval_ckpt, eval_csv, out);
    if (*ab) return run_ablate(ablate_o, ab_data, ab_csv, out);
    if (*gc) {
      const int rc = run_gradcheck(gdims, gseed, gtol, out);
      if (rc != 0) err << "error: gradient check exceeded tolerance " << gtol << "\n";
      return rc;
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int cli_main(int argc, char *argv[]) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace mtrl
