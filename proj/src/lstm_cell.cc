// SPDX-License-Identifier: Apache-2.0

#include "mtrl/lstm_cell.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mtrl {
namespace {

void check_len(std::string_view what, std::size_t got, std::size_t want) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": length " +
                                std::to_string(got) + ", expected " +
                                std::to_string(want));
}

void add_to(Vec &dst, std::span<const double> src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

// Pre-activation of a gate: W_x x + W_r r' + b (+ peep . cell) (+ injection).
Vec gate_preact(const Mat &wx, const Mat &wr, const Vec &b,
                std::span<const double> x, std::span<const double> r_prev) {
  Vec a = b;
  matvec_acc(wx, x, a);
  matvec_acc(wr, r_prev, a);
  return a;
}

}  // namespace

void CellDims::validate() const {
  if (input == 0 || cell == 0 || rec_proj == 0 || nonrec_proj == 0 ||
      output == 0)
    throw std::invalid_argument(
        "cell dims must all be positive (input=" + std::to_string(input) +
        " cell=" + std::to_string(cell) + " rec=" + std::to_string(rec_proj) +
        " nonrec=" + std::to_string(nonrec_proj) +
        " output=" + std::to_string(output) + ")");
}

CellParams CellParams::zeros(const CellDims &d) {
  d.validate();
  CellParams p;
  p.w_ix = p.w_fx = p.w_cx = p.w_ox = Mat(d.cell, d.input);
  p.w_ir = p.w_fr = p.w_cr = p.w_or = Mat(d.cell, d.rec_proj);
  p.w_ic = p.w_fc = p.w_oc = Vec(d.cell, 0.0);
  p.b_i = p.b_f = p.b_c = p.b_o = Vec(d.cell, 0.0);
  p.w_rm = Mat(d.rec_proj, d.cell);
  p.w_pm = Mat(d.nonrec_proj, d.cell);
  p.w_yr = Mat(d.output, d.rec_proj);
  p.w_yp = Mat(d.output, d.nonrec_proj);
  p.b_y = Vec(d.output, 0.0);
  return p;
}

CellDims CellParams::dims() const {
  return {w_ix.cols, w_ix.rows, w_rm.rows, w_pm.rows, w_yr.rows};
}

std::size_t CellParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const ParamField<const double> &f) { n += f.values.size(); });
  return n;
}

CellParams init_cell_params(const CellDims &dims, Rng &rng) {
  CellParams p = CellParams::zeros(dims);
  p.visit([&](const ParamField<double> &f) {
    if (f.fan_in == 0) return;
    const double s = 1.0 / std::sqrt(static_cast<double>(f.fan_in));
    for (double &v : f.values) v = rng.uniform(-s, s);
  });
  return p;
}

std::string_view sink_name(Sink s) {
  switch (s) {
    case Sink::kI: return "i";
    case Sink::kF: return "f";
    case Sink::kO: return "o";
    case Sink::kG: return "g";
  }
  return "?";
}

CellState CellState::zeros(const CellDims &dims) {
  return {Vec(dims.cell, 0.0), Vec(dims.rec_proj, 0.0)};
}

StepOutput cell_forward(const CellParams &params, std::span<const double> x,
                        const CellState &state, const SinkInjection &inj) {
  const CellDims d = params.dims();
  check_len("cell_forward x", x.size(), d.input);
  check_len("cell_forward c_prev", state.c.size(), d.cell);
  check_len("cell_forward r_prev", state.r.size(), d.rec_proj);
  for (Sink s : kAllSinks)
    if (inj[s]) check_len("cell_forward injection", inj[s]->size(), d.cell);

  StepOutput out;
  StepCache &k = out.cache;
  k.x.assign(x.begin(), x.end());
  k.c_prev = state.c;
  k.r_prev = state.r;
  k.inj = inj;

  k.a_i = gate_preact(params.w_ix, params.w_ir, params.b_i, x, state.r);
  k.a_f = gate_preact(params.w_fx, params.w_fr, params.b_f, x, state.r);
  k.a_g = gate_preact(params.w_cx, params.w_cr, params.b_c, x, state.r);
  k.a_o = gate_preact(params.w_ox, params.w_or, params.b_o, x, state.r);
  for (std::size_t j = 0; j < d.cell; ++j) {
    k.a_i[j] += params.w_ic[j] * state.c[j];
    k.a_f[j] += params.w_fc[j] * state.c[j];
  }
  if (inj[Sink::kI]) add_to(k.a_i, *inj[Sink::kI]);
  if (inj[Sink::kF]) add_to(k.a_f, *inj[Sink::kF]);
  if (inj[Sink::kG]) add_to(k.a_g, *inj[Sink::kG]);
  if (inj[Sink::kO]) add_to(k.a_o, *inj[Sink::kO]);

  k.i = apply_activation(Activation::kSigmoid, k.a_i);
  k.f = apply_activation(Activation::kSigmoid, k.a_f);
  k.g = apply_activation(Activation::kTanh, k.a_g);
  k.c.resize(d.cell);
  for (std::size_t j = 0; j < d.cell; ++j)
    k.c[j] = k.f[j] * state.c[j] + k.i[j] * k.g[j];

  // The output gate peeks at the current cell.
  for (std::size_t j = 0; j < d.cell; ++j) k.a_o[j] += params.w_oc[j] * k.c[j];
  k.o = apply_activation(Activation::kSigmoid, k.a_o);
  k.tanh_c = apply_activation(Activation::kTanh, k.c);
  k.m.resize(d.cell);
  for (std::size_t j = 0; j < d.cell; ++j) k.m[j] = k.o[j] * k.tanh_c[j];

  k.r = matvec(params.w_rm, k.m);
  k.p = matvec(params.w_pm, k.m);
  k.y = params.b_y;
  matvec_acc(params.w_yr, k.r, k.y);
  matvec_acc(params.w_yp, k.p, k.y);

  out.state = {k.c, k.r};
  return out;
}

StepBackward cell_backward(const CellParams &params, const StepCache &k,
                           const CellState &d_next,
                           const StepOutputGrads &d_out, CellParams &grads) {
  const CellDims d = params.dims();
  if (grads.dims() != d)
    throw std::invalid_argument("cell_backward: gradient buffer shape differs "
                                "from parameters");
  if (k.x.size() != d.input || k.c.size() != d.cell ||
      k.r.size() != d.rec_proj || k.p.size() != d.nonrec_proj ||
      k.y.size() != d.output)
    throw std::invalid_argument(
        "cell_backward: cache does not match parameter dims");
  check_len("cell_backward d_c", d_next.c.size(), d.cell);
  check_len("cell_backward d_r", d_next.r.size(), d.rec_proj);

  auto opt = [](const Vec &v, std::size_t n, std::string_view what) {
    if (v.empty()) return Vec(n, 0.0);
    check_len(what, v.size(), n);
    return v;
  };
  const Vec dy = opt(d_out.y, d.output, "cell_backward d_y");
  Vec dr = opt(d_out.r, d.rec_proj, "cell_backward d_r_out");
  Vec dp = opt(d_out.p, d.nonrec_proj, "cell_backward d_p");
  Vec dm = opt(d_out.m, d.cell, "cell_backward d_m");

  // Output layer.
  outer_acc(grads.w_yr, dy, k.r);
  outer_acc(grads.w_yp, dy, k.p);
  add_to(grads.b_y, dy);
  add_to(dr, d_next.r);
  matvec_t_acc(params.w_yr, dy, dr);
  matvec_t_acc(params.w_yp, dy, dp);

  // Projections.
  outer_acc(grads.w_rm, dr, k.m);
  outer_acc(grads.w_pm, dp, k.m);
  matvec_t_acc(params.w_rm, dr, dm);
  matvec_t_acc(params.w_pm, dp, dm);

  const std::size_t c = d.cell;
  Vec da_i(c), da_f(c), da_g(c), da_o(c);
  StepBackward res;
  res.d_prev.c.assign(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    const double o = k.o[j], th = k.tanh_c[j];
    da_o[j] = dm[j] * th * o * (1.0 - o);
    const double dc = d_next.c[j] + dm[j] * o * (1.0 - th * th) +
                      da_o[j] * params.w_oc[j];
    const double i = k.i[j], f = k.f[j], g = k.g[j];
    da_i[j] = dc * g * i * (1.0 - i);
    da_f[j] = dc * k.c_prev[j] * f * (1.0 - f);
    da_g[j] = dc * i * (1.0 - g * g);
    res.d_prev.c[j] = dc * f + da_i[j] * params.w_ic[j] +
                      da_f[j] * params.w_fc[j];
    grads.w_ic[j] += da_i[j] * k.c_prev[j];
    grads.w_fc[j] += da_f[j] * k.c_prev[j];
    grads.w_oc[j] += da_o[j] * k.c[j];
  }

  add_to(grads.b_i, da_i);
  add_to(grads.b_f, da_f);
  add_to(grads.b_c, da_g);
  add_to(grads.b_o, da_o);
  outer_acc(grads.w_ix, da_i, k.x);
  outer_acc(grads.w_fx, da_f, k.x);
  outer_acc(grads.w_cx, da_g, k.x);
  outer_acc(grads.w_ox, da_o, k.x);
  outer_acc(grads.w_ir, da_i, k.r_prev);
  outer_acc(grads.w_fr, da_f, k.r_prev);
  outer_acc(grads.w_cr, da_g, k.r_prev);
  outer_acc(grads.w_or, da_o, k.r_prev);

  res.d_x.assign(d.input, 0.0);
  matvec_t_acc(params.w_ix, da_i, res.d_x);
  matvec_t_acc(params.w_fx, da_f, res.d_x);
  matvec_t_acc(params.w_cx, da_g, res.d_x);
  matvec_t_acc(params.w_ox, da_o, res.d_x);
  res.d_prev.r.assign(d.rec_proj, 0.0);
  matvec_t_acc(params.w_ir, da_i, res.d_prev.r);
  matvec_t_acc(params.w_fr, da_f, res.d_prev.r);
  matvec_t_acc(params.w_cr, da_g, res.d_prev.r);
  matvec_t_acc(params.w_or, da_o, res.d_prev.r);

  res.d_inj[static_cast<std::size_t>(Sink::kI)] = std::move(da_i);
  res.d_inj[static_cast<std::size_t>(Sink::kF)] = std::move(da_f);
  res.d_inj[static_cast<std::size_t>(Sink::kO)] = std::move(da_o);
  res.d_inj[static_cast<std::size_t>(Sink::kG)] = std::move(da_g);
  return res;
}

}  // namespace mtrl
