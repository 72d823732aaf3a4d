// SPDX-License-Identifier: Apache-2.0
//
// One step of a projected LSTM tower with diagonal peepholes:
//
//   i = sigmoid(W_ix x + W_ir r' + w_ic . c' + b_i + inj_i)
//   f = sigmoid(W_fx x + W_fr r' + w_fc . c' + b_f + inj_f)
//   g = tanh(W_cx x + W_cr r' + b_c + inj_g)
//   c = f . c' + i . g
//   o = sigmoid(W_ox x + W_or r' + w_oc . c + b_o + inj_o)
//   m = o . tanh(c),  r = W_rm m,  p = W_pm m,  y = W_yr r + W_yp p + b_y
//
// where primes denote the previous step. The inj_* terms are optional
// additive injections used by the joint model for cross-tower feedback.

#ifndef MTRL_LSTM_CELL_H_
#define MTRL_LSTM_CELL_H_

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "mtrl/numerics.h"

namespace mtrl {

struct CellDims {
  std::size_t input = 0;
  std::size_t cell = 0;
  std::size_t rec_proj = 0;
  std::size_t nonrec_proj = 0;
  std::size_t output = 0;

  void validate() const;
  bool operator==(const CellDims &) const = default;
};

/// View of one named parameter block handed to CellParams visitors.
template <typename T>
struct ParamField {
  std::string_view name;
  std::span<T> values;
  std::size_t fan_in;  // 0 for biases
};

struct CellParams {
  Mat w_ix, w_fx, w_cx, w_ox;  // cell x input
  Mat w_ir, w_fr, w_cr, w_or;  // cell x rec_proj
  Vec w_ic, w_fc, w_oc;        // diagonal peepholes
  Vec b_i, b_f, b_c, b_o;
  Mat w_rm;  // rec_proj x cell
  Mat w_pm;  // nonrec_proj x cell
  Mat w_yr;  // output x rec_proj
  Mat w_yp;  // output x nonrec_proj
  Vec b_y;

  static CellParams zeros(const CellDims &dims);

  CellDims dims() const;
  std::size_t parameter_count() const;

  /// Calls f(ParamField) for every block in canonical order. This order is
  /// also the on-disk order in checkpoints.
  template <typename F>
  void visit(F &&f) {
    visit_impl<double>(*this, f);
  }
  template <typename F>
  void visit(F &&f) const {
    visit_impl<const double>(*this, f);
  }

  bool operator==(const CellParams &) const = default;

 private:
  template <typename T, typename Self, typename F>
  static void visit_impl(Self &s, F &f) {
    const std::size_t n = s.w_ix.cols, r = s.w_ir.cols, c = s.w_ic.size(),
                      p = s.w_yp.cols;
    auto m = [&](std::string_view name, auto &mat, std::size_t fan_in) {
      f(ParamField<T>{name, std::span<T>(mat.data), fan_in});
    };
    auto v = [&](std::string_view name, auto &vec, std::size_t fan_in) {
      f(ParamField<T>{name, std::span<T>(vec), fan_in});
    };
    m("w_ix", s.w_ix, n);
    m("w_fx", s.w_fx, n);
    m("w_cx", s.w_cx, n);
    m("w_ox", s.w_ox, n);
    m("w_ir", s.w_ir, r);
    m("w_fr", s.w_fr, r);
    m("w_cr", s.w_cr, r);
    m("w_or", s.w_or, r);
    v("w_ic", s.w_ic, 1);
    v("w_fc", s.w_fc, 1);
    v("w_oc", s.w_oc, 1);
    v("b_i", s.b_i, 0);
    v("b_f", s.b_f, 0);
    v("b_c", s.b_c, 0);
    v("b_o", s.b_o, 0);
    m("w_rm", s.w_rm, c);
    m("w_pm", s.w_pm, c);
    m("w_yr", s.w_yr, r);
    m("w_yp", s.w_yp, p);
    v("b_y", s.b_y, 0);
  }
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
/// Peepholes are diagonal matrices, so their fan-in is 1.
CellParams init_cell_params(const CellDims &dims, Rng &rng);

enum class Sink : std::size_t { kI = 0, kF = 1, kO = 2, kG = 3 };
inline constexpr std::array<Sink, 4> kAllSinks = {Sink::kI, Sink::kF,
                                                  Sink::kO, Sink::kG};
std::string_view sink_name(Sink s);

/// Additive pre-activation terms; an absent sink contributes zero.
struct SinkInjection {
  std::array<std::optional<Vec>, 4> add;

  std::optional<Vec> &operator[](Sink s) {
    return add[static_cast<std::size_t>(s)];
  }
  const std::optional<Vec> &operator[](Sink s) const {
    return add[static_cast<std::size_t>(s)];
  }
};

struct CellState {
  Vec c;
  Vec r;

  static CellState zeros(const CellDims &dims);
};

/// Everything the backward pass needs from one forward step.
struct StepCache {
  Vec x;
  Vec c_prev, r_prev;
  Vec a_i, a_f, a_g, a_o;  // pre-activations
  Vec i, f, g, o;
  Vec c, tanh_c;
  Vec m, r, p;
  Vec y;  // pre-softmax logits
  SinkInjection inj;
};

struct StepOutput {
  CellState state;
  StepCache cache;
};

StepOutput cell_forward(const CellParams &params, std::span<const double> x,
                        const CellState &state, const SinkInjection &inj = {});

/// Loss gradients with respect to this step's outputs. Empty vectors mean
/// zero.
struct StepOutputGrads {
  Vec m, r, p, y;
};

struct StepBackward {
  Vec d_x;
  CellState d_prev;            // w.r.t. (c_{t-1}, r_{t-1})
  std::array<Vec, 4> d_inj;    // w.r.t. each sink's pre-activation
};

/// Exact backward pass for one step. `d_next` holds the gradients w.r.t.
/// (c_t, r_t) arriving from step t+1. Parameter gradients are accumulated
/// into `grads`, which must have the shape of `params`.
StepBackward cell_backward(const CellParams &params, const StepCache &cache,
                           const CellState &d_next,
                           const StepOutputGrads &d_out, CellParams &grads);

}  // namespace mtrl

#endif  // MTRL_LSTM_CELL_H_
