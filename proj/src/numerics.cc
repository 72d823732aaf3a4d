// SPDX-License-Identifier: Apache-2.0

#include "mtrl/numerics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mtrl {
namespace {

// Largest double below 1; keeps sigmoid and tanh strictly inside their open
// ranges when the exact result would round to the boundary.
constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2;

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), kBelowOne);
}

double tanh_act(double x) {
  return std::clamp(std::tanh(x), -kBelowOne, kBelowOne);
}

Vec apply_activation(Activation kind, std::span<const double> v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = kind == Activation::kSigmoid ? sigmoid(v[i]) : tanh_act(v[i]);
  return out;
}

Vec matvec(const Mat &m, std::span<const double> v) {
  Vec out(m.rows, 0.0);
  matvec_acc(m, v, out);
  return out;
}

void matvec_acc(const Mat &m, std::span<const double> v,
                std::span<double> out) {
  if (m.cols != v.size() || m.rows != out.size())
    throw std::invalid_argument("matvec: matrix " + shape(m.rows, m.cols) +
                                " vs vector " + std::to_string(v.size()) +
                                " -> " + std::to_string(out.size()));
  const double *a = m.data.data();
  for (std::size_t r = 0; r < m.rows; ++r, a += m.cols) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += a[c] * v[c];
    out[r] += acc;
  }
}

void matvec_t_acc(const Mat &m, std::span<const double> v,
                  std::span<double> out) {
  if (m.rows != v.size() || m.cols != out.size())
    throw std::invalid_argument("matvec_t: matrix " + shape(m.rows, m.cols) +
                                " transposed vs vector " +
                                std::to_string(v.size()) + " -> " +
                                std::to_string(out.size()));
  const double *a = m.data.data();
  for (std::size_t r = 0; r < m.rows; ++r, a += m.cols) {
    const double s = v[r];
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += a[c] * s;
  }
}

void outer_acc(Mat &m, std::span<const double> a, std::span<const double> b) {
  if (m.rows != a.size() || m.cols != b.size())
    throw std::invalid_argument("outer: matrix " + shape(m.rows, m.cols) +
                                " vs " + shape(a.size(), b.size()));
  double *p = m.data.data();
  for (std::size_t r = 0; r < m.rows; ++r, p += m.cols) {
    const double s = a[r];
    if (s == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) p[c] += s * b[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("dot: length " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double &v : out) v /= sum;
  return out;
}

XentResult softmax_xent(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size())
    throw std::invalid_argument("softmax_xent: label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(logits.size()) + " classes");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  XentResult res;
  res.loss = std::log(sum) - (logits[label] - mx);
  res.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    res.grad[i] = std::exp(logits[i] - mx) / sum;
  res.grad[label] -= 1.0;
  return res;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi))
    throw std::invalid_argument("rng: empty interval [" + std::to_string(lo) +
                                ", " + std::to_string(hi) + ")");
  const double v = lo + (hi - lo) * uniform01();
  // Rounding can land exactly on hi for narrow intervals.
  return v < hi ? v : std::nextafter(hi, lo);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("rng: uniform_index(0)");
  const auto k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
  return std::min(k, n - 1);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::pair<double, Rng> rng_uniform(Rng state, double lo, double hi) {
  const double v = state.uniform(lo, hi);
  return {v, state};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  Rng r{seed ^ (purpose * 0xD1B54A32D192ED03ULL)};
  return r.next_u64();
}

}  // namespace mtrl
