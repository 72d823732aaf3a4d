// SPDX-License-Identifier: Apache-2.0
//
// Elementary math shared by every other module: dense row-major matrices,
// activations, softmax cross-entropy and a portable splitmix64 generator.
// All arithmetic is 64-bit and every reduction sums in ascending index order,
// so results are bit-reproducible.

#ifndef MTRL_NUMERICS_H_
#define MTRL_NUMERICS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace mtrl {

using Vec = std::vector<double>;

/// Dense row-major matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool operator==(const Mat &) const = default;
};

enum class Activation { kSigmoid, kTanh };

double sigmoid(double x);
double tanh_act(double x);
Vec apply_activation(Activation kind, std::span<const double> v);

/// m * v. Throws std::invalid_argument on a shape mismatch.
Vec matvec(const Mat &m, std::span<const double> v);
/// out += m * v
void matvec_acc(const Mat &m, std::span<const double> v, std::span<double> out);
/// out += m^T * v
void matvec_t_acc(const Mat &m, std::span<const double> v,
                  std::span<double> out);
/// m += a * b^T
void outer_acc(Mat &m, std::span<const double> a, std::span<const double> b);

double dot(std::span<const double> a, std::span<const double> b);

Vec softmax(std::span<const double> logits);

struct XentResult {
  double loss = 0.0;
  Vec grad;  // softmax(logits) - onehot(label)
};

/// Cross-entropy of softmax(logits) against `label`, max-subtracted.
XentResult softmax_xent(std::span<const double> logits, std::size_t label);

/// Lowest index among the maximal entries.
std::size_t argmax(std::span<const double> v);

/// splitmix64. Passed around by value or by reference; never shared.
struct Rng {
  std::uint64_t state = 0;

  std::uint64_t next_u64();
  /// Top 53 bits of the next output mapped to [0, 1).
  double uniform01();
  double uniform(double lo, double hi);
  /// floor(uniform01() * n), clamped to n - 1.
  std::size_t uniform_index(std::size_t n);
  /// Box-Muller using one pair of draws per sample:
  /// sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
  double normal();
};

/// Functional form: returns the draw in [lo, hi) and the advanced state.
std::pair<double, Rng> rng_uniform(Rng state, double lo, double hi);

/// Independent stream seed for a given purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose);

}  // namespace mtrl

#endif  // MTRL_NUMERICS_H_
