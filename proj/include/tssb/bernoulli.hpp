#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tssb/errors.hpp"

namespace tssb {

/// Dense 0/1 matrix, one row per datum.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  BinaryMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const std::uint8_t> row(std::size_t n) const {
    return {bits_.data() + n * cols_, cols_};
  }
  std::span<std::uint8_t> row(std::size_t n) { return {bits_.data() + n * cols_, cols_}; }

  std::uint8_t operator()(std::size_t n, std::size_t d) const { return bits_[n * cols_ + d]; }
  std::uint8_t& operator()(std::size_t n, std::size_t d) { return bits_[n * cols_ + d]; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// log sigma(t), stable for large |t|.
inline double log_sigmoid(double t) {
  return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

/// log f(x | theta) for the factored Bernoulli-logistic model.
inline double bern_loglik(std::span<const std::uint8_t> x, std::span<const double> theta) {
  if (x.size() != theta.size()) throw invariant_error("bernoulli dimension mismatch");
  double ll = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) ll += log_sigmoid(x[d] ? theta[d] : -theta[d]);
  return ll;
}

/// Per-node sufficient statistics: count and per-dimension number of ones.
struct BernoulliStats {
  double n = 0.0;
  std::vector<double> ones;

  explicit BernoulliStats(std::size_t dim = 0) : ones(dim, 0.0) {}

  void add(std::span<const std::uint8_t> x) {
    n += 1.0;
    for (std::size_t d = 0; d < x.size(); ++d) ones[d] += x[d];
  }
};

/// Sum of bern_loglik over the data summarized by `s`.
inline double bern_loglik_stats(const BernoulliStats& s, std::span<const double> theta) {
  double ll = 0.0;
  for (std::size_t d = 0; d < theta.size(); ++d)
    ll += s.ones[d] * log_sigmoid(theta[d]) + (s.n - s.ones[d]) * log_sigmoid(-theta[d]);
  return ll;
}

/// Gradient of the summed log likelihood: sum_n (x_nd - sigma(theta_d)).
inline std::vector<double> bern_loglik_grad(const BernoulliStats& s, std::span<const double> theta) {
  std::vector<double> g(theta.size());
  for (std::size_t d = 0; d < theta.size(); ++d) g[d] = s.ones[d] - s.n * sigmoid(theta[d]);
  return g;
}

inline std::vector<double> bern_loglik_grad(const std::vector<std::span<const std::uint8_t>>& data,
                                            std::span<const double> theta) {
  BernoulliStats s(theta.size());
  for (auto x : data) {
    if (x.size() != theta.size()) throw invariant_error("bernoulli dimension mismatch");
    s.add(x);
  }
  return bern_loglik_grad(s, theta);
}

}  // namespace tssb
