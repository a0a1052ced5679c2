#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "a2s/error.hpp"

namespace a2s {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
constexpr T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

/// log(exp(a) + exp(b)); -inf is the log of zero.
template <class T>
T log_add(T a, T b) {
  if (a < b) std::swap(a, b);
  if (b == neg_inf<T>()) return a;
  return a + std::log1p(std::exp(b - a));
}

/// Per-frame symbol posteriors: frames x symbols, each row a distribution.
/// Log probabilities are kept alongside so that loss computations never take
/// the log of an underflowed probability.
template <class T>
class PosteriorGrid {
 public:
  static PosteriorGrid from_logits(const Matrix<T>& logits) {
    PosteriorGrid g;
    g.log_probs_.resize(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
      const T m = logits.row(t).maxCoeff();
      const T lse = m + std::log((logits.row(t).array() - m).exp().sum());
      g.log_probs_.row(t) = logits.row(t).array() - lse;
    }
    g.probs_ = g.log_probs_.array().exp().matrix();
    return g;
  }

  static PosteriorGrid from_probabilities(const Matrix<T>& probs, T tolerance = T(1e-6)) {
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
      if ((probs.row(t).array() < T(0)).any() || std::abs(probs.row(t).sum() - T(1)) > tolerance) {
        throw Error(Errc::ShapeMismatch, "posterior row " + std::to_string(t) + " is not a distribution");
      }
    }
    PosteriorGrid g;
    g.probs_ = probs;
    g.log_probs_ = probs.array().log().matrix();
    return g;
  }

  Eigen::Index frames() const { return probs_.rows(); }
  Eigen::Index symbols() const { return probs_.cols(); }
  const Matrix<T>& probabilities() const { return probs_; }
  const Matrix<T>& log_probabilities() const { return log_probs_; }

 private:
  Matrix<T> probs_;
  Matrix<T> log_probs_;
};

}  // namespace a2s
