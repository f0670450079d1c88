// Copyright 2026 The smcse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SMCSE_COMMON_HPP
#define SMCSE_COMMON_HPP

/**
 * \file
 * \brief Error types and small numeric helpers shared across the library.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smcse {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A configuration value is out of range or inconsistent with other values.
struct InvalidConfigError : Error {
  using Error::Error;
};

/// An input violates a documented precondition (bad weight vector, bad domain).
struct ContractViolationError : Error {
  using Error::Error;
};

/// Every particle weight at some stage is zero; the filter cannot continue.
struct DegenerateWeightsError : Error {
  DegenerateWeightsError(const std::string& what, int stage_in) : Error(what), stage(stage_in) {}
  int stage;
};

/// A resampling step produced zero offspring in total.
struct PopulationExtinctionError : Error {
  PopulationExtinctionError(const std::string& what, int stage_in) : Error(what), stage(stage_in) {}
  int stage;
};

/// A threshold comparison in the limiting resampling schedule is too close to call.
struct AmbiguousScheduleError : Error {
  using Error::Error;
};

/// An exact enumeration would exceed the configured atom budget.
struct EnumerationBudgetError : Error {
  using Error::Error;
};

/// The supplied observations have zero likelihood under the model.
struct InconsistentObservationsError : Error {
  using Error::Error;
};

/// An exact moment computation produced a non-finite term.
struct NonFiniteMomentError : Error {
  NonFiniteMomentError(const std::string& what, int term_in) : Error(what), term(term_in) {}
  int term;
};

/// Compensated (Neumaier) accumulator.
template <class T>
class BasicNeumaierSum {
 public:
  void add(T x) {
    const T t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] T value() const { return sum_ + comp_; }

 private:
  T sum_ = 0;
  T comp_ = 0;
};

using NeumaierSum = BasicNeumaierSum<double>;
using NeumaierSumLD = BasicNeumaierSum<long double>;

/// Sum of exp(x - max) over finite entries; -inf entries contribute zero.
/// Returns -inf when every entry is -inf (or the span is empty).
inline double logsumexp(std::span<const double> xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return kNegInf;
  double acc = 0.0;
  for (double x : xs) {
    if (x != kNegInf) acc += std::exp(x - mx);
  }
  return mx + std::log(acc);
}

/// log(exp(a) + exp(b)) without overflow; -inf operands act as zeros.
inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

/// log(mean(exp(xs))) with max subtraction.
inline double logmeanexp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double lse = logsumexp(xs);
  if (lse == kNegInf) return kNegInf;
  return lse - std::log(static_cast<double>(xs.size()));
}

/// Normalized weights exp(x_i) / sum_j exp(x_j) computed with max subtraction.
/// All--(-inf) input yields an all-zero vector; callers treat that as degenerate.
inline std::vector<double> softmax(std::span<const double> xs) {
  std::vector<double> out(xs.size(), 0.0);
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return out;
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] != kNegInf) {
      out[i] = std::exp(xs[i] - mx);
      total += out[i];
    }
  }
  for (double& v : out) v /= total;
  return out;
}

/// Density of N(mean, var) at y. var must be positive.
inline double normal_pdf(double y, double mean, double var) {
  const double d = y - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

/// Log density of N(mean, var) at y. var must be positive.
inline double normal_logpdf(double y, double mean, double var) {
  const double d = y - mean;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace smcse

#endif  // SMCSE_COMMON_HPP
