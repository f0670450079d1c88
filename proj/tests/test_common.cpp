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

#include <cmath>
#include <limits>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "smcse/common.hpp"

namespace smcse {
namespace {

TEST_CASE("logsumexp matches direct evaluation away from overflow") {
  const std::vector<double> xs = {0.2, -1.3, 2.7, 0.0};
  double direct = 0.0;
  for (double x : xs) direct += std::exp(x);
  CHECK_THAT(logsumexp(xs), Catch::Matchers::WithinRel(std::log(direct), 1e-14));
}

TEST_CASE("logsumexp survives large magnitudes") {
  const std::vector<double> xs = {1000.0, 1000.0 + std::log(2.0)};
  CHECK_THAT(logsumexp(xs), Catch::Matchers::WithinAbs(1000.0 + std::log(3.0), 1e-12));
  const std::vector<double> lows = {-1000.0, -1000.0};
  CHECK_THAT(logsumexp(lows), Catch::Matchers::WithinAbs(-1000.0 + std::log(2.0), 1e-12));
}

TEST_CASE("logsumexp of all minus-infinity is minus infinity") {
  const std::vector<double> xs = {kNegInf, kNegInf};
  CHECK(logsumexp(xs) == kNegInf);
  CHECK(logsumexp(std::vector<double>{}) == kNegInf);
}

TEST_CASE("logaddexp agrees with logsumexp and absorbs minus infinity") {
  CHECK_THAT(logaddexp(0.5, -2.0),
             Catch::Matchers::WithinRel(logsumexp(std::vector<double>{0.5, -2.0}), 1e-14));
  CHECK(logaddexp(kNegInf, 1.25) == 1.25);
  CHECK(logaddexp(1.25, kNegInf) == 1.25);
  CHECK(logaddexp(kNegInf, kNegInf) == kNegInf);
}

TEST_CASE("logmeanexp subtracts the log count") {
  const std::vector<double> xs = {0.0, 0.0, 0.0};
  CHECK_THAT(logmeanexp(xs), Catch::Matchers::WithinAbs(0.0, 1e-15));
  const std::vector<double> ys = {std::log(2.0), std::log(4.0)};
  CHECK_THAT(logmeanexp(ys), Catch::Matchers::WithinRel(std::log(3.0), 1e-14));
}

TEST_CASE("softmax normalizes and handles the degenerate case") {
  const std::vector<double> xs = {std::log(1.0), std::log(3.0), kNegInf};
  const std::vector<double> w = softmax(xs);
  REQUIRE(w.size() == 3);
  CHECK_THAT(w[0], Catch::Matchers::WithinRel(0.25, 1e-14));
  CHECK_THAT(w[1], Catch::Matchers::WithinRel(0.75, 1e-14));
  CHECK(w[2] == 0.0);

  const std::vector<double> degenerate = {kNegInf, kNegInf};
  const std::vector<double> zeros = softmax(degenerate);
  CHECK(zeros == std::vector<double>{0.0, 0.0});
}

TEST_CASE("Neumaier summation keeps cancellation error small") {
  NeumaierSum acc;
  acc.add(1.0);
  acc.add(1e100);
  acc.add(1.0);
  acc.add(-1e100);
  CHECK(acc.value() == 2.0);

  NeumaierSumLD acc_ld;
  for (int i = 0; i < 10; ++i) acc_ld.add(0.1L);
  CHECK_THAT(static_cast<double>(acc_ld.value()), Catch::Matchers::WithinAbs(1.0, 1e-18));
}

TEST_CASE("normal density and log density agree") {
  const double x = 0.7;
  const double mean = -0.2;
  const double var = 2.5;
  CHECK_THAT(std::log(normal_pdf(x, mean, var)),
             Catch::Matchers::WithinAbs(normal_logpdf(x, mean, var), 1e-12));
  // Standard normal at zero.
  CHECK_THAT(normal_pdf(0.0, 0.0, 1.0),
             Catch::Matchers::WithinRel(1.0 / std::sqrt(2.0 * M_PI), 1e-14));
}

TEST_CASE("normal CDF hits known quantiles") {
  CHECK_THAT(normal_cdf(0.0), Catch::Matchers::WithinAbs(0.5, 1e-15));
  CHECK_THAT(normal_cdf(1.959963984540054), Catch::Matchers::WithinAbs(0.975, 1e-12));
  CHECK_THAT(normal_cdf(-1.959963984540054), Catch::Matchers::WithinAbs(0.025, 1e-12));
}

TEST_CASE("error hierarchy carries stage and term context") {
  const DegenerateWeightsError dw("all zero", 7);
  CHECK(dw.stage == 7);
  const PopulationExtinctionError pe("empty", 3);
  CHECK(pe.stage == 3);
  const NonFiniteMomentError nf("bad term", 5);
  CHECK(nf.term == 5);
  CHECK(std::string(dw.what()).find("all zero") != std::string::npos);
}

}  // namespace
}  // namespace smcse
