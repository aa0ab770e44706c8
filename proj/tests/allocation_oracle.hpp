// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdint>
#include <vector>

#include "adarank/rng.hpp"

namespace adarank::testing {

using boost::multiprecision::cpp_rational;

/// d_i * r / mean(d) for every i, exactly.
inline std::vector<cpp_rational> exact_quotients(const std::vector<double>& d, double r) {
  cpp_rational sum = 0;
  for (double v : d) sum += cpp_rational(v);
  const cpp_rational mean = sum / static_cast<int>(d.size());
  std::vector<cpp_rational> out;
  for (double v : d) out.push_back(cpp_rational(v) * cpp_rational(r) / mean);
  return out;
}

inline cpp_rational exact_floor(const cpp_rational& x) {
  // Truncation equals floor for the nonnegative values used here.
  return cpp_rational(boost::multiprecision::numerator(x) / boost::multiprecision::denominator(x));
}

/// floor(d_i * r / mean(d)), clamped below by min_rank, in exact rational arithmetic.
inline std::vector<int> exact_ranks(const std::vector<double>& d, double r, int min_rank = 0) {
  std::vector<int> out;
  for (const cpp_rational& x : exact_quotients(d, r)) {
    out.push_back(std::max(static_cast<int>(exact_floor(x)), min_rank));
  }
  return out;
}

/// Smallest distance of any d_i * r / mean(d) from an integer.
inline double closest_to_integer(const std::vector<double>& d, double r) {
  double best = 1.0;
  for (const cpp_rational& x : exact_quotients(d, r)) {
    const double frac = static_cast<double>(x - exact_floor(x));
    best = std::min({best, frac, 1.0 - frac});
  }
  return best;
}

struct RankInstance {
  std::vector<double> d;
  double r = 0.0;
};

/// 1 to 48 nonnegative scores spanning six decades, with integer or fractional r.
inline RankInstance random_instance(std::uint64_t seed) {
  RngStream rng(seed, 0xa110c);
  RankInstance in;
  const std::size_t n = 1 + rng.below(48);
  const double magnitude = std::pow(10.0, -3.0 + 6.0 * rng.uniform());
  for (std::size_t i = 0; i < n; ++i) in.d.push_back(magnitude * rng.uniform());
  if (std::all_of(in.d.begin(), in.d.end(), [](double v) { return v == 0.0; })) in.d[0] = 1.0;
  in.r = rng.uniform() < 0.5 ? static_cast<double>(1 + rng.below(32)) : 0.5 + 31.5 * rng.uniform();
  return in;
}

}  // namespace adarank::testing
