// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

#include "adarank/tensor.hpp"

namespace adarank {

// Counter-based generator. Output i of a stream is splitmix64's finalizer
// applied to key + (i + 1) * golden_gamma, where the key mixes the master
// seed with the stream id. A stream is therefore fully determined by
// (master_seed, stream_id) and never depends on scheduling order.
//
// Gaussians use Box-Muller on two 53-bit uniforms: u1 = 1 - uniform() so
// the log argument lies in (0, 1]; the cosine branch is returned first and
// the sine branch is held for the next call.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  /// Folds a tuple of integers into a single stream id.
  static std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  double uniform();                    // [0, 1)
  std::uint64_t below(std::uint64_t n);  // [0, n), unbiased
  double normal();                      // N(0, 1)

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t z);

/// i.i.d. Normal(mean, std) samples; std == 0 yields a constant tensor.
Tensor gaussian(const Shape& shape, double mean, double std, RngStream& rng);

/// i.i.d. Uniform[lo, hi) samples.
Tensor uniform(const Shape& shape, double lo, double hi, RngStream& rng);

}  // namespace adarank
