// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "adarank/tape.hpp"
#include "adarank/tensor.hpp"

namespace adarank {

// ---------------------------------------------------------------------------
// Plain kernels. All inputs are read as (rows x cols) matrices.
// ---------------------------------------------------------------------------

/// op(a) * op(b) where op optionally transposes.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
/// x + bias broadcast over rows; bias has x.cols() entries.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor transpose(const Tensor& x);

constexpr double kLayerNormEps = 1e-12;

// ---------------------------------------------------------------------------
// Differentiable ops recorded on a Tape.
// ---------------------------------------------------------------------------
namespace ops {

Var matmul(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
Var add_bias(Tape& tape, Var x, Var bias);
Var scale(Tape& tape, Var x, double factor);
Var gelu(Tape& tape, Var x);
Var softmax(Tape& tape, Var x);
Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps = kLayerNormEps);

/// Selects rows of `table` (any 2-D var) by index; gradient scatter-adds.
Var gather_rows(Tape& tape, Var table, std::vector<std::size_t> indices);

struct AttentionLayout {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t num_heads = 0;
};

/// Scaled dot-product multi-head attention over (batch*seq_len) x d_model
/// inputs. `key_valid[b * seq_len + j] == 0` removes key j from row b's
/// softmax entirely.
Var attention(Tape& tape, Var q, Var k, Var v, const AttentionLayout& layout,
              std::vector<std::uint8_t> key_valid);

/// Mean softmax cross-entropy over rows; labels index columns.
Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels);

/// Sum of w * x elementwise; used to build scalar probes for gradient checks.
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);

}  // namespace ops
}  // namespace adarank
