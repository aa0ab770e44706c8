// SPDX-License-Identifier: Apache-2.0

#include "adarank/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace adarank {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(const Tensor& t) {
  return ConstMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor& t) {
  return MutMap(t.raw(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_bias(const Tensor& x, const Tensor& bias, const char* what) {
  if (bias.size() != x.cols()) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(x.cols()) +
                                " entries, got " + std::to_string(bias.size()));
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Tensor column_sums(const Tensor& g, const Shape& shape) {
  Tensor out(shape);
  const std::size_t r = g.rows(), c = g.cols();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += g[i * c + j];
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (ka != kb) {
    throw std::invalid_argument("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  Tensor out({m, n});
  auto c = view(out);
  const auto av = view(a);
  const auto bv = view(b);
  if (!transpose_a && !transpose_b) {
    c.noalias() = av * bv;
  } else if (transpose_a && !transpose_b) {
    c.noalias() = av.transpose() * bv;
  } else if (!transpose_a && transpose_b) {
    c.noalias() = av * bv.transpose();
  } else {
    c.noalias() = av.transpose() * bv.transpose();
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_bias(x, bias, "add_bias");
  Tensor out = x;
  const std::size_t c = x.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % c];
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out = x;
  for (double& v : out.data()) v *= factor;
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.raw() + i * c;
    const double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_bias(x, gamma, "layer_norm gamma");
  require_bias(x, beta, "layer_norm beta");
  Tensor out = x;
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.raw() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* o = out.raw() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = gamma[j] * ((in[j] - mu) * inv) + beta[j];
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  Tensor out({x.cols(), x.rows()});
  view(out) = view(x).transpose();
  return out;
}

namespace ops {

Var matmul(Tape& tape, Var a, Var b) {
  Tensor out = adarank::matmul(tape.value(a), tape.value(b));
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    if (t.requires_grad(a)) {
      Tensor ga = adarank::matmul(g, t.value(b), false, true);
      ga = Tensor(t.value(a).shape(), std::vector<double>(ga.data().begin(), ga.data().end()));
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor gb = adarank::matmul(t.value(a), g, true, false);
      gb = Tensor(t.value(b).shape(), std::vector<double>(gb.data().begin(), gb.data().end()));
      t.accumulate(b, gb);
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  Tensor out = adarank::add(tape.value(a), tape.value(b));
  return tape.record(std::move(out), {a, b}, [a, b](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_bias(Tape& tape, Var x, Var bias) {
  Tensor out = adarank::add_bias(tape.value(x), tape.value(bias));
  return tape.record(std::move(out), {x, bias}, [x, bias](const Tensor& g, Tape& t) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) t.accumulate(bias, column_sums(g, t.value(bias).shape()));
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor out = adarank::scale(tape.value(x), factor);
  return tape.record(std::move(out), {x}, [x, factor](const Tensor& g, Tape& t) {
    t.accumulate(x, adarank::scale(g, factor));
  });
}

Var gelu(Tape& tape, Var x) {
  Tensor out = adarank::gelu(tape.value(x));
  return tape.record(std::move(out), {x}, [x](const Tensor& g, Tape& t) {
    const Tensor& in = t.value(x);
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = in[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] *= cdf + v * pdf;
    }
    t.accumulate(x, gx);
  });
}

Var softmax(Tape& tape, Var x) {
  Tensor out = softmax_rows(tape.value(x));
  Tensor probs = out;
  return tape.record(std::move(out), {x}, [x, p = std::move(probs)](const Tensor& g, Tape& t) {
    const std::size_t r = p.rows(), c = p.cols();
    Tensor gx(p.shape());
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * p[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = p[i * c + j] * (g[i * c + j] - dot);
    }
    t.accumulate(x, gx);
  });
}

Var layer_norm(Tape& tape, Var x, Var gamma, Var beta, double eps) {
  const Tensor& in = tape.value(x);
  const Tensor& gam = tape.value(gamma);
  require_bias(in, gam, "layer_norm gamma");
  require_bias(in, tape.value(beta), "layer_norm beta");
  const std::size_t r = in.rows(), c = in.cols();
  Tensor normalized(in.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in.raw() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) normalized[i * c + j] = (row[j] - mu) * inv_std[i];
  }
  Tensor out(in.shape());
  const Tensor& bet = tape.value(beta);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gam[i % c] * normalized[i] + bet[i % c];

  return tape.record(std::move(out), {x, gamma, beta},
                     [x, gamma, beta, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                         const Tensor& g, Tape& t) {
                       const Tensor& gam = t.value(gamma);
                       const std::size_t r = g.rows(), c = g.cols();
                       if (t.requires_grad(gamma)) {
                         Tensor gg(gam.shape());
                         for (std::size_t i = 0; i < g.size(); ++i) gg[i % c] += g[i] * normalized[i];
                         t.accumulate(gamma, gg);
                       }
                       if (t.requires_grad(beta)) t.accumulate(beta, column_sums(g, t.value(beta).shape()));
                       if (!t.requires_grad(x)) return;
                       Tensor gx(g.shape());
                       const double inv_c = 1.0 / static_cast<double>(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         double mean_d = 0.0, mean_dx = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = g[i * c + j] * gam[j];
                           mean_d += d;
                           mean_dx += d * normalized[i * c + j];
                         }
                         mean_d *= inv_c;
                         mean_dx *= inv_c;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double d = g[i * c + j] * gam[j];
                           gx[i * c + j] = inv_std[i] * (d - mean_d - normalized[i * c + j] * mean_dx);
                         }
                       }
                       t.accumulate(x, gx);
                     });
}

Var gather_rows(Tape& tape, Var table, std::vector<std::size_t> indices) {
  const Tensor& src = tape.value(table);
  const std::size_t c = src.cols(), n = src.rows();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) throw std::out_of_range("gather_rows index " + std::to_string(indices[i]));
    std::copy_n(src.raw() + indices[i] * c, c, out.raw() + i * c);
  }
  return tape.record(std::move(out), {table}, [table, indices = std::move(indices)](const Tensor& g, Tape& t) {
    const std::size_t c = g.cols();
    Tensor gt(t.value(table).shape());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) gt[indices[i] * c + j] += g[i * c + j];
    }
    t.accumulate(table, gt);
  });
}

Var attention(Tape& tape, Var q, Var k, Var v, const AttentionLayout& layout, std::vector<std::uint8_t> key_valid) {
  const Tensor& qv = tape.value(q);
  const Tensor& kv = tape.value(k);
  const Tensor& vv = tape.value(v);
  const std::size_t B = layout.batch, S = layout.seq_len, H = layout.num_heads;
  const std::size_t D = qv.cols();
  if (!qv.same_shape(kv) || !qv.same_shape(vv) || qv.rows() != B * S || H == 0 || D % H != 0 ||
      key_valid.size() != B * S) {
    throw std::invalid_argument("attention layout mismatch");
  }
  const std::size_t dh = D / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs[((b * H + h) * S + i) * S + j]
  std::vector<double> probs(B * H * S * S, 0.0);
  Tensor out({B * S, D});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < S; ++i) {
        const double* qi = qv.raw() + (b * S + i) * D + h * dh;
        double* p = probs.data() + ((b * H + h) * S + i) * S;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < S; ++j) {
          if (!key_valid[b * S + j]) continue;
          const double* kj = kv.raw() + (b * S + j) * D + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
          p[j] = s * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          if (!key_valid[b * S + j]) continue;
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        double* oi = out.raw() + (b * S + i) * D + h * dh;
        for (std::size_t j = 0; j < S; ++j) {
          if (!key_valid[b * S + j]) continue;
          p[j] /= sum;
          const double* vj = vv.raw() + (b * S + j) * D + h * dh;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += p[j] * vj[d];
        }
      }
    }
  }

  return tape.record(std::move(out), {q, k, v}, [=, probs = std::move(probs)](const Tensor& g, Tape& t) {
    const Tensor& qv = t.value(q);
    const Tensor& kv = t.value(k);
    const Tensor& vv = t.value(v);
    const bool need_q = t.requires_grad(q), need_k = t.requires_grad(k), need_v = t.requires_grad(v);
    Tensor gq(qv.shape()), gk(kv.shape()), gv(vv.shape());
    std::vector<double> dp(S), ds(S);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < S; ++i) {
          const double* p = probs.data() + ((b * H + h) * S + i) * S;
          const double* gi = g.raw() + (b * S + i) * D + h * dh;
          double dot = 0.0;
          for (std::size_t j = 0; j < S; ++j) {
            dp[j] = 0.0;
            if (p[j] == 0.0) continue;
            const double* vj = vv.raw() + (b * S + j) * D + h * dh;
            for (std::size_t d = 0; d < dh; ++d) dp[j] += gi[d] * vj[d];
            dot += p[j] * dp[j];
            if (need_v) {
              double* gvj = gv.raw() + (b * S + j) * D + h * dh;
              for (std::size_t d = 0; d < dh; ++d) gvj[d] += p[j] * gi[d];
            }
          }
          if (!need_q && !need_k) continue;
          const double* qi = qv.raw() + (b * S + i) * D + h * dh;
          double* gqi = gq.raw() + (b * S + i) * D + h * dh;
          for (std::size_t j = 0; j < S; ++j) {
            if (p[j] == 0.0) continue;
            ds[j] = p[j] * (dp[j] - dot) * inv_sqrt;
            const double* kj = kv.raw() + (b * S + j) * D + h * dh;
            if (need_q) {
              for (std::size_t d = 0; d < dh; ++d) gqi[d] += ds[j] * kj[d];
            }
            if (need_k) {
              double* gkj = gk.raw() + (b * S + j) * D + h * dh;
              for (std::size_t d = 0; d < dh; ++d) gkj[d] += ds[j] * qi[d];
            }
          }
        }
      }
    }
    if (need_q) t.accumulate(q, gq);
    if (need_k) t.accumulate(k, gk);
    if (need_v) t.accumulate(v, gv);
  });
}

Var cross_entropy(Tape& tape, Var logits, std::span<const int> labels) {
  const Tensor& z = tape.value(logits);
  const std::size_t r = z.rows(), c = z.cols();
  if (labels.size() != r) throw std::invalid_argument("cross_entropy: label count does not match batch");
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw std::out_of_range("cross_entropy: label out of range");
    }
    const double* row = z.raw() + i * c;
    const double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    loss += mx + std::log(sum) - row[labels[i]];
  }
  loss /= static_cast<double>(r);
  std::vector<int> owned(labels.begin(), labels.end());
  return tape.record(Tensor({1}, loss), {logits},
                     [logits, probs = std::move(probs), owned = std::move(owned)](const Tensor& g, Tape& t) {
                       Tensor gz = probs;
                       const std::size_t r = gz.rows(), c = gz.cols();
                       for (std::size_t i = 0; i < r; ++i) gz[i * c + static_cast<std::size_t>(owned[i])] -= 1.0;
                       const double f = g[0] / static_cast<double>(r);
                       for (double& x : gz.data()) x *= f;
                       t.accumulate(logits, gz);
                     });
}

Var weighted_sum(Tape& tape, Var x, const Tensor& weights) {
  const Tensor& in = tape.value(x);
  require_same_shape(in, weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) s += in[i] * weights[i];
  return tape.record(Tensor({1}, s), {x}, [x, weights](const Tensor& g, Tape& t) {
    t.accumulate(x, adarank::scale(weights, g[0]));
  });
}

}  // namespace ops
}  // namespace adarank
