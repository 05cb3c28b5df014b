#pragma once

// Fused network operations with hand-written backward passes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "xmodal/autograd.hpp"

namespace xmodal {

/// Output length of a 1-D convolution.
constexpr Eigen::Index conv_output_length(Eigen::Index length, Eigen::Index kernel,
                                          Eigen::Index stride, Eigen::Index pad) {
  return (length + 2 * pad - kernel) / stride + 1;
}

/// Batched 1-D convolution.
///
/// `x` holds `sequences` independent sequences of `length` steps stacked
/// row-wise, shape (sequences*length) x in_channels. `weight` is
/// (kernel*in_channels) x out_channels with rows ordered (tap, channel).
/// Returns (sequences*out_length) x out_channels.
template <typename S>
Var<S> conv1d(Var<S> x, Eigen::Index sequences, Eigen::Index length, Var<S> weight, Var<S> bias,
              Eigen::Index kernel, Eigen::Index stride, Eigen::Index pad) {
  const Eigen::Index cin = x.cols();
  if (x.rows() != sequences * length) throw ShapeError("conv1d: row count != sequences*length");
  if (weight.rows() != kernel * cin) throw ShapeError("conv1d: weight rows != kernel*in_channels");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw ShapeError("conv1d: bias shape");
  const Eigen::Index lout = conv_output_length(length, kernel, stride, pad);
  if (lout < 1) throw ShapeError("conv1d: sequence shorter than kernel");

  auto col = std::make_shared<Matrix<S>>(sequences * lout, kernel * cin);
  if (pad > 0) col->setZero();
  const auto& xv = x.value();
  for (Eigen::Index s = 0; s < sequences; ++s)
    for (Eigen::Index o = 0; o < lout; ++o) {
      auto dst = col->row(s * lout + o);
      for (Eigen::Index k = 0; k < kernel; ++k) {
        const Eigen::Index t = o * stride + k - pad;
        if (t < 0 || t >= length) continue;
        dst.segment(k * cin, cin) = xv.row(s * length + t);
      }
    }
  Matrix<S> out(sequences * lout, weight.cols());
  out.noalias() = (*col) * weight.value();
  out.rowwise() += bias.value().row(0);

  return x.graph().record(
      std::move(out), {x, weight, bias},
      [=](Graph<S>& g, const Matrix<S>& up) {
        if (g.requires_grad(weight)) g.accumulate(weight, col->transpose() * up);
        if (g.requires_grad(bias)) g.accumulate(bias, up.colwise().sum());
        if (g.requires_grad(x)) {
          Matrix<S> dcol(up.rows(), weight.rows());
          dcol.noalias() = up * weight.value().transpose();
          Matrix<S> dx = Matrix<S>::Zero(sequences * length, cin);
          for (Eigen::Index s = 0; s < sequences; ++s)
            for (Eigen::Index o = 0; o < lout; ++o)
              for (Eigen::Index k = 0; k < kernel; ++k) {
                const Eigen::Index t = o * stride + k - pad;
                if (t < 0 || t >= length) continue;
                dx.row(s * length + t) += dcol.row(s * lout + o).segment(k * cin, cin);
              }
          g.accumulate(x, dx);
        }
      });
}

/// Scaled dot-product attention inside consecutive row groups.
///
/// Rows of q, k, v are split into blocks of `group` rows; each block attends
/// only to itself: out_g = softmax(q_g k_gᵀ · scale) v_g.
template <typename S>
Var<S> group_attention(Var<S> q, Var<S> k, Var<S> v, Eigen::Index group, S scale) {
  const Eigen::Index n = q.rows(), d = q.cols();
  if (k.rows() != n || v.rows() != n || k.cols() != d)
    throw ShapeError("group_attention: q/k/v shapes differ");
  if (group < 1 || n % group != 0) throw ShapeError("group_attention: rows not divisible by group");
  const Eigen::Index groups = n / group;
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();

  // attention weights, groups*group x group
  auto weights = std::make_shared<Matrix<S>>(groups * group, group);
  Matrix<S> out = Matrix<S>::Zero(n, v.cols());
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    const Eigen::Index base = gi * group;
    for (Eigen::Index i = 0; i < group; ++i) {
      S mx = -std::numeric_limits<S>::infinity();
      for (Eigen::Index j = 0; j < group; ++j) {
        const S s = Q.row(base + i).dot(K.row(base + j)) * scale;
        (*weights)(base + i, j) = s;
        mx = std::max(mx, s);
      }
      S z = 0;
      for (Eigen::Index j = 0; j < group; ++j) {
        const S e = std::exp((*weights)(base + i, j) - mx);
        (*weights)(base + i, j) = e;
        z += e;
      }
      for (Eigen::Index j = 0; j < group; ++j) {
        (*weights)(base + i, j) /= z;
        out.row(base + i) += (*weights)(base + i, j) * V.row(base + j);
      }
    }
  }

  return q.graph().record(std::move(out), {q, k, v}, [=](Graph<S>& g, const Matrix<S>& up) {
    const auto& Qv = q.value();
    const auto& Kv = k.value();
    const auto& Vv = v.value();
    Matrix<S> dq = Matrix<S>::Zero(n, d), dk = Matrix<S>::Zero(n, d);
    Matrix<S> dv = Matrix<S>::Zero(n, Vv.cols());
    std::vector<S> da(static_cast<std::size_t>(group)), ds(static_cast<std::size_t>(group));
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      const Eigen::Index base = gi * group;
      for (Eigen::Index i = 0; i < group; ++i) {
        S dot = 0;
        for (Eigen::Index j = 0; j < group; ++j) {
          const S a = (*weights)(base + i, j);
          da[j] = up.row(base + i).dot(Vv.row(base + j));
          dv.row(base + j) += a * up.row(base + i);
          dot += a * da[j];
        }
        for (Eigen::Index j = 0; j < group; ++j) {
          ds[j] = (*weights)(base + i, j) * (da[j] - dot) * scale;
          dq.row(base + i) += ds[j] * Kv.row(base + j);
          dk.row(base + j) += ds[j] * Qv.row(base + i);
        }
      }
    }
    g.accumulate(q, dq);
    g.accumulate(k, dk);
    g.accumulate(v, dv);
  });
}

/// Unidirectional LSTM over a time-major sequence, gate order
/// (input, forget, cell, output).
///
/// x is (steps*batch) x in with step t occupying rows [t*batch, (t+1)*batch);
/// returns the hidden states in the same layout, (steps*batch) x hidden.
template <typename S>
Var<S> lstm(Var<S> x, Var<S> input_weight, Var<S> recurrent_weight, Var<S> bias, Eigen::Index steps,
            Eigen::Index batch) {
  const Eigen::Index H = recurrent_weight.rows();
  if (recurrent_weight.cols() != 4 * H || input_weight.cols() != 4 * H || bias.cols() != 4 * H ||
      input_weight.rows() != x.cols())
    throw ShapeError("lstm: weight shapes inconsistent");
  if (x.rows() != steps * batch) throw ShapeError("lstm: rows != steps*batch");

  // gate activations, cell states and tanh(cell) for every step
  auto gates = std::make_shared<Matrix<S>>(x.value() * input_weight.value());
  gates->rowwise() += bias.value().row(0);
  auto cell = std::make_shared<Matrix<S>>(steps * batch, H);
  auto cell_tanh = std::make_shared<Matrix<S>>(steps * batch, H);
  Matrix<S> hidden(steps * batch, H);
  const auto& Wh = recurrent_weight.value();
  for (Eigen::Index t = 0; t < steps; ++t) {
    auto G = gates->middleRows(t * batch, batch);
    if (t > 0) G.noalias() += hidden.middleRows((t - 1) * batch, batch) * Wh;
    auto sig = [](auto&& block) { block = (S(1) / (S(1) + (-block.array()).exp())).matrix(); };
    sig(G.leftCols(2 * H));
    G.middleCols(2 * H, H) = G.middleCols(2 * H, H).array().tanh().matrix();
    sig(G.rightCols(H));
    auto c = cell->middleRows(t * batch, batch);
    c = G.leftCols(H).cwiseProduct(G.middleCols(2 * H, H));
    if (t > 0) c += G.middleCols(H, H).cwiseProduct(cell->middleRows((t - 1) * batch, batch));
    cell_tanh->middleRows(t * batch, batch) = c.array().tanh().matrix();
    hidden.middleRows(t * batch, batch) = G.rightCols(H).cwiseProduct(cell_tanh->middleRows(t * batch, batch));
  }
  auto hidden_copy = std::make_shared<Matrix<S>>(hidden);

  return x.graph().record(
      std::move(hidden), {x, input_weight, recurrent_weight, bias}, [=](Graph<S>& g, const Matrix<S>& up) {
        const auto& Wh = recurrent_weight.value();
        Matrix<S> dgates(steps * batch, 4 * H);
        Matrix<S> dh_next = Matrix<S>::Zero(batch, H), dc_next = Matrix<S>::Zero(batch, H);
        for (Eigen::Index t = steps - 1; t >= 0; --t) {
          const auto G = gates->middleRows(t * batch, batch);
          const auto i = G.leftCols(H).array();
          const auto f = G.middleCols(H, H).array();
          const auto cand = G.middleCols(2 * H, H).array();
          const auto o = G.rightCols(H).array();
          const auto tc = cell_tanh->middleRows(t * batch, batch).array();
          Matrix<S> dh = up.middleRows(t * batch, batch) + dh_next;
          Matrix<S> dc = (dh.array() * o * (S(1) - tc.square())).matrix() + dc_next;
          auto dG = dgates.middleRows(t * batch, batch);
          dG.leftCols(H) = (dc.array() * cand * i * (S(1) - i)).matrix();
          if (t > 0)
            dG.middleCols(H, H) =
                (dc.array() * cell->middleRows((t - 1) * batch, batch).array() * f * (S(1) - f)).matrix();
          else
            dG.middleCols(H, H).setZero();
          dG.middleCols(2 * H, H) = (dc.array() * i * (S(1) - cand.square())).matrix();
          dG.rightCols(H) = (dh.array() * tc * o * (S(1) - o)).matrix();
          dc_next = (dc.array() * f).matrix();
          if (t > 0) dh_next.noalias() = dG * Wh.transpose();
        }
        if (g.requires_grad(recurrent_weight) && steps > 1)
          g.accumulate(recurrent_weight, hidden_copy->topRows((steps - 1) * batch).transpose() *
                                             dgates.bottomRows((steps - 1) * batch));
        if (g.requires_grad(input_weight)) g.accumulate(input_weight, x.value().transpose() * dgates);
        if (g.requires_grad(bias)) g.accumulate(bias, dgates.colwise().sum());
        if (g.requires_grad(x)) g.accumulate(x, dgates * input_weight.value().transpose());
      });
}

/// Weighted sum over time: values (batch*steps) x d, weights batch x steps.
template <typename S>
Var<S> attention_pool(Var<S> values, Var<S> weights) {
  const Eigen::Index batch = weights.rows(), steps = weights.cols(), d = values.cols();
  if (values.rows() != batch * steps) throw ShapeError("attention_pool: shapes differ");
  const auto& X = values.value();
  const auto& W = weights.value();
  Matrix<S> out = Matrix<S>::Zero(batch, d);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index t = 0; t < steps; ++t) out.row(b) += W(b, t) * X.row(b * steps + t);
  return values.graph().record(std::move(out), {values, weights}, [=](Graph<S>& g, const Matrix<S>& up) {
    const auto& Xv = values.value();
    const auto& Wv = weights.value();
    if (g.requires_grad(values)) {
      Matrix<S> dx(batch * steps, d);
      for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index t = 0; t < steps; ++t) dx.row(b * steps + t) = Wv(b, t) * up.row(b);
      g.accumulate(values, dx);
    }
    if (g.requires_grad(weights)) {
      Matrix<S> dw(batch, steps);
      for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index t = 0; t < steps; ++t) dw(b, t) = up.row(b).dot(Xv.row(b * steps + t));
      g.accumulate(weights, dw);
    }
  });
}

}  // namespace xmodal
