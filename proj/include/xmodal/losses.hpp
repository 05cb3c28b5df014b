#pragma once

// Contrastive and classification objectives.
//
// Every loss is available twice: as a plain function over Eigen matrices
// (values only) and as a Graph operation whose backward pass is the analytic
// gradient. Representations are compared with cosine similarity after
// flattening each instance to one row.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xmodal/autograd.hpp"

namespace xmodal {

inline constexpr double kDegenerateNorm = 1e-12;

struct LossConfig {
  double tau = 0.1;
  double alpha = 1.0;
  std::vector<double> class_weights;

  void validate() const {
    if (!(tau > 0)) throw Error("LossConfig: tau must be positive");
    if (!(alpha >= 0 && alpha <= 1)) throw AlphaRange("alpha must lie in [0, 1]");
    for (double w : class_weights)
      if (!(w > 0)) throw Error("LossConfig: class weights must be positive");
  }
};

namespace detail {

template <typename S>
S checked_norm(const Eigen::Ref<const RowVector<S>>& v) {
  const S n = v.norm();
  if (!(n > S(kDegenerateNorm))) throw DegenerateVector("vector norm <= 1e-12");
  return n;
}

template <typename S>
S log_sum_exp(const Eigen::Ref<const RowVector<S>>& v) {
  const S mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

/// Divides every row by its norm; throws on degenerate rows. Returns norms.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> normalize_rows(const Matrix<S>& x, Matrix<S>& unit) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> norms = x.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i)
    if (!(norms(i) > S(kDegenerateNorm))) throw DegenerateVector("representation row has norm <= 1e-12");
  unit = x.array().colwise() / norms.array();
  return norms;
}

/// Gradient through u = x/|x| given dL/du.
template <typename S>
Matrix<S> unnormalize_grad(const Matrix<S>& unit, const Eigen::Matrix<S, Eigen::Dynamic, 1>& norms,
                           const Matrix<S>& dunit) {
  Eigen::Matrix<S, Eigen::Dynamic, 1> proj = unit.cwiseProduct(dunit).rowwise().sum();
  Matrix<S> dx = dunit - (unit.array().colwise() * proj.array()).matrix();
  dx.array().colwise() /= norms.array();
  return dx;
}

inline void check_labels(std::span<const int> labels, Eigen::Index classes) {
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw LabelRange("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Value-level functions.

/// xᵢᵀxⱼ / (‖xᵢ‖‖xⱼ‖); both arguments are flattened.
template <typename DA, typename DB>
typename DA::Scalar cosine_sim(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using S = typename DA::Scalar;
  if (a.size() != b.size()) throw ShapeMismatch("cosine_sim: sizes differ");
  RowVector<S> av(a.size()), bv(b.size());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) av(i++) = a(r, c);
  i = 0;
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) bv(i++) = b(r, c);
  const S na = detail::checked_norm<S>(av);
  const S nb = detail::checked_norm<S>(bv);
  return av.dot(bv) / (na * nb);
}

/// −log[ exp(sim(x_t, x)/τ) / Σ_p exp(sim(p, x)/τ) ] with p ranging over the
/// rows of `pool`. The anchor `x` is expected to be one of those rows.
template <typename S>
S info_nce(const RowVector<S>& x, const RowVector<S>& x_t, const Matrix<S>& pool, S tau) {
  if (x.size() != x_t.size() || pool.cols() != x.size()) throw ShapeMismatch("info_nce: dims differ");
  if (pool.rows() < 1) throw ShapeMismatch("info_nce: empty pool");
  RowVector<S> logits(pool.rows());
  for (Eigen::Index p = 0; p < pool.rows(); ++p) logits(p) = cosine_sim(pool.row(p), x) / tau;
  return -cosine_sim(x_t, x) / tau + detail::log_sum_exp<S>(logits);
}

template <typename S>
struct InfoNceGradient {
  S value = 0;
  RowVector<S> anchor;    // d/dx, with the pool held fixed
  RowVector<S> positive;  // d/dx_t
  Matrix<S> pool;         // d/dp for each pool row
};

/// Analytic gradient of info_nce with the anchor, positive and pool rows
/// treated as independent arguments.
template <typename S>
InfoNceGradient<S> info_nce_gradient(const RowVector<S>& x, const RowVector<S>& x_t,
                                     const Matrix<S>& pool, S tau) {
  InfoNceGradient<S> g;
  const S nx = detail::checked_norm<S>(x);
  const S nt = detail::checked_norm<S>(x_t);
  const RowVector<S> ux = x / nx, ut = x_t / nt;

  // d sim(a, b)/da = (u_b − sim·u_a)/|a|
  const S s_pos = ut.dot(ux);
  g.anchor = -(ut - s_pos * ux) / (nx * tau);
  g.positive = -(ux - s_pos * ut) / (nt * tau);

  const Eigen::Index P = pool.rows();
  Matrix<S> unit_pool;
  const auto norms = detail::normalize_rows(pool, unit_pool);
  RowVector<S> sims = (unit_pool * ux.transpose()).transpose();
  RowVector<S> logits = sims / tau;
  const S lse = detail::log_sum_exp<S>(logits);
  g.value = -s_pos / tau + lse;
  RowVector<S> w = (logits.array() - lse).exp().matrix();  // softmax over pool
  g.pool.resize(P, x.size());
  for (Eigen::Index p = 0; p < P; ++p) {
    const S coef = w(p) / tau;
    g.pool.row(p) = coef * (ux - sims(p) * unit_pool.row(p)) / norms(p);
    g.anchor += coef * (unit_pool.row(p) - sims(p) * ux) / nx;
  }
  return g;
}

/// (1/N) Σ_k info_nce(X_r^k, X_t^k, rows of X_r). Rows are instances.
template <typename S>
S contrastive_batch(const Matrix<S>& xr, const Matrix<S>& xt, S tau) {
  if (xr.rows() != xt.rows() || xr.cols() != xt.cols()) throw ShapeMismatch("contrastive_batch: shapes differ");
  if (xr.rows() < 1) throw ShapeMismatch("contrastive_batch: empty batch");
  Matrix<S> ur, ut;
  detail::normalize_rows(xr, ur);
  detail::normalize_rows(xt, ut);
  const Matrix<S> sim = (ur * ur.transpose()) / tau;  // symmetric
  const Eigen::Index N = xr.rows();
  S total = 0;
  for (Eigen::Index k = 0; k < N; ++k)
    total += -ur.row(k).dot(ut.row(k)) / tau + detail::log_sum_exp<S>(sim.row(k));
  return total / static_cast<S>(N);
}

/// α·L_CO(R_t, T_s2t) + (1−α)·L_CO(R_s, T_t2s); instances are rows.
template <typename S>
S weighted_contrastive(const Matrix<S>& r_t, const Matrix<S>& t_s2t, const Matrix<S>& r_s,
                       const Matrix<S>& t_t2s, S alpha, S tau) {
  if (!(alpha >= 0 && alpha <= 1)) throw AlphaRange("alpha must lie in [0, 1]");
  if (r_t.rows() != r_s.rows() || r_t.cols() != t_s2t.cols() || r_s.cols() != t_t2s.cols())
    throw ShapeMismatch("weighted_contrastive: shapes differ");
  S out = 0;
  if (alpha != S(0)) out += alpha * contrastive_batch(r_t, t_s2t, tau);
  if (alpha != S(1)) out += (S(1) - alpha) * contrastive_batch(r_s, t_t2s, tau);
  return out;
}

/// Σ_i w_{y_i}·(−log softmax(logits_i)[y_i]) / Σ_i w_{y_i}.
template <typename S>
S weighted_cross_entropy(const Matrix<S>& logits, std::span<const int> labels,
                         std::span<const double> class_weights) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()))
    throw ShapeMismatch("weighted_cross_entropy: batch size differs from label count");
  if (logits.cols() != static_cast<Eigen::Index>(class_weights.size()))
    throw ShapeMismatch("weighted_cross_entropy: class count differs from weight count");
  detail::check_labels(labels, logits.cols());
  S num = 0, den = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const S w = static_cast<S>(class_weights[labels[i]]);
    num += w * (detail::log_sum_exp<S>(logits.row(i)) - logits(i, labels[i]));
    den += w;
  }
  return num / den;
}

/// CE(P_s, y) + CE(P_t, y).
template <typename S>
S classification_loss(const Matrix<S>& p_s, const Matrix<S>& p_t, std::span<const int> labels,
                      std::span<const double> class_weights) {
  if (p_s.rows() != p_t.rows() || p_s.cols() != p_t.cols())
    throw ShapeMismatch("classification_loss: prediction shapes differ");
  return weighted_cross_entropy(p_s, labels, class_weights) +
         weighted_cross_entropy(p_t, labels, class_weights);
}

/// Shared-representation objective: the classification loss applied to the
/// source and target encoder branches.
template <typename S>
S shared_rep_loss(const Matrix<S>& logits_src, const Matrix<S>& logits_tgt, std::span<const int> labels,
                  std::span<const double> class_weights) {
  return classification_loss(logits_src, logits_tgt, labels, class_weights);
}

// ---------------------------------------------------------------------------
// Graph operations.

/// L_CO over `batch` instances; each Var is reshaped to batch x (size/batch).
template <typename S>
Var<S> contrastive_batch(Var<S> xr, Var<S> xt, S tau, Eigen::Index batch) {
  if (xr.value().size() != xt.value().size() || batch < 1 || xr.value().size() % batch != 0)
    throw ShapeMismatch("contrastive_batch: shapes differ");
  const Eigen::Index D = xr.value().size() / batch;
  const Matrix<S> r = Eigen::Map<const Matrix<S>>(xr.value().data(), batch, D);
  const Matrix<S> t = Eigen::Map<const Matrix<S>>(xt.value().data(), batch, D);

  auto ur = std::make_shared<Matrix<S>>();
  auto ut = std::make_shared<Matrix<S>>();
  auto nr = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, 1>>(detail::normalize_rows(r, *ur));
  auto nt = std::make_shared<Eigen::Matrix<S, Eigen::Dynamic, 1>>(detail::normalize_rows(t, *ut));

  // logits(k, i) = sim(X_r^i, X_r^k)/τ, softmax over i for each anchor k
  Matrix<S> logits = ((*ur) * ur->transpose()) / tau;
  auto prob = std::make_shared<Matrix<S>>(batch, batch);
  S total = 0;
  for (Eigen::Index k = 0; k < batch; ++k) {
    const S lse = detail::log_sum_exp<S>(logits.row(k));
    prob->row(k) = (logits.row(k).array() - lse).exp().matrix();
    total += -ur->row(k).dot(ut->row(k)) / tau + lse;
  }
  Matrix<S> out(1, 1);
  out(0, 0) = total / static_cast<S>(batch);

  return xr.graph().record(std::move(out), {xr, xt}, [=](Graph<S>& g, const Matrix<S>& up) {
    const S c = up(0, 0) / (static_cast<S>(batch) * tau);
    // d/dS where S = U_r U_rᵀ is symmetric in use: dU_r = (P + Pᵀ) U_r · c
    Matrix<S> dur = ((*prob) + prob->transpose()) * (*ur) * c;
    dur -= (*ut) * c;
    Matrix<S> dut = -(*ur) * c;
    if (g.requires_grad(xr)) {
      Matrix<S> dx = detail::unnormalize_grad(*ur, *nr, dur);
      g.accumulate(xr, Eigen::Map<const Matrix<S>>(dx.data(), xr.rows(), xr.cols()));
    }
    if (g.requires_grad(xt)) {
      Matrix<S> dx = detail::unnormalize_grad(*ut, *nt, dut);
      g.accumulate(xt, Eigen::Map<const Matrix<S>>(dx.data(), xt.rows(), xt.cols()));
    }
  });
}

template <typename S>
Var<S> weighted_cross_entropy(Var<S> logits, std::span<const int> labels,
                              std::span<const double> class_weights) {
  const auto& L = logits.value();
  const S value = weighted_cross_entropy(L, labels, class_weights);
  auto grad = std::make_shared<Matrix<S>>(softmax_rows_value(L));
  S den = 0;
  for (int y : labels) den += static_cast<S>(class_weights[y]);
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const S w = static_cast<S>(class_weights[labels[i]]) / den;
    grad->row(i) *= w;
    (*grad)(i, labels[i]) -= w;
  }
  Matrix<S> out(1, 1);
  out(0, 0) = value;
  return logits.graph().record(std::move(out), {logits}, [=](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(logits, (*grad) * up(0, 0));
  });
}

template <typename S>
Var<S> classification_loss(Var<S> p_s, Var<S> p_t, std::span<const int> labels,
                           std::span<const double> class_weights) {
  if (p_s.rows() != p_t.rows() || p_s.cols() != p_t.cols())
    throw ShapeMismatch("classification_loss: prediction shapes differ");
  return add(weighted_cross_entropy(p_s, labels, class_weights),
             weighted_cross_entropy(p_t, labels, class_weights));
}

/// Weighted blend of the two directional contrastive terms. Terms with zero
/// weight are not evaluated, so they contribute no gradient at all.
template <typename S>
Var<S> weighted_contrastive(Var<S> r_t, Var<S> t_s2t, Var<S> r_s, Var<S> t_t2s, S alpha, S tau,
                            Eigen::Index batch) {
  if (!(alpha >= 0 && alpha <= 1)) throw AlphaRange("alpha must lie in [0, 1]");
  if (alpha == S(1)) return scale(contrastive_batch(r_t, t_s2t, tau, batch), alpha);
  if (alpha == S(0)) return scale(contrastive_batch(r_s, t_t2s, tau, batch), S(1) - alpha);
  return add(scale(contrastive_batch(r_t, t_s2t, tau, batch), alpha),
             scale(contrastive_batch(r_s, t_t2s, tau, batch), S(1) - alpha));
}

}  // namespace xmodal
