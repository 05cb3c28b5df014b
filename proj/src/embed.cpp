#include "xmodal/embed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

namespace xmodal {

Eigen::MatrixXd Pca::transform(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean) * components;
}

Pca pca_fit(const Eigen::MatrixXd& x, int k) {
  if (x.rows() < 2) throw TooFewWindows("PCA needs at least two rows");
  const Eigen::Index d = x.cols();
  k = static_cast<int>(std::min<Eigen::Index>(k, d));
  Pca p;
  p.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - p.mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues come out ascending
  p.components = es.eigenvectors().rightCols(k).rowwise().reverse();
  p.variance = es.eigenvalues().tail(k).reverse();
  // fix the sign so that the largest-magnitude loading of each axis is positive
  for (int c = 0; c < k; ++c) {
    Eigen::Index i = 0;
    p.components.col(c).cwiseAbs().maxCoeff(&i);
    if (p.components(i, c) < 0) p.components.col(c) *= -1;
  }
  return p;
}

namespace {

// Row-conditional affinities with per-row precision found by bisection on
// the entropy, then symmetrized.
Eigen::MatrixXd joint_affinities(const Eigen::MatrixXd& x, double perplexity) {
  const Eigen::Index n = x.rows();
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * x * x.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);

  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1, lo = 0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 200; ++it) {
      double sum = 0, dsum = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-d2(i, j) * beta);
        sum += row(j);
        dsum += d2(i, j) * row(j);
      }
      sum = std::max(sum, 1e-300);
      const double h = std::log(sum) + beta * dsum / sum;
      if (std::abs(h - target) < 1e-5) break;
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
      } else {
        hi = beta;
        beta = (beta + lo) / 2;
      }
    }
    p.row(i) = row.transpose() / std::max(row.sum(), 1e-300);
  }
  Eigen::MatrixXd joint = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return joint.cwiseMax(1e-12);
}

}  // namespace

Eigen::MatrixXd tsne(const Eigen::MatrixXd& x, std::uint64_t seed, const TsneOptions& o) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw TooFewWindows("t-SNE needs at least two rows");
  const double perplexity = std::min(o.perplexity, (static_cast<double>(n) - 1) / 3.0);
  Eigen::MatrixXd p = joint_affinities(x, std::max(perplexity, 1.0));
  for (Eigen::Index i = 0; i < n; ++i) p(i, i) = 0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = normal(rng), y(i, 1) = normal(rng);

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2), gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd num(n, n), grad(n, 2);
  for (int it = 0; it < o.iterations; ++it) {
    const double exag = it < o.exaggeration_iterations ? o.exaggeration : 1.0;
    const double momentum = it < o.exaggeration_iterations ? 0.5 : 0.8;
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    num = (-2.0 * y * y.transpose()).colwise() + sq;
    num.rowwise() += sq.transpose();
    num = (1.0 + num.array()).inverse().matrix();
    num.diagonal().setZero();
    const double qsum = std::max(num.sum(), 1e-300);
    // dC/dy_i = 4 sum_j (exag p_ij - q_ij) num_ij (y_i - y_j)
    const Eigen::MatrixXd w = ((exag * p).array() - num.array() / qsum).matrix().cwiseProduct(num);
    grad = 4.0 * (w.rowwise().sum().asDiagonal() * y - w * y);

    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        const bool same = (grad(i, c) > 0) == (velocity(i, c) > 0);
        gains(i, c) = std::max(same ? gains(i, c) * 0.8 : gains(i, c) + 0.2, 0.01);
      }
    velocity = momentum * velocity - o.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

Eigen::MatrixXd embed_tsne(const WindowedDataset& view, std::uint64_t seed, const TsneOptions& options) {
  if (view.size() <= 20)
    throw TooFewWindows("embedding needs more than 20 windows, got " + std::to_string(view.size()));
  const Eigen::MatrixXd x = view.windows.cast<double>();
  const Pca p = pca_fit(x, 20);
  return tsne(p.transform(x), seed, options);
}

}  // namespace xmodal
