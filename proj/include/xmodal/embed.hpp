#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "xmodal/dataset.hpp"

namespace xmodal {

struct Pca {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // D x k, orthonormal columns, largest variance first
  Eigen::VectorXd variance;    // k

  /// Rows of `x` projected onto the components.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

/// Principal axes of the rows of `x`; keeps min(k, D) components.
Pca pca_fit(const Eigen::MatrixXd& x, int k);

struct TsneOptions {
  double perplexity = 30;
  int iterations = 1000;
  double learning_rate = 200;
  double exaggeration = 12;
  int exaggeration_iterations = 250;
};

/// Exact (O(N^2) per iteration) t-SNE to two dimensions.
Eigen::MatrixXd tsne(const Eigen::MatrixXd& x, std::uint64_t seed, const TsneOptions& options = {});

/// Flattened windows -> PCA(20) -> t-SNE(2). Throws TooFewWindows for N <= 20.
Eigen::MatrixXd embed_tsne(const WindowedDataset& view, std::uint64_t seed, const TsneOptions& options = {});

}  // namespace xmodal
