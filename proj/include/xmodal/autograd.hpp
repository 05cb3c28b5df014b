#pragma once

// Minimal reverse-mode differentiation over dense row-major Eigen matrices.
//
// A Graph records every operation applied to its Vars together with a
// closure that propagates the upstream gradient to the operation's inputs.
// Tensors of rank 3 are carried as 2-D matrices whose rows enumerate the two
// leading axes (e.g. batch x time) so that reshapes are free.

#include <Eigen/Dense>

#include <cassert>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/errors.hpp"

namespace xmodal {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// A named trainable tensor and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

template <typename Scalar>
class Graph;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  const Matrix<Scalar>& value() const { return graph_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph<Scalar>& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Graph&, const Mat& upstream)>;

  /// A non-recording graph evaluates forward passes only (eval mode).
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), nullptr, false});
    return last();
  }

  /// A leaf whose gradient is kept on the graph (used for inputs under test).
  Var<Scalar> variable(Mat value) {
    nodes_.push_back(Node{std::move(value), Mat(), nullptr, record_});
    return last();
  }

  /// A leaf bound to a Parameter; backward accumulates into `p.grad`.
  Var<Scalar> parameter(Parameter<Scalar>& p, bool trainable = true) {
    if (!record_ || !trainable) return constant(p.value);
    Parameter<Scalar>* target = &p;
    nodes_.push_back(Node{p.value, Mat(),
                          [target](Graph&, const Mat& up) { target->grad += up; }, true});
    return last();
  }

  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var<Scalar>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<Scalar> record(Mat value, std::span<const Var<Scalar>> inputs, Backward backward) {
    bool needs = false;
    if (record_)
      for (const auto& in : inputs) needs = needs || requires_grad(in);
    nodes_.push_back(Node{std::move(value), Mat(), needs ? std::move(backward) : nullptr, needs});
    return last();
  }

  bool requires_grad(Var<Scalar> v) const { return nodes_[v.id()].requires_grad; }
  const Mat& value(Var<Scalar> v) const { return nodes_[v.id()].value; }
  const Mat& grad(Var<Scalar> v) const { return nodes_[v.id()].grad; }

  template <typename Derived>
  void accumulate(Var<Scalar> v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Adds `g` into the block of v's gradient starting at (row, col).
  template <typename Derived>
  void accumulate_block(Var<Scalar> v, Eigen::Index row, Eigen::Index col,
                        const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  /// Reverse sweep from a scalar root.
  void backward(Var<Scalar> root) {
    if (root.rows() != 1 || root.cols() != 1)
      throw ShapeError("backward() requires a 1x1 root");
    if (!requires_grad(root)) return;
    nodes_[root.id()].grad = Mat::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<Scalar> last() { return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1); }

  std::deque<Node> nodes_;
  bool record_;
};

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra operations.

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix<S> out = a.value() * b.value();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph<S>& g, const Matrix<S>& up) {
    if (g.requires_grad(a)) g.accumulate(a, up * b.value().transpose());
    if (g.requires_grad(b)) g.accumulate(b, a.value().transpose() * up);
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shapes differ");
  Matrix<S> out = a.value() + b.value();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(a, up);
    g.accumulate(b, up);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("sub: shapes differ");
  Matrix<S> out = a.value() - b.value();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(a, up);
    g.accumulate(b, -up);
  });
}

/// x + 1·bias, broadcasting a 1 x n bias over rows.
template <typename S>
Var<S> add_bias(Var<S> x, Var<S> bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ShapeError("add_bias: bias shape");
  Matrix<S> out = x.value().rowwise() + bias.value().row(0);
  return x.graph().record(std::move(out), {x, bias}, [x, bias](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, up);
    if (g.requires_grad(bias)) g.accumulate(bias, up.colwise().sum());
  });
}

template <typename S>
Var<S> scale(Var<S> x, S factor) {
  Matrix<S> out = x.value() * factor;
  return x.graph().record(std::move(out), {x}, [x, factor](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, up * factor);
  });
}

template <typename S>
Var<S> hadamard(Var<S> a, Var<S> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("hadamard: shapes differ");
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph<S>& g, const Matrix<S>& up) {
    if (g.requires_grad(a)) g.accumulate(a, up.cwiseProduct(b.value()));
    if (g.requires_grad(b)) g.accumulate(b, up.cwiseProduct(a.value()));
  });
}

template <typename S>
Var<S> relu(Var<S> x) {
  Matrix<S> out = x.value().cwiseMax(S(0));
  return x.graph().record(std::move(out), {x}, [x](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, (x.value().array() > S(0)).select(up, S(0)));
  });
}

template <typename S>
Var<S> tanh(Var<S> x) {
  Matrix<S> y = x.value().array().tanh().matrix();
  Matrix<S> dy = (S(1) - y.array().square()).matrix();
  return x.graph().record(std::move(y), {x}, [x, dy = std::move(dy)](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, up.cwiseProduct(dy));
  });
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Matrix<S> y = (S(1) / (S(1) + (-x.value().array()).exp())).matrix();
  Matrix<S> dy = (y.array() * (S(1) - y.array())).matrix();
  return x.graph().record(std::move(y), {x}, [x, dy = std::move(dy)](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, up.cwiseProduct(dy));
  });
}

/// Columns [start, start + n).
template <typename S>
Var<S> cols(Var<S> x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.cols()) throw ShapeError("cols: range out of bounds");
  Matrix<S> out = x.value().middleCols(start, n);
  return x.graph().record(std::move(out), {x}, [x, start](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate_block(x, 0, start, up);
  });
}

/// Rows [start, start + n).
template <typename S>
Var<S> rows(Var<S> x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.rows()) throw ShapeError("rows: range out of bounds");
  Matrix<S> out = x.value().middleRows(start, n);
  return x.graph().record(std::move(out), {x}, [x, start](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate_block(x, start, 0, up);
  });
}

template <typename S>
Var<S> concat_rows(std::span<const Var<S>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index total = 0;
  const Eigen::Index c = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  Matrix<S> out(total, c);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var<S>> inputs(parts.begin(), parts.end());
  return parts.front().graph().record(
      std::move(out), parts, [inputs](Graph<S>& g, const Matrix<S>& up) {
        Eigen::Index offset = 0;
        for (const auto& p : inputs) {
          if (g.requires_grad(p)) g.accumulate(p, up.middleRows(offset, p.rows()));
          offset += p.rows();
        }
      });
}

/// Row-major reinterpretation; the element order is unchanged.
template <typename S>
Var<S> reshape(Var<S> x, Eigen::Index r, Eigen::Index c) {
  if (r * c != x.value().size()) throw ShapeError("reshape: element count differs");
  Matrix<S> out = Eigen::Map<const Matrix<S>>(x.value().data(), r, c);
  return x.graph().record(std::move(out), {x}, [x](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, Eigen::Map<const Matrix<S>>(up.data(), x.rows(), x.cols()));
  });
}

/// out.row(i) = x.row(index[i]); backward scatter-adds.
template <typename S>
Var<S> gather_rows(Var<S> x, std::vector<Eigen::Index> index) {
  const auto& xv = x.value();
  Matrix<S> out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= xv.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = xv.row(index[i]);
  }
  return x.graph().record(std::move(out), {x},
                          [x, index = std::move(index)](Graph<S>& g, const Matrix<S>& up) {
                            Matrix<S> dx = Matrix<S>::Zero(x.rows(), x.cols());
                            for (std::size_t i = 0; i < index.size(); ++i)
                              dx.row(index[i]) += up.row(static_cast<Eigen::Index>(i));
                            g.accumulate(x, dx);
                          });
}

template <typename S>
Matrix<S> softmax_rows_value(const Matrix<S>& x) {
  Matrix<S> out = x.colwise() - x.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

template <typename S>
Var<S> softmax_rows(Var<S> x) {
  Matrix<S> y = softmax_rows_value(x.value());
  Matrix<S> ycopy = y;
  return x.graph().record(std::move(y), {x}, [x, y = std::move(ycopy)](Graph<S>& g, const Matrix<S>& up) {
    Eigen::Matrix<S, Eigen::Dynamic, 1> dot = up.cwiseProduct(y).rowwise().sum();
    Matrix<S> dx = up.colwise() - dot;
    g.accumulate(x, dx.cwiseProduct(y));
  });
}

/// Sum of all elements as a 1x1 Var.
template <typename S>
Var<S> sum(Var<S> x) {
  Matrix<S> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.graph().record(std::move(out), {x}, [x](Graph<S>& g, const Matrix<S>& up) {
    g.accumulate(x, Matrix<S>::Constant(x.rows(), x.cols(), up(0, 0)));
  });
}

}  // namespace xmodal
