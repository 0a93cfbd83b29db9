#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value is a 2-D matrix; row vectors (1 x d) are used for single
// embeddings and probability vectors. A Var is a cheap handle to a node of the
// computation graph; graphs are built eagerly by the free functions below and
// released when the last handle goes away.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace empathy::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
using IndexMatrix = Eigen::MatrixXi;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Matrix value);
  static Var parameter(Matrix value);
  static Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  // Mutable access for optimizers, checkpoint loading and finite differences.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Runs backpropagation from a 1x1 root, accumulating into every reachable
// node that requires a gradient.
void backward(const Var& root);

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast 1 x c over rows
Var broadcast_rows(const Var& row, Eigen::Index n);
Var transpose(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
// log(max(a, floor)); gradient is zero where the floor is active.
Var log_floor(const Var& a, double floor = 1e-12);

Var sum(const Var& a);
Var mean(const Var& a);
Var mean_rows(const Var& a);  // n x c -> 1 x c

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const int> index);

// out(i, j) = a(i, index(i, j)); negative indices yield 0.
Var gather_per_row(const Var& a, const IndexMatrix& index);
// out(i, j) = a(row(i, j), col(i, j)); negative indices yield 0.
Var gather_table(const Var& a, const IndexMatrix& row, const IndexMatrix& col);
// Column vector of a(r, c) for each (r, c).
Var pick(const Var& a, std::span<const std::pair<int, int>> cells);

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);

// Row-wise softmax. Entries where mask is false receive exactly zero weight;
// a row with no admissible entry is an error. An empty mask admits all.
Var softmax_rows(const Var& logits, const BoolMatrix& mask = {});
Var log_softmax_rows(const Var& logits);
// Row-wise log-sum-exp over admissible entries, returning n x 1.
Var logsumexp_rows(const Var& a, const BoolMatrix& mask = {});

}  // namespace empathy::ag
