#include "empathy/autograd.hpp"

#include "empathy/errors.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace empathy::ag {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var Var::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

double Var::item() const {
  if (rows() != 1 || cols() != 1) {
    throw ShapeError("item() on a " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                     " value");
  }
  return node_->value(0, 0);
}

namespace {

Var make(Matrix value, std::initializer_list<Var> inputs, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

Var make_n(Matrix value, std::span<const Var> inputs, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

void push(Node& self, std::size_t i, const Matrix& g) {
  auto& p = self.parents[i];
  if (p->requires_grad) p->accumulate(g);
}

bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

bool admits(const BoolMatrix& mask, Eigen::Index i, Eigen::Index j) {
  return mask.size() == 0 || mask(i, j);
}

void check_mask(const BoolMatrix& mask, const Matrix& m, const char* op) {
  if (mask.size() != 0 && (mask.rows() != m.rows() || mask.cols() != m.cols())) {
    throw ShapeError(std::string(op) + ": mask shape mismatch");
  }
}

}  // namespace

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return make(a.value() * b.value(), {a, b}, [](Node& s) {
    if (wants(s, 0)) push(s, 0, s.grad * s.parents[1]->value.transpose());
    if (wants(s, 1)) push(s, 1, s.parents[0]->value.transpose() * s.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(a.value() + b.value(), {a, b}, [](Node& s) {
    push(s, 0, s.grad);
    push(s, 1, s.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(a.value() - b.value(), {a, b}, [](Node& s) {
    push(s, 0, s.grad);
    if (wants(s, 1)) push(s, 1, -s.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& s) {
    if (wants(s, 0)) push(s, 0, s.grad.cwiseProduct(s.parents[1]->value));
    if (wants(s, 1)) push(s, 1, s.grad.cwiseProduct(s.parents[0]->value));
  });
}

Var scale(const Var& a, double k) {
  return make(a.value() * k, {a}, [k](Node& s) { push(s, 0, s.grad * k); });
}

Var add_scalar(const Var& a, double k) {
  return make(a.value().array() + k, {a}, [](Node& s) { push(s, 0, s.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row shape mismatch");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make(std::move(out), {a, row}, [](Node& s) {
    push(s, 0, s.grad);
    if (wants(s, 1)) push(s, 1, s.grad.colwise().sum());
  });
}

Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a row vector");
  Matrix out = row.value().replicate(n, 1);
  return make(std::move(out), {row}, [](Node& s) { push(s, 0, s.grad.colwise().sum()); });
}

Var transpose(const Var& a) {
  return make(a.value().transpose(), {a}, [](Node& s) { push(s, 0, s.grad.transpose()); });
}

Var relu(const Var& a) {
  return make(a.value().cwiseMax(0.0), {a}, [](Node& s) {
    const Matrix& x = s.parents[0]->value;
    push(s, 0, (x.array() > 0.0).cast<double>().matrix().cwiseProduct(s.grad));
  });
}

Var tanh(const Var& a) {
  return make(a.value().array().tanh().matrix(), {a}, [](Node& s) {
    push(s, 0, (1.0 - s.value.array().square()).matrix().cwiseProduct(s.grad));
  });
}

Var sigmoid(const Var& a) {
  Matrix y = a.value().unaryExpr([](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make(std::move(y), {a}, [](Node& s) {
    push(s, 0, (s.value.array() * (1.0 - s.value.array())).matrix().cwiseProduct(s.grad));
  });
}

Var exp(const Var& a) {
  return make(a.value().array().exp().matrix(), {a},
              [](Node& s) { push(s, 0, s.value.cwiseProduct(s.grad)); });
}

Var log_floor(const Var& a, double floor) {
  Matrix y = a.value().unaryExpr([floor](double x) { return std::log(std::max(x, floor)); });
  return make(std::move(y), {a}, [floor](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = x.unaryExpr([floor](double v) { return v > floor ? 1.0 / v : 0.0; });
    push(s, 0, g.cwiseProduct(s.grad));
  });
}

Var sum(const Var& a) {
  return make(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& s) {
    const Matrix& x = s.parents[0]->value;
    push(s, 0, Matrix::Constant(x.rows(), x.cols(), s.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows of an empty matrix");
  const double n = static_cast<double>(a.rows());
  return make(a.value().colwise().mean(), {a}, [n](Node& s) {
    push(s, 0, (s.grad / n).replicate(s.parents[0]->value.rows(), 1));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_n(std::move(out), parts, [](Node& s) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < s.parents.size(); ++i) {
      const Eigen::Index c = s.parents[i]->value.cols();
      if (wants(s, i)) push(s, i, s.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_n(std::move(out), parts, [](Node& s) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < s.parents.size(); ++i) {
      const Eigen::Index r = s.parents[i]->value.rows();
      if (wants(s, i)) push(s, i, s.grad.middleRows(at, r));
      at += r;
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows out of range");
  return make(a.value().middleRows(start, count), {a}, [start, count](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = s.grad;
    push(s, 0, g);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols out of range");
  return make(a.value().middleCols(start, count), {a}, [start, count](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = s.grad;
    push(s, 0, g);
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range [0, " +
                       std::to_string(a.rows()) + ")");
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make(std::move(out), {a}, [idx = std::move(idx)](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += s.grad.row(static_cast<Eigen::Index>(i));
    push(s, 0, g);
  });
}

Var gather_per_row(const Var& a, const IndexMatrix& index) {
  if (index.rows() != a.rows()) throw ShapeError("gather_per_row: row count mismatch");
  Matrix out = Matrix::Zero(index.rows(), index.cols());
  for (Eigen::Index i = 0; i < index.rows(); ++i) {
    for (Eigen::Index j = 0; j < index.cols(); ++j) {
      const int c = index(i, j);
      if (c >= a.cols()) throw ShapeError("gather_per_row: index out of range");
      if (c >= 0) out(i, j) = a.value()(i, c);
    }
  }
  return make(std::move(out), {a}, [index](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < index.rows(); ++i) {
      for (Eigen::Index j = 0; j < index.cols(); ++j) {
        if (index(i, j) >= 0) g(i, index(i, j)) += s.grad(i, j);
      }
    }
    push(s, 0, g);
  });
}

Var gather_table(const Var& a, const IndexMatrix& row, const IndexMatrix& col) {
  if (row.rows() != col.rows() || row.cols() != col.cols()) {
    throw ShapeError("gather_table: index shape mismatch");
  }
  Matrix out = Matrix::Zero(row.rows(), row.cols());
  for (Eigen::Index i = 0; i < row.rows(); ++i) {
    for (Eigen::Index j = 0; j < row.cols(); ++j) {
      const int r = row(i, j);
      const int c = col(i, j);
      if (r >= a.rows() || c >= a.cols()) throw ShapeError("gather_table: index out of range");
      if (r >= 0 && c >= 0) out(i, j) = a.value()(r, c);
    }
  }
  return make(std::move(out), {a}, [row, col](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < row.rows(); ++i) {
      for (Eigen::Index j = 0; j < row.cols(); ++j) {
        if (row(i, j) >= 0 && col(i, j) >= 0) g(row(i, j), col(i, j)) += s.grad(i, j);
      }
    }
    push(s, 0, g);
  });
}

Var pick(const Var& a, std::span<const std::pair<int, int>> cells) {
  Matrix out(static_cast<Eigen::Index>(cells.size()), 1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [r, c] = cells[i];
    if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw ShapeError("pick: cell out of range");
    out(static_cast<Eigen::Index>(i), 0) = a.value()(r, c);
  }
  std::vector<std::pair<int, int>> saved(cells.begin(), cells.end());
  return make(std::move(out), {a}, [saved = std::move(saved)](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < saved.size(); ++i) {
      g(saved[i].first, saved[i].second) += s.grad(static_cast<Eigen::Index>(i), 0);
    }
    push(s, 0, g);
  });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = a.rows();
  const Eigen::Index c = a.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ShapeError("layer_norm: parameter shape mismatch");
  }
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = a.value().row(i).mean();
    const double var = (a.value().row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (a.value().row(i).array() - mu) * inv_std(i);
  }
  Matrix out = xhat;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = xhat.row(i).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  }
  return make(std::move(out), {a, gain, bias}, [xhat, inv_std](Node& s) {
    const Matrix& g = s.parents[1]->value;
    if (wants(s, 0)) {
      Matrix dx(xhat.rows(), xhat.cols());
      for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        Eigen::RowVectorXd dxh = s.grad.row(i).cwiseProduct(g.row(0));
        const double m1 = dxh.mean();
        const double m2 = dxh.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) = (dxh.array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
      }
      push(s, 0, dx);
    }
    if (wants(s, 1)) push(s, 1, s.grad.cwiseProduct(xhat).colwise().sum());
    if (wants(s, 2)) push(s, 2, s.grad.colwise().sum());
  });
}

Var softmax_rows(const Var& logits, const BoolMatrix& mask) {
  const Matrix& x = logits.value();
  check_mask(mask, x, "softmax_rows");
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (admits(mask, i, j)) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) throw ShapeError("softmax_rows: row " + std::to_string(i) + " fully masked");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (admits(mask, i, j)) {
        y(i, j) = std::exp(x(i, j) - mx);
        z += y(i, j);
      }
    }
    y.row(i) /= z;
  }
  return make(std::move(y), {logits}, [](Node& s) {
    const Matrix& y = s.value;
    Eigen::VectorXd dot = s.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = s.grad;
    g.colwise() -= dot;
    push(s, 0, y.cwiseProduct(g));
  });
}

Var log_softmax_rows(const Var& logits) {
  const Matrix& x = logits.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  return make(std::move(y), {logits}, [](Node& s) {
    Matrix p = s.value.array().exp();
    Eigen::VectorXd total = s.grad.rowwise().sum();
    Matrix g = s.grad;
    for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) -= p.row(i) * total(i);
    push(s, 0, g);
  });
}

Var logsumexp_rows(const Var& a, const BoolMatrix& mask) {
  const Matrix& x = a.value();
  check_mask(mask, x, "logsumexp_rows");
  Matrix out(x.rows(), 1);
  Matrix weights = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (admits(mask, i, j)) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) throw ShapeError("logsumexp_rows: row " + std::to_string(i) + " fully masked");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (admits(mask, i, j)) {
        weights(i, j) = std::exp(x(i, j) - mx);
        z += weights(i, j);
      }
    }
    weights.row(i) /= z;
    out(i, 0) = mx + std::log(z);
  }
  return make(std::move(out), {a}, [weights](Node& s) {
    Matrix g = weights;
    for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) *= s.grad(i, 0);
    push(s, 0, g);
  });
}

}  // namespace empathy::ag
