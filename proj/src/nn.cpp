#include "empathy/nn.hpp"

#include "empathy/errors.hpp"

#include <cmath>

namespace empathy::nn {

Var ParameterSet::add(const std::string& name, Matrix init) {
  if (find(name)) throw ShapeError("duplicate parameter name " + name);
  Var v = Var::parameter(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

const Var* ParameterSet::find(const std::string& name) const {
  for (const auto& [n, v] : items_) {
    if (n == name) return &v;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : items_) {
    Var copy = v;
    copy.zero_grad();
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

Matrix sinusoid_positions(const std::vector<int>& positions, int dim) {
  Matrix m(static_cast<Eigen::Index>(positions.size()), dim);
  for (std::size_t p = 0; p < positions.size(); ++p) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      const double angle = positions[p] * rate;
      m(static_cast<Eigen::Index>(p), i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return m;
}

Linear Linear::create(ParameterSet& params, const std::string& name, int in, int out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = params.add(name + ".weight", xavier_uniform(in, out, rng));
  if (with_bias) l.bias = params.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(const Var& x) const {
  Var y = ag::matmul(x, weight);
  return bias.defined() ? ag::add_row(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, int dim) {
  return {params.add(name + ".gain", Matrix::Ones(1, dim)), params.add(name + ".bias", Matrix::Zero(1, dim))};
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& name, int dim, int hidden, Rng& rng) {
  return {Linear::create(params, name + ".expand", dim, hidden, rng),
          Linear::create(params, name + ".contract", hidden, dim, rng)};
}

MultiHeadAttention MultiHeadAttention::create(ParameterSet& params, const std::string& name, int dim,
                                              int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw ShapeError("model width " + std::to_string(dim) + " is not divisible by " +
                     std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.heads = heads;
  m.wq = params.add(name + ".wq", xavier_uniform(dim, dim, rng));
  m.wk = params.add(name + ".wk", xavier_uniform(dim, dim, rng));
  m.wv = params.add(name + ".wv", xavier_uniform(dim, dim, rng));
  m.out = Linear::create(params, name + ".out", dim, dim, rng);
  return m;
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& keys, const BoolMatrix& mask,
                                   const Matrix& logit_bias, const RelationInjection* relations,
                                   AttentionTrace* trace, const std::string& label) const {
  const Eigen::Index dim = wq.rows();
  if (queries.cols() != dim || keys.cols() != dim) throw ShapeError("attention input width mismatch");
  const Eigen::Index dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Var q = ag::matmul(queries, wq);
  Var k = ag::matmul(keys, wk);
  Var v = ag::matmul(keys, wv);
  Var lq;
  Var lk;
  if (relations) {
    if (queries.rows() != keys.rows() || relations->query.rows() != queries.rows() ||
        relations->query.cols() != keys.rows()) {
      throw ShapeError("relation injection needs square self-attention indices");
    }
    lq = ag::matmul(relations->bank, wq);
    lk = ag::matmul(relations->bank, wk);
  }

  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = ag::slice_cols(q, h * dh, dh);
    Var kh = ag::slice_cols(k, h * dh, dh);
    Var vh = ag::slice_cols(v, h * dh, dh);
    Var logits = ag::matmul(qh, ag::transpose(kh));
    if (relations) {
      // (q_i + l_q)(k_k + l_k) expanded into four dot-product terms.
      Var lqh = ag::slice_cols(lq, h * dh, dh);
      Var lkh = ag::slice_cols(lk, h * dh, dh);
      logits = ag::add(logits, ag::gather_per_row(ag::matmul(qh, ag::transpose(lkh)), relations->key));
      ag::IndexMatrix qt = relations->query.transpose();
      logits = ag::add(logits,
                       ag::transpose(ag::gather_per_row(ag::matmul(kh, ag::transpose(lqh)), qt)));
      logits = ag::add(logits, ag::gather_table(ag::matmul(lqh, ag::transpose(lkh)), relations->query,
                                                relations->key));
    }
    logits = ag::scale(logits, inv_sqrt);
    if (logit_bias.size() != 0) logits = ag::add(logits, Var::constant(logit_bias));
    Var weights = ag::softmax_rows(logits, mask);
    if (trace) trace->entries.push_back({label + ".head" + std::to_string(h), weights.value(), mask});
    outputs.push_back(ag::matmul(weights, vh));
  }
  return out(ag::concat_cols(outputs));
}

EncoderLayer EncoderLayer::create(ParameterSet& params, const std::string& name, int dim, int heads,
                                  int hidden, Rng& rng) {
  EncoderLayer l;
  l.attention = MultiHeadAttention::create(params, name + ".attn", dim, heads, rng);
  l.attention_norm = LayerNorm::create(params, name + ".attn_norm", dim);
  l.ffn = FeedForward::create(params, name + ".ffn", dim, hidden, rng);
  l.ffn_norm = LayerNorm::create(params, name + ".ffn_norm", dim);
  return l;
}

Var EncoderLayer::operator()(const Var& x, const BoolMatrix& mask, const Matrix& logit_bias,
                             const RelationInjection* relations, AttentionTrace* trace,
                             const std::string& label) const {
  Var h = attention_norm(ag::add(x, attention(x, x, mask, logit_bias, relations, trace, label)));
  return ffn_norm(ag::add(h, ffn(h)));
}

TransformerEncoder TransformerEncoder::create(ParameterSet& params, const std::string& name, int dim,
                                              int heads, int hidden, int depth, Rng& rng) {
  TransformerEncoder e;
  for (int i = 0; i < depth; ++i) {
    e.layers.push_back(EncoderLayer::create(params, name + ".layer" + std::to_string(i), dim, heads, hidden, rng));
  }
  return e;
}

Var TransformerEncoder::operator()(const Var& x, const BoolMatrix& mask, const Matrix& logit_bias,
                                   const RelationInjection* relations, AttentionTrace* trace,
                                   const std::string& label) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h, mask, logit_bias, relations, trace, label + ".layer" + std::to_string(i));
  }
  return h;
}

}  // namespace empathy::nn
