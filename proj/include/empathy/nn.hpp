#pragma once

// Parameter registry and the transformer building blocks shared by every
// encoder and the decoder.

#include "empathy/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace empathy::nn {

using ag::BoolMatrix;
using ag::Matrix;
using ag::Var;

class ParameterSet {
 public:
  Var add(const std::string& name, Matrix init);

  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  const Var* find(const std::string& name) const;
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

using Rng = std::mt19937_64;

// Uniform in +-sqrt(6 / (rows + cols)).
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Sinusoidal position encodings for the given positions.
Matrix sinusoid_positions(const std::vector<int>& positions, int dim);

// Records attention distributions for inspection by tests and tools.
struct AttentionTrace {
  struct Entry {
    std::string label;
    Matrix weights;
    BoolMatrix mask;  // empty when every entry was admissible
  };
  std::vector<Entry> entries;
};

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out, undefined when the layer has no bias

  static Linear create(ParameterSet& params, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true);
  Var operator()(const Var& x) const;
};

struct LayerNorm {
  Var gain;
  Var bias;

  static LayerNorm create(ParameterSet& params, const std::string& name, int dim);
  Var operator()(const Var& x) const { return ag::layer_norm(x, gain, bias); }
};

struct FeedForward {
  Linear expand;
  Linear contract;

  static FeedForward create(ParameterSet& params, const std::string& name, int dim, int hidden, Rng& rng);
  Var operator()(const Var& x) const { return contract(ag::relu(expand(x))); }
};

// Per-pair relation embeddings injected into queries and keys. Index -1
// marks pairs without a relation (they are masked anyway).
struct RelationInjection {
  Var bank;                 // (2 * relations) x d
  ag::IndexMatrix query;    // slot used by query i toward key k
  ag::IndexMatrix key;      // slot used by key k toward query i
};

struct MultiHeadAttention {
  int heads = 1;
  Var wq;
  Var wk;
  Var wv;
  Linear out;

  static MultiHeadAttention create(ParameterSet& params, const std::string& name, int dim, int heads,
                                   Rng& rng);

  // `mask` is (queries x keys); `logit_bias` is added to every head's logits
  // before the softmax. Both may be empty.
  Var operator()(const Var& queries, const Var& keys, const BoolMatrix& mask = {},
                 const Matrix& logit_bias = {}, const RelationInjection* relations = nullptr,
                 AttentionTrace* trace = nullptr, const std::string& label = {}) const;
};

// Post-norm transformer encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
  MultiHeadAttention attention;
  LayerNorm attention_norm;
  FeedForward ffn;
  LayerNorm ffn_norm;

  static EncoderLayer create(ParameterSet& params, const std::string& name, int dim, int heads, int hidden,
                             Rng& rng);
  Var operator()(const Var& x, const BoolMatrix& mask = {}, const Matrix& logit_bias = {},
                 const RelationInjection* relations = nullptr, AttentionTrace* trace = nullptr,
                 const std::string& label = {}) const;
};

struct TransformerEncoder {
  std::vector<EncoderLayer> layers;

  static TransformerEncoder create(ParameterSet& params, const std::string& name, int dim, int heads,
                                   int hidden, int depth, Rng& rng);
  Var operator()(const Var& x, const BoolMatrix& mask = {}, const Matrix& logit_bias = {},
                 const RelationInjection* relations = nullptr, AttentionTrace* trace = nullptr,
                 const std::string& label = {}) const;
};

}  // namespace empathy::nn
