#pragma once

// Empathy-aware decoder: fused context memory, two knowledge cross-attention
// sublayers, generation / diversity losses and greedy decoding.

#include "empathy/encoders.hpp"

#include <functional>
#include <span>
#include <vector>

namespace empathy {

inline constexpr int kMaxDecodeSteps = 30;

struct DecoderMemory {
  Var fused_context;  // S'_X, len x d
  Var cs_memory;      // |K_CS| x d, undefined when the cognition graph is disabled
  Var ec_memory;      // |V_EC| x d, undefined when the concept graph is disabled
};

// ReLU(MLP([S_X[i]; r_cog; r_aff])) for every position i.
Var fuse_empathy_signals(const Var& context_states, const Var& r_cog, const Var& r_aff, const nn::Linear& mlp);

ag::BoolMatrix causal_mask(Eigen::Index n);

// Sublayers, each followed by residual + LayerNorm: masked self-attention,
// commonsense cross-attention, concept cross-attention (swappable order),
// context cross-attention, feed-forward.
struct DecoderLayer {
  nn::MultiHeadAttention self_attention;
  nn::LayerNorm self_norm;
  nn::MultiHeadAttention cs_attention;
  nn::LayerNorm cs_norm;
  nn::MultiHeadAttention ec_attention;
  nn::LayerNorm ec_norm;
  nn::MultiHeadAttention context_attention;
  nn::LayerNorm context_norm;
  nn::FeedForward ffn;
  nn::LayerNorm ffn_norm;

  static DecoderLayer create(nn::ParameterSet& params, const std::string& name, int dim, int heads, int hidden,
                             nn::Rng& rng);
  Var operator()(const Var& x, const DecoderMemory& memory, bool concepts_first = false,
                 nn::AttentionTrace* trace = nullptr, const std::string& label = {}) const;
};

struct Decoder {
  std::vector<DecoderLayer> layers;
  nn::Linear output;  // d -> |vocab|
  bool concepts_first = false;

  static Decoder create(nn::ParameterSet& params, int dim, int heads, int hidden, int depth, int vocab_size,
                        nn::Rng& rng);
  // Logits for every input position (len x |vocab|).
  Var logits(std::span<const int> input_ids, const DecoderMemory& memory, const EmbeddingTable& table,
             nn::AttentionTrace* trace = nullptr) const;
};

struct TokenLoss {
  Var mean;  // per-token mean NLL over non-PAD targets
  Var sum;   // summed NLL, for perplexity
  int count = 0;
};

TokenLoss generation_loss(const Var& logits, std::span<const int> targets, int pad_id = 0);

// w(y) = max(eps, 1 - count(y) / max count), one weight per vocabulary id.
std::vector<double> diversity_weights(std::span<const long> token_counts, double epsilon);

// Frequency-weighted NLL; the weights applied to the non-PAD targets are
// renormalized to mean 1 before averaging.
Var diversity_loss(const Var& logits, std::span<const int> targets, std::span<const double> vocab_weights,
                   int pad_id = 0);

struct GenerationOutput {
  std::vector<int> tokens;  // without BOS and EOS
  std::vector<double> log_probs;
  bool terminated = false;  // EOS emitted before the cap
};

// Next-token scores given the prefix (which starts with BOS).
using StepFunction = std::function<ag::RowVector(std::span<const int> prefix)>;

// Argmax decoding from BOS; PAD, BOS and CLS are never emitted.
GenerationOutput greedy_decode(const StepFunction& step, int max_steps = kMaxDecodeSteps);
GenerationOutput greedy_decode(const Decoder& decoder, const DecoderMemory& memory, const EmbeddingTable& table,
                               int max_steps = kMaxDecodeSteps);

struct LossWeights {
  double align = 1.0;
  double emotion = 1.0;
  double generation = 1.0;
  double diversity = 1.5;
};

// gamma_1 L_align + gamma_2 L_emo + gamma_3 L_gen + gamma_4 L_div; undefined
// components count as zero.
Var total_loss(const Var& align, const Var& emotion, const Var& generation, const Var& diversity,
               const LossWeights& weights = {});

}  // namespace empathy
