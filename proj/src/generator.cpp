#include "empathy/generator.hpp"

#include "empathy/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace empathy {

Var fuse_empathy_signals(const Var& context_states, const Var& r_cog, const Var& r_aff, const nn::Linear& mlp) {
  const auto len = context_states.rows();
  const Var parts[] = {context_states, ag::broadcast_rows(r_cog, len), ag::broadcast_rows(r_aff, len)};
  return ag::relu(mlp(ag::concat_cols(parts)));
}

ag::BoolMatrix causal_mask(Eigen::Index n) {
  ag::BoolMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j <= i;
  }
  return m;
}

DecoderLayer DecoderLayer::create(nn::ParameterSet& params, const std::string& name, int dim, int heads, int hidden,
                                  nn::Rng& rng) {
  DecoderLayer l;
  l.self_attention = nn::MultiHeadAttention::create(params, name + ".self", dim, heads, rng);
  l.self_norm = nn::LayerNorm::create(params, name + ".self_norm", dim);
  l.cs_attention = nn::MultiHeadAttention::create(params, name + ".cs", dim, heads, rng);
  l.cs_norm = nn::LayerNorm::create(params, name + ".cs_norm", dim);
  l.ec_attention = nn::MultiHeadAttention::create(params, name + ".ec", dim, heads, rng);
  l.ec_norm = nn::LayerNorm::create(params, name + ".ec_norm", dim);
  l.context_attention = nn::MultiHeadAttention::create(params, name + ".ctx", dim, heads, rng);
  l.context_norm = nn::LayerNorm::create(params, name + ".ctx_norm", dim);
  l.ffn = nn::FeedForward::create(params, name + ".ffn", dim, hidden, rng);
  l.ffn_norm = nn::LayerNorm::create(params, name + ".ffn_norm", dim);
  return l;
}

Var DecoderLayer::operator()(const Var& x, const DecoderMemory& memory, bool concepts_first,
                             nn::AttentionTrace* trace, const std::string& label) const {
  Var h = self_norm(ag::add(x, self_attention(x, x, causal_mask(x.rows()), {}, nullptr, trace, label + ".self")));
  auto cs_step = [&](const Var& in) {
    if (!memory.cs_memory.defined()) return in;
    return cs_norm(ag::add(in, cs_attention(in, memory.cs_memory, {}, {}, nullptr, trace, label + ".cs")));
  };
  auto ec_step = [&](const Var& in) {
    if (!memory.ec_memory.defined()) return in;
    return ec_norm(ag::add(in, ec_attention(in, memory.ec_memory, {}, {}, nullptr, trace, label + ".ec")));
  };
  h = concepts_first ? cs_step(ec_step(h)) : ec_step(cs_step(h));
  h = context_norm(
      ag::add(h, context_attention(h, memory.fused_context, {}, {}, nullptr, trace, label + ".ctx")));
  return ffn_norm(ag::add(h, ffn(h)));
}

Decoder Decoder::create(nn::ParameterSet& params, int dim, int heads, int hidden, int depth, int vocab_size,
                        nn::Rng& rng) {
  Decoder d;
  for (int i = 0; i < depth; ++i) {
    d.layers.push_back(DecoderLayer::create(params, "decoder.layer" + std::to_string(i), dim, heads, hidden, rng));
  }
  d.output = nn::Linear::create(params, "decoder.output", dim, vocab_size, rng);
  return d;
}

Var Decoder::logits(std::span<const int> input_ids, const DecoderMemory& memory, const EmbeddingTable& table,
                    nn::AttentionTrace* trace) const {
  if (!memory.fused_context.defined()) throw ShapeError("decoder memory lacks the fused context");
  Var h = table.embed(input_ids);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h, memory, concepts_first, trace, "decoder.layer" + std::to_string(i));
  }
  return output(h);
}

namespace {

std::vector<std::pair<int, int>> target_cells(const Var& logits, std::span<const int> targets, int pad_id) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("one target per logits row required");
  }
  std::vector<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == pad_id) continue;
    if (targets[i] < 0 || targets[i] >= logits.cols()) throw ShapeError("target id out of range");
    cells.emplace_back(static_cast<int>(i), targets[i]);
  }
  if (cells.empty()) throw ShapeError("target sequence contains only padding");
  return cells;
}

}  // namespace

TokenLoss generation_loss(const Var& logits, std::span<const int> targets, int pad_id) {
  const auto cells = target_cells(logits, targets, pad_id);
  Var total = ag::scale(ag::sum(ag::pick(ag::log_softmax_rows(logits), cells)), -1.0);
  const int n = static_cast<int>(cells.size());
  return {ag::scale(total, 1.0 / n), total, n};
}

std::vector<double> diversity_weights(std::span<const long> token_counts, double epsilon) {
  long max_count = 0;
  for (long c : token_counts) max_count = std::max(max_count, c);
  std::vector<double> w(token_counts.size(), 1.0);
  if (max_count == 0) return w;
  for (std::size_t i = 0; i < token_counts.size(); ++i) {
    const double rf = static_cast<double>(token_counts[i]) / static_cast<double>(max_count);
    w[i] = std::max(epsilon, 1.0 - rf);
  }
  return w;
}

Var diversity_loss(const Var& logits, std::span<const int> targets, std::span<const double> vocab_weights,
                   int pad_id) {
  if (static_cast<Eigen::Index>(vocab_weights.size()) != logits.cols()) {
    throw ShapeError("one diversity weight per vocabulary entry required");
  }
  const auto cells = target_cells(logits, targets, pad_id);
  ag::Matrix w(static_cast<Eigen::Index>(cells.size()), 1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    w(static_cast<Eigen::Index>(i), 0) = vocab_weights[static_cast<std::size_t>(cells[i].second)];
  }
  const double mean_w = w.mean();
  if (!(mean_w > 0.0)) throw ShapeError("diversity weights must be positive");
  w /= mean_w;
  Var nll = ag::scale(ag::pick(ag::log_softmax_rows(logits), cells), -1.0);
  return ag::scale(ag::sum(ag::mul(nll, Var::constant(w))), 1.0 / static_cast<double>(cells.size()));
}

GenerationOutput greedy_decode(const StepFunction& step, int max_steps) {
  GenerationOutput out;
  std::vector<int> prefix{Vocabulary::kBos};
  for (int s = 0; s < max_steps; ++s) {
    ag::RowVector scores = step(prefix);
    const double mx = scores.maxCoeff();
    const double lse = mx + std::log((scores.array() - mx).exp().sum());
    for (int banned : {Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kCls}) {
      if (banned < scores.size()) scores(banned) = -std::numeric_limits<double>::infinity();
    }
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    const int token = static_cast<int>(best);
    if (token == Vocabulary::kEos) {
      out.terminated = true;
      break;
    }
    out.tokens.push_back(token);
    out.log_probs.push_back(scores(best) - lse);
    prefix.push_back(token);
  }
  return out;
}

GenerationOutput greedy_decode(const Decoder& decoder, const DecoderMemory& memory, const EmbeddingTable& table,
                               int max_steps) {
  return greedy_decode(
      [&](std::span<const int> prefix) -> ag::RowVector {
        Var logits = decoder.logits(prefix, memory, table);
        return logits.value().row(logits.rows() - 1);
      },
      max_steps);
}

Var total_loss(const Var& align, const Var& emotion, const Var& generation, const Var& diversity,
               const LossWeights& weights) {
  Var total = Var::scalar(0.0);
  auto add_term = [&](const Var& v, double gamma) {
    if (v.defined() && gamma != 0.0) total = ag::add(total, ag::scale(v, gamma));
  };
  add_term(align, weights.align);
  add_term(emotion, weights.emotion);
  add_term(generation, weights.generation);
  add_term(diversity, weights.diversity);
  return total;
}

}  // namespace empathy
