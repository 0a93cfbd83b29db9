#pragma once

// Context, sentence, reaction and fusion encoders plus the two graph
// transformers (relation-enhanced and intensity-biased vanilla).

#include "empathy/graph.hpp"
#include "empathy/nn.hpp"

#include <span>
#include <vector>

namespace empathy {

using ag::Var;

struct EmbeddingTable {
  Var words;  // |vocab| x d, shared by every encoder and the decoder
  Var types;  // 2 x d: row 0 for tokens and CLS, row 1 for emotional concepts

  static EmbeddingTable create(nn::ParameterSet& params, ag::Matrix word_init, nn::Rng& rng);
  int dim() const { return static_cast<int>(words.cols()); }

  // Word embedding plus sinusoidal position; positions default to 0..n-1.
  Var embed(std::span<const int> ids, const std::vector<int>& positions = {}) const;
};

struct EncodedSequence {
  Var states;   // len x d
  Var summary;  // 1 x d, row 0
};

// Two learnable vectors per cognition-graph relation, one per edge direction.
struct RelationEmbeddingBank {
  Var vectors;  // 14 x d, row 2 * (tag - 1) + direction

  static RelationEmbeddingBank create(nn::ParameterSet& params, const std::string& name, int dim,
                                      nn::Rng& rng);
};

// `ids` must already start with CLS.
EncodedSequence encode_context(std::span<const int> ids, const EmbeddingTable& table,
                               const nn::TransformerEncoder& encoder, nn::AttentionTrace* trace = nullptr);

// Prepends CLS to each text and returns the CLS states stacked as rows.
Var encode_sentence_batch(const std::vector<std::vector<int>>& texts, const EmbeddingTable& table,
                          const nn::TransformerEncoder& encoder);

// Query slot for pair (i, k) uses the i->k direction, key slot the k->i one.
// Direction 0 runs from the lower to the higher vertex index (and self-loops).
nn::RelationInjection relation_injection(const TagMatrix<CsTag>& relation, const RelationEmbeddingBank& bank);

ag::BoolMatrix adjacency_mask(const TagMatrix<CsTag>& relation);
ag::BoolMatrix adjacency_mask(const TagMatrix<EcTag>& relation);

Var relational_graph_attention(const Var& vertex_states, const TagMatrix<CsTag>& relation,
                               const RelationEmbeddingBank& bank, const nn::TransformerEncoder& encoder,
                               nn::AttentionTrace* trace = nullptr);

// Adds intensity[k] to every attention logit toward vertex k.
Var vanilla_graph_attention(const Var& vertex_states, const TagMatrix<EcTag>& relation,
                            std::span<const double> intensity, const nn::TransformerEncoder& encoder,
                            nn::AttentionTrace* trace = nullptr);

// Initial G_EC vertex states: word + position + type embeddings.
Var embed_concept_graph(const EmotionConceptGraph& graph, const Vocabulary& vocab, const EmbeddingTable& table);

// Mean of the encoder states over the concatenated reaction tokens.
Var encode_reaction(std::span<const int> ids, const EmbeddingTable& table, const nn::TransformerEncoder& encoder);

// [S_X[j]; h] for every position, projected back to d, encoded, CLS row returned.
Var fuse_reaction_context(const EncodedSequence& context, const Var& reaction, const nn::Linear& projection,
                          const nn::TransformerEncoder& fusion);

}  // namespace empathy
