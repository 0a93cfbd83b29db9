#include "empathy/encoders.hpp"

#include "empathy/errors.hpp"

#include <numeric>

namespace empathy {

EmbeddingTable EmbeddingTable::create(nn::ParameterSet& params, ag::Matrix word_init, nn::Rng& rng) {
  const auto dim = word_init.cols();
  EmbeddingTable t;
  t.words = params.add("embedding.words", std::move(word_init));
  t.types = params.add("embedding.types", nn::xavier_uniform(2, dim, rng));
  return t;
}

Var EmbeddingTable::embed(std::span<const int> ids, const std::vector<int>& positions) const {
  if (ids.empty()) throw ShapeError("cannot embed an empty sequence");
  std::vector<int> pos = positions;
  if (pos.empty()) {
    pos.resize(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
  }
  if (pos.size() != ids.size()) throw ShapeError("position count differs from token count");
  return ag::add(ag::gather_rows(words, ids), Var::constant(nn::sinusoid_positions(pos, dim())));
}

RelationEmbeddingBank RelationEmbeddingBank::create(nn::ParameterSet& params, const std::string& name, int dim,
                                                    nn::Rng& rng) {
  return {params.add(name, nn::xavier_uniform(2 * kCsRelationCount, dim, rng))};
}

EncodedSequence encode_context(std::span<const int> ids, const EmbeddingTable& table,
                               const nn::TransformerEncoder& encoder, nn::AttentionTrace* trace) {
  Var states = encoder(table.embed(ids), {}, {}, nullptr, trace, "context");
  return {states, ag::slice_rows(states, 0, 1)};
}

Var encode_sentence_batch(const std::vector<std::vector<int>>& texts, const EmbeddingTable& table,
                          const nn::TransformerEncoder& encoder) {
  if (texts.empty()) throw ShapeError("encode_sentence_batch needs at least one text");
  std::vector<Var> rows;
  rows.reserve(texts.size());
  for (const auto& text : texts) {
    if (text.empty()) throw ShapeError("cannot encode an empty sentence");
    std::vector<int> ids;
    ids.reserve(text.size() + 1);
    ids.push_back(Vocabulary::kCls);
    ids.insert(ids.end(), text.begin(), text.end());
    rows.push_back(ag::slice_rows(encoder(table.embed(ids)), 0, 1));
  }
  return ag::concat_rows(rows);
}

nn::RelationInjection relation_injection(const TagMatrix<CsTag>& relation, const RelationEmbeddingBank& bank) {
  const int n = relation.size();
  nn::RelationInjection inj{bank.vectors, ag::IndexMatrix::Constant(n, n, -1),
                            ag::IndexMatrix::Constant(n, n, -1)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const auto tag = relation.at(i, k);
      if (tag == CsTag::kNone) continue;
      const int slot = 2 * (static_cast<int>(tag) - 1);
      inj.query(i, k) = slot + (i <= k ? 0 : 1);
      inj.key(i, k) = slot + (k <= i ? 0 : 1);
    }
  }
  return inj;
}

namespace {

template <typename Tag>
ag::BoolMatrix mask_of(const TagMatrix<Tag>& relation) {
  const int n = relation.size();
  ag::BoolMatrix m(n, n);
  for (int i = 0; i < n; ++i) {
    bool any = false;
    for (int k = 0; k < n; ++k) {
      m(i, k) = relation.connected(i, k);
      any = any || m(i, k);
    }
    if (!any) throw ShapeError("graph vertex " + std::to_string(i) + " has no edges");
  }
  return m;
}

}  // namespace

ag::BoolMatrix adjacency_mask(const TagMatrix<CsTag>& relation) { return mask_of(relation); }
ag::BoolMatrix adjacency_mask(const TagMatrix<EcTag>& relation) { return mask_of(relation); }

Var relational_graph_attention(const Var& vertex_states, const TagMatrix<CsTag>& relation,
                               const RelationEmbeddingBank& bank, const nn::TransformerEncoder& encoder,
                               nn::AttentionTrace* trace) {
  if (relation.size() != vertex_states.rows()) throw ShapeError("relation matrix does not match vertex count");
  const auto mask = adjacency_mask(relation);
  const auto inj = relation_injection(relation, bank);
  return encoder(vertex_states, mask, {}, &inj, trace, "cs_graph");
}

Var vanilla_graph_attention(const Var& vertex_states, const TagMatrix<EcTag>& relation,
                            std::span<const double> intensity, const nn::TransformerEncoder& encoder,
                            nn::AttentionTrace* trace) {
  const int n = relation.size();
  if (n != vertex_states.rows()) throw ShapeError("relation matrix does not match vertex count");
  if (static_cast<int>(intensity.size()) != n) throw ShapeError("intensity length does not match vertex count");
  const auto mask = adjacency_mask(relation);
  ag::Matrix bias(n, n);
  for (int k = 0; k < n; ++k) bias.col(k).setConstant(intensity[static_cast<std::size_t>(k)]);
  return encoder(vertex_states, mask, bias, nullptr, trace, "ec_graph");
}

Var embed_concept_graph(const EmotionConceptGraph& graph, const Vocabulary& vocab, const EmbeddingTable& table) {
  std::vector<int> ids;
  std::vector<int> type_ids;
  ids.reserve(graph.vertices.size());
  for (int v = 0; v < graph.vertex_count(); ++v) {
    const auto type = graph.type[static_cast<std::size_t>(v)];
    ids.push_back(type == VertexType::kCls ? Vocabulary::kCls : vocab.id(graph.vertices[static_cast<std::size_t>(v)]));
    type_ids.push_back(type == VertexType::kConcept ? 1 : 0);
  }
  return ag::add(table.embed(ids, graph.position), ag::gather_rows(table.types, type_ids));
}

Var encode_reaction(std::span<const int> ids, const EmbeddingTable& table, const nn::TransformerEncoder& encoder) {
  if (ids.empty()) throw ShapeError("reaction sequence is empty");
  return ag::mean_rows(encoder(table.embed(ids)));
}

Var fuse_reaction_context(const EncodedSequence& context, const Var& reaction, const nn::Linear& projection,
                          const nn::TransformerEncoder& fusion) {
  const auto len = context.states.rows();
  if (len == 0) throw ShapeError("empty context states");
  if (reaction.rows() != 1 || reaction.cols() != context.states.cols()) {
    throw ShapeError("reaction vector width mismatch");
  }
  const Var parts[] = {context.states, ag::broadcast_rows(reaction, len)};
  Var widened = ag::concat_cols(parts);
  return ag::slice_rows(fusion(projection(widened)), 0, 1);
}

}  // namespace empathy
