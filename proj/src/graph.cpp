#include "empathy/graph.hpp"

#include "empathy/errors.hpp"

#include <algorithm>
#include <numeric>

namespace empathy {

CsTag cs_tag_for(Relation r) {
  switch (r) {
    case Relation::kIntent: return CsTag::kIntent;
    case Relation::kNeed: return CsTag::kNeed;
    case Relation::kWant: return CsTag::kWant;
    case Relation::kEffect: return CsTag::kEffect;
    case Relation::kReact: break;
  }
  throw DataError("xReact is not a cognition graph relation");
}

std::string_view cs_tag_name(CsTag tag) {
  switch (tag) {
    case CsTag::kNone: return "none";
    case CsTag::kSelfLoop: return "self_loop";
    case CsTag::kGlobal: return "global";
    case CsTag::kTemporal: return "temporal";
    case CsTag::kIntent: return "xIntent";
    case CsTag::kNeed: return "xNeed";
    case CsTag::kWant: return "xWant";
    case CsTag::kEffect: return "xEffect";
  }
  return "?";
}

std::string_view ec_tag_name(EcTag tag) {
  switch (tag) {
    case EcTag::kNone: return "none";
    case EcTag::kSelfLoop: return "self_loop";
    case EcTag::kGlobal: return "global";
    case EcTag::kTemporal: return "temporal";
    case EcTag::kEmotionalConcept: return "emotional_concept";
  }
  return "?";
}

CognitionGraph build_cognition_graph(const DialogueSample& sample, const CommonsenseCache& cache,
                                     MissPolicy policy, int max_segments) {
  if (sample.context.empty()) throw DataError("sample " + sample.id + " has no context");
  const auto segments = segment_last_utterance(sample.context.back(), max_segments);
  const int subs = static_cast<int>(segments.size());
  const int l = cache.l();

  CognitionGraph g;
  g.sub_utterance_count = subs;
  for (const auto& s : segments) g.vertices.push_back(join_tokens(s));
  for (int i = 0; i < subs; ++i) {
    const std::string text = g.vertices[static_cast<std::size_t>(i)];
    for (Relation r : kCognitionRelations) {
      const auto inferences = cache.lookup(text, r, policy);
      for (int j = 0; j < l; ++j) {
        g.vertices.push_back(inferences[static_cast<std::size_t>(j)]);
        g.provenance.push_back({i, r, j + 1});
      }
    }
    g.reactions.push_back(cache.lookup(text, Relation::kReact, policy));
  }

  const int n = g.vertex_count();
  g.relation = TagMatrix<CsTag>(n);
  for (int v = 0; v < n; ++v) g.relation.set(v, v, CsTag::kSelfLoop);
  for (int i = 1; i < subs; ++i) g.relation.set_undirected(0, i, CsTag::kGlobal);
  for (int i = 1; i + 1 < subs; ++i) g.relation.set_undirected(i, i + 1, CsTag::kTemporal);
  for (int k = 0; k < g.knowledge_count(); ++k) {
    const auto& src = g.provenance[static_cast<std::size_t>(k)];
    g.relation.set_undirected(src.sub_utterance, g.knowledge_begin() + k, cs_tag_for(src.relation));
  }
  return g;
}

EmotionConceptGraph build_emotion_concept_graph(const DialogueSample& sample, const ConceptStore& store,
                                                int n_prime) {
  if (n_prime < 1) throw DataError("n_prime must be >= 1");
  const Tokens tokens = sample.context_tokens();
  EmotionConceptGraph g;
  g.token_count = static_cast<int>(tokens.size());
  g.vertices.push_back(std::string(kClsToken));
  g.intensity.push_back(0.0);
  g.type.push_back(VertexType::kCls);
  g.anchor.push_back(-1);
  g.position.push_back(0);
  for (int i = 0; i < g.token_count; ++i) {
    g.vertices.push_back(tokens[static_cast<std::size_t>(i)]);
    g.intensity.push_back(0.0);
    g.type.push_back(VertexType::kToken);
    g.anchor.push_back(-1);
    g.position.push_back(i + 1);
  }
  for (int i = 0; i < g.token_count; ++i) {
    for (const auto& c : select_concepts(tokens[static_cast<std::size_t>(i)], store, n_prime)) {
      g.vertices.push_back(c.concept_text);
      g.intensity.push_back(c.eta);
      g.type.push_back(VertexType::kConcept);
      g.anchor.push_back(i + 1);
      g.position.push_back(i + 1);
    }
  }

  const int n = g.vertex_count();
  g.relation = TagMatrix<EcTag>(n);
  for (int v = 0; v < n; ++v) g.relation.set(v, v, EcTag::kSelfLoop);
  for (int v = 1; v < n; ++v) g.relation.set_undirected(0, v, EcTag::kGlobal);
  for (int v = 1; v < g.token_count; ++v) g.relation.set_undirected(v, v + 1, EcTag::kTemporal);
  for (int v = 1 + g.token_count; v < n; ++v) {
    g.relation.set_undirected(g.anchor[static_cast<std::size_t>(v)], v, EcTag::kEmotionalConcept);
  }
  return g;
}

namespace {

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<int>& keep) {
  std::vector<T> out;
  out.reserve(keep.size());
  for (int k : keep) out.push_back(v[static_cast<std::size_t>(k)]);
  return out;
}

}  // namespace

CognitionGraph truncate_graph(const CognitionGraph& graph, int max_vertices) {
  if (max_vertices < graph.sub_utterance_count) {
    throw DataError("truncation bound " + std::to_string(max_vertices) +
                    " is below the structural minimum " + std::to_string(graph.sub_utterance_count));
  }
  const int excess = graph.vertex_count() - max_vertices;
  if (excess <= 0) return graph;

  std::vector<int> order(static_cast<std::size_t>(graph.knowledge_count()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const int ra = graph.provenance[static_cast<std::size_t>(a)].rank;
    const int rb = graph.provenance[static_cast<std::size_t>(b)].rank;
    if (ra != rb) return ra > rb;
    return a > b;
  });
  std::vector<bool> dropped(static_cast<std::size_t>(graph.knowledge_count()), false);
  for (int i = 0; i < excess; ++i) dropped[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  std::vector<int> keep;
  std::vector<int> kept_knowledge;
  for (int v = 0; v < graph.sub_utterance_count; ++v) keep.push_back(v);
  for (int k = 0; k < graph.knowledge_count(); ++k) {
    if (!dropped[static_cast<std::size_t>(k)]) {
      keep.push_back(graph.knowledge_begin() + k);
      kept_knowledge.push_back(k);
    }
  }
  CognitionGraph out;
  out.sub_utterance_count = graph.sub_utterance_count;
  out.vertices = take(graph.vertices, keep);
  out.relation = graph.relation.select(keep);
  out.provenance = take(graph.provenance, kept_knowledge);
  out.reactions = graph.reactions;
  return out;
}

EmotionConceptGraph truncate_graph(const EmotionConceptGraph& graph, int max_vertices) {
  const int minimum = 1 + graph.token_count;
  if (max_vertices < minimum) {
    throw DataError("truncation bound " + std::to_string(max_vertices) +
                    " is below the structural minimum " + std::to_string(minimum));
  }
  const int excess = graph.vertex_count() - max_vertices;
  if (excess <= 0) return graph;

  std::vector<int> concepts;
  for (int v = minimum; v < graph.vertex_count(); ++v) concepts.push_back(v);
  std::stable_sort(concepts.begin(), concepts.end(), [&](int a, int b) {
    const double ea = graph.intensity[static_cast<std::size_t>(a)];
    const double eb = graph.intensity[static_cast<std::size_t>(b)];
    if (ea != eb) return ea < eb;
    return a > b;
  });
  std::vector<bool> dropped(static_cast<std::size_t>(graph.vertex_count()), false);
  for (int i = 0; i < excess; ++i) dropped[static_cast<std::size_t>(concepts[static_cast<std::size_t>(i)])] = true;

  std::vector<int> keep;
  for (int v = 0; v < graph.vertex_count(); ++v) {
    if (!dropped[static_cast<std::size_t>(v)]) keep.push_back(v);
  }
  EmotionConceptGraph out;
  out.token_count = graph.token_count;
  out.vertices = take(graph.vertices, keep);
  out.intensity = take(graph.intensity, keep);
  out.type = take(graph.type, keep);
  out.anchor = take(graph.anchor, keep);  // anchors are token vertices, never re-indexed
  out.position = take(graph.position, keep);
  out.relation = graph.relation.select(keep);
  return out;
}

namespace {

template <typename Tag, typename NameFn>
nlohmann::json edges_json(const TagMatrix<Tag>& m, NameFn name) {
  auto edges = nlohmann::json::array();
  for (int a = 0; a < m.size(); ++a) {
    for (int b = a; b < m.size(); ++b) {
      if (m.connected(a, b)) edges.push_back({a, b, name(m.at(a, b))});
    }
  }
  return edges;
}

}  // namespace

nlohmann::json to_debug_json(const CognitionGraph& graph) {
  return {{"vertices", graph.vertices},
          {"edges", edges_json(graph.relation, cs_tag_name)},
          {"eta", std::vector<double>(graph.vertices.size(), 0.0)}};
}

nlohmann::json to_debug_json(const EmotionConceptGraph& graph) {
  return {{"vertices", graph.vertices},
          {"edges", edges_json(graph.relation, ec_tag_name)},
          {"eta", graph.intensity}};
}

}  // namespace empathy
