#pragma once

// Heterogeneous commonsense-cognition and emotional-concept graphs.

#include "empathy/knowledge.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace empathy {

// Square matrix of edge tags. Tag 0 always means "no edge".
template <typename Tag>
class TagMatrix {
 public:
  TagMatrix() = default;
  explicit TagMatrix(int n) : n_(n), tags_(static_cast<std::size_t>(n) * n, Tag{}) {}

  int size() const { return n_; }
  Tag at(int a, int b) const { return tags_[index(a, b)]; }
  void set(int a, int b, Tag tag) { tags_[index(a, b)] = tag; }
  void set_undirected(int a, int b, Tag tag) {
    set(a, b, tag);
    set(b, a, tag);
  }
  bool connected(int a, int b) const { return at(a, b) != Tag{}; }

  // Keeps the listed vertices, in the given order.
  TagMatrix select(const std::vector<int>& keep) const {
    TagMatrix out(static_cast<int>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      for (std::size_t j = 0; j < keep.size(); ++j) {
        out.set(static_cast<int>(i), static_cast<int>(j), at(keep[i], keep[j]));
      }
    }
    return out;
  }

  bool operator==(const TagMatrix&) const = default;

 private:
  std::size_t index(int a, int b) const { return static_cast<std::size_t>(a) * n_ + b; }

  int n_ = 0;
  std::vector<Tag> tags_;
};

enum class CsTag : std::uint8_t {
  kNone = 0,
  kSelfLoop,
  kGlobal,
  kTemporal,
  kIntent,
  kNeed,
  kWant,
  kEffect,
};
inline constexpr int kCsRelationCount = 7;  // tags excluding kNone

CsTag cs_tag_for(Relation r);
std::string_view cs_tag_name(CsTag tag);

struct KnowledgeSource {
  int sub_utterance = 0;  // i
  Relation relation = Relation::kIntent;
  int rank = 1;  // j, 1-based
  bool operator==(const KnowledgeSource&) const = default;
};

struct CognitionGraph {
  // Positions [0, sub_utterance_count) hold u_0..u_t; the rest are knowledge.
  std::vector<std::string> vertices;
  int sub_utterance_count = 0;
  TagMatrix<CsTag> relation;
  std::vector<KnowledgeSource> provenance;  // one per knowledge vertex
  // xReact inferences per sub-utterance, used by the reaction encoder.
  std::vector<std::vector<std::string>> reactions;

  int t() const { return sub_utterance_count - 1; }
  int knowledge_begin() const { return sub_utterance_count; }
  int knowledge_count() const { return static_cast<int>(vertices.size()) - sub_utterance_count; }
  int vertex_count() const { return static_cast<int>(vertices.size()); }

  bool operator==(const CognitionGraph&) const = default;
};

enum class EcTag : std::uint8_t {
  kNone = 0,
  kSelfLoop,
  kGlobal,
  kTemporal,
  kEmotionalConcept,
};

std::string_view ec_tag_name(EcTag tag);

enum class VertexType : std::uint8_t { kCls, kToken, kConcept };

struct EmotionConceptGraph {
  // [CLS], context tokens w_1..w_n, then concepts grouped by anchor.
  std::vector<std::string> vertices;
  std::vector<double> intensity;
  std::vector<VertexType> type;
  std::vector<int> anchor;    // source token vertex for concepts, -1 otherwise
  std::vector<int> position;  // concepts share their anchor's position
  int token_count = 0;        // n
  TagMatrix<EcTag> relation;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int concept_count() const { return vertex_count() - 1 - token_count; }

  bool operator==(const EmotionConceptGraph&) const = default;
};

inline constexpr int kDefaultMaxGraphVertices = 512;

CognitionGraph build_cognition_graph(const DialogueSample& sample, const CommonsenseCache& cache,
                                     MissPolicy policy = MissPolicy::kError, int max_segments = 6);

EmotionConceptGraph build_emotion_concept_graph(const DialogueSample& sample, const ConceptStore& store,
                                                int n_prime);

// Drops the highest-rank knowledge first (for equal rank, the last source first).
CognitionGraph truncate_graph(const CognitionGraph& graph, int max_vertices);
// Drops the lowest-intensity concepts first (for equal intensity, the last vertex first).
EmotionConceptGraph truncate_graph(const EmotionConceptGraph& graph, int max_vertices);

// {"vertices": [...], "edges": [[a, b, tag], ...], "eta": [...]} with a <= b.
nlohmann::json to_debug_json(const CognitionGraph& graph);
nlohmann::json to_debug_json(const EmotionConceptGraph& graph);

}  // namespace empathy
