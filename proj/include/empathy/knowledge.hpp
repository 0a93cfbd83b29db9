#pragma once

// Corpus, commonsense cache, concept store, VAD lexicon and vocabulary.

#include "empathy/autograd.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace empathy {

using Tokens = std::vector<std::string>;

std::string join_tokens(const Tokens& tokens);
Tokens split_whitespace(std::string_view text);

struct DialogueSample {
  std::string id;
  std::vector<Tokens> context;
  std::vector<std::string> speakers;
  Tokens response;
  std::string emotion;

  // All context utterances concatenated in order.
  Tokens context_tokens() const;
};

enum class Split { kTrain, kValid, kTest };

// Accepts "train", "valid", "dev" (alias of valid) and "test".
Split parse_split(std::string_view name);

// Reads one sample per JSONL line. For valid/test splits, `known_labels`
// (the training label set) rejects emotions never seen in training.
std::vector<DialogueSample> load_corpus(const std::string& path, Split split,
                                        const std::set<std::string>* known_labels = nullptr);

// Contexts for generation: "response" and "emotion" are optional.
std::vector<DialogueSample> load_contexts(const std::string& path);

// [u_0 = whole utterance, u_1, ..., u_t], split on runs of terminal
// punctuation tokens; trailing segments beyond `max_segments` are merged.
std::vector<Tokens> segment_last_utterance(const Tokens& utterance, int max_segments = 6);

bool is_terminal_punctuation(std::string_view token);

enum class Relation : int { kIntent = 0, kNeed, kWant, kEffect, kReact };

inline constexpr std::array<Relation, 4> kCognitionRelations = {
    Relation::kIntent, Relation::kNeed, Relation::kWant, Relation::kEffect};

std::string_view relation_name(Relation r);
Relation parse_relation(std::string_view name);

enum class MissPolicy {
  kError,
  // Substitute `l` copies of the placeholder inference "none".
  kPlaceholder,
};

inline constexpr std::string_view kCacheKeySeparator = "␟";
inline constexpr std::string_view kPlaceholderInference = "none";

// Precomputed commonsense inferences keyed by (text, relation).
class CommonsenseCache {
 public:
  explicit CommonsenseCache(int l = 5) : l_(l) {}

  static CommonsenseCache load(const std::string& path);
  void save(const std::string& path) const;

  void insert(const std::string& text, Relation relation, std::vector<std::string> inferences);
  const std::vector<std::string>& lookup(const std::string& text, Relation relation) const;
  std::vector<std::string> lookup(const std::string& text, Relation relation, MissPolicy policy) const;
  bool contains(const std::string& text, Relation relation) const;

  int l() const { return l_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

  bool operator==(const CommonsenseCache&) const = default;

 private:
  static std::string key(const std::string& text, Relation relation);

  int l_;
  std::map<std::string, std::vector<std::string>> entries_;
};

std::vector<std::string> lookup_commonsense(const CommonsenseCache& cache, const std::string& text,
                                            std::string_view relation);

struct Vad {
  double valence = 0.5;
  double arousal = 0.0;
  double dominance = 0.5;
  bool operator==(const Vad&) const = default;
};

class VadLexicon {
 public:
  static VadLexicon load(const std::string& path);
  void save(const std::string& path) const;

  void insert(const std::string& word, Vad vad);
  std::optional<Vad> find(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }

  bool operator==(const VadLexicon&) const = default;

 private:
  std::map<std::string, Vad> entries_;
};

struct IntensityBounds {
  double lo = 0.0;
  double hi = 1.0;
};

// ||[V - 0.5, A / 2]||_2 before normalization.
double raw_intensity(const Vad& vad);

// Min/max of raw_intensity over the words found in the lexicon.
IntensityBounds compute_intensity_bounds(const std::vector<std::string>& words,
                                         const VadLexicon& lexicon);

// Min-max normalized intensity in [0, 1]; 0 for words missing from the lexicon.
double emotion_intensity(const std::string& word, const VadLexicon& lexicon, IntensityBounds bounds);

struct ConceptEntry {
  std::string concept_text;
  std::string relation;
  double weight = 0.0;
  double eta = 0.0;
  bool operator==(const ConceptEntry&) const = default;
};

// Concepts per token, kept sorted by eta descending, then concept text.
class ConceptStore {
 public:
  // TSV `token concept relation weight eta`. Rows with only four columns get
  // eta from `vad`, normalized over the whole concept inventory.
  static ConceptStore load(const std::string& path, const VadLexicon* vad = nullptr);
  void save(const std::string& path) const;

  void insert(const std::string& token, ConceptEntry entry);
  const std::vector<ConceptEntry>& concepts(const std::string& token) const;
  std::size_t token_count() const { return entries_.size(); }
  const std::map<std::string, std::vector<ConceptEntry>>& entries() const { return entries_; }

  bool operator==(const ConceptStore&) const = default;

 private:
  std::map<std::string, std::vector<ConceptEntry>> entries_;
};

struct SelectedConcept {
  std::string concept_text;
  double eta = 0.0;
};

std::vector<SelectedConcept> select_concepts(const std::string& token, const ConceptStore& store,
                                             int n_prime);

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kBosToken = "[BOS]";
inline constexpr std::string_view kEosToken = "[EOS]";
inline constexpr std::string_view kClsToken = "[CLS]";

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kNumSpecial = 5;

  Vocabulary();
  Vocabulary(std::vector<std::string> tokens, std::vector<std::string> labels);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::vector<int> encode(const Tokens& tokens) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  int label_id(const std::string& label) const;  // throws DataError when absent
  const std::string& label(int id) const;
  int label_count() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::set<std::string> label_set() const { return {labels_.begin(), labels_.end()}; }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecial; }

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_ && labels_ == o.labels_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> token_ids_;
  std::unordered_map<std::string, int> label_ids_;
};

// Tokens from contexts and responses with frequency >= min_freq, ordered by
// frequency descending then lexicographically; `extra_tokens` (knowledge
// strings, concepts) are appended regardless of frequency. Labels sorted.
Vocabulary build_vocab(const std::vector<DialogueSample>& samples, int min_freq,
                       const std::vector<std::string>& extra_tokens = {});

// Tokens referenced by the knowledge attached to `samples`: cache inferences
// for every sub-utterance and relation, and the selected concepts per token.
std::vector<std::string> knowledge_tokens(const std::vector<DialogueSample>& samples,
                                          const CommonsenseCache& cache,
                                          const ConceptStore& concepts, int n_prime,
                                          int max_segments = 6);

// Text-format word vectors `word v1 ... vd`. Rows for tokens missing from the
// file are drawn uniformly from [-0.1, 0.1] with a fixed seed.
ag::Matrix load_word_vectors(const std::string& path, const Vocabulary& vocab, int dim,
                             std::uint64_t seed);
ag::Matrix random_word_vectors(const Vocabulary& vocab, int dim, std::uint64_t seed);

struct KnowledgeBase {
  CommonsenseCache cache;
  ConceptStore concepts;
  VadLexicon vad;
};

}  // namespace empathy
