#include "empathy/knowledge.hpp"

#include "empathy/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace empathy {

using nlohmann::json;

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_whitespace(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Tokens DialogueSample::context_tokens() const {
  Tokens out;
  for (const auto& u : context) out.insert(out.end(), u.begin(), u.end());
  return out;
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid" || name == "dev") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(name) + "'");
}

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

Tokens token_list(const json& j, const char* field) {
  if (!j.is_array()) throw DataError(std::string("\"") + field + "\" must be a token array");
  Tokens out;
  for (const auto& t : j) {
    if (!t.is_string()) throw DataError(std::string("\"") + field + "\" holds a non-string token");
    out.push_back(t.get<std::string>());
  }
  return out;
}

DialogueSample parse_sample(const json& j, bool require_target) {
  if (!j.is_object()) throw DataError("line is not a JSON object");
  DialogueSample s;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field \"id\"");
  s.id = j["id"].get<std::string>();
  if (!j.contains("context") || !j["context"].is_array()) throw DataError("missing field \"context\"");
  for (const auto& u : j["context"]) {
    s.context.push_back(token_list(u, "context"));
    if (s.context.back().empty()) throw DataError("empty utterance in \"context\"");
  }
  if (s.context.empty()) throw DataError("empty \"context\"");
  if (j.contains("speakers")) {
    for (const auto& sp : j["speakers"]) {
      if (!sp.is_string()) throw DataError("\"speakers\" holds a non-string role");
      s.speakers.push_back(sp.get<std::string>());
    }
    if (s.speakers.size() != s.context.size()) {
      throw DataError("\"speakers\" length differs from \"context\" length");
    }
    for (std::size_t i = 1; i < s.speakers.size(); ++i) {
      if (s.speakers[i] == s.speakers[i - 1]) throw DataError("speaker roles do not alternate");
    }
  } else if (require_target) {
    throw DataError("missing field \"speakers\"");
  }
  if (j.contains("response")) {
    s.response = token_list(j["response"], "response");
  } else if (require_target) {
    throw DataError("missing field \"response\"");
  }
  if (require_target && s.response.empty()) throw DataError("empty \"response\"");
  if (j.contains("emotion")) {
    if (!j["emotion"].is_string()) throw DataError("\"emotion\" must be a string");
    s.emotion = j["emotion"].get<std::string>();
  } else if (require_target) {
    throw DataError("missing field \"emotion\"");
  }
  return s;
}

std::vector<DialogueSample> read_jsonl(const std::string& path, bool require_target,
                                       const std::set<std::string>* known_labels) {
  auto in = open_input(path);
  std::vector<DialogueSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_sample(json::parse(line), require_target));
      if (known_labels && !known_labels->count(out.back().emotion)) {
        throw DataError("emotion label \"" + out.back().emotion + "\" not in the training label set");
      }
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<DialogueSample> load_corpus(const std::string& path, Split split,
                                        const std::set<std::string>* known_labels) {
  return read_jsonl(path, true, split == Split::kTrain ? nullptr : known_labels);
}

std::vector<DialogueSample> load_contexts(const std::string& path) {
  return read_jsonl(path, false, nullptr);
}

bool is_terminal_punctuation(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](char c) { return c == '.' || c == '!' || c == '?'; });
}

std::vector<Tokens> segment_last_utterance(const Tokens& utterance, int max_segments) {
  if (utterance.empty()) throw DataError("cannot segment an empty utterance");
  std::vector<Tokens> segments;
  Tokens cur;
  for (std::size_t i = 0; i < utterance.size(); ++i) {
    cur.push_back(utterance[i]);
    const bool boundary = is_terminal_punctuation(utterance[i]) &&
                          (i + 1 == utterance.size() || !is_terminal_punctuation(utterance[i + 1]));
    if (boundary) {
      segments.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) segments.push_back(std::move(cur));
  if (max_segments >= 1 && static_cast<int>(segments.size()) > max_segments) {
    auto& last = segments[static_cast<std::size_t>(max_segments - 1)];
    for (std::size_t i = static_cast<std::size_t>(max_segments); i < segments.size(); ++i) {
      last.insert(last.end(), segments[i].begin(), segments[i].end());
    }
    segments.resize(static_cast<std::size_t>(max_segments));
  }
  std::vector<Tokens> out;
  out.push_back(utterance);
  out.insert(out.end(), segments.begin(), segments.end());
  return out;
}

std::string_view relation_name(Relation r) {
  switch (r) {
    case Relation::kIntent: return "xIntent";
    case Relation::kNeed: return "xNeed";
    case Relation::kWant: return "xWant";
    case Relation::kEffect: return "xEffect";
    case Relation::kReact: return "xReact";
  }
  return "?";
}

Relation parse_relation(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Relation::kReact); ++i) {
    if (relation_name(static_cast<Relation>(i)) == name) return static_cast<Relation>(i);
  }
  throw DataError("unknown relation '" + std::string(name) + "'");
}

std::string CommonsenseCache::key(const std::string& text, Relation relation) {
  return text + std::string(kCacheKeySeparator) + std::string(relation_name(relation));
}

CommonsenseCache CommonsenseCache::load(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(path + ": commonsense cache must be a JSON object");
  std::optional<int> l;
  CommonsenseCache cache;
  for (const auto& [k, v] : j.items()) {
    const auto sep = k.rfind(kCacheKeySeparator);
    if (sep == std::string::npos) throw DataError(path + ": key without separator: " + k);
    const std::string text = k.substr(0, sep);
    const Relation rel = parse_relation(k.substr(sep + kCacheKeySeparator.size()));
    if (!v.is_array()) throw DataError(path + ": value for " + k + " is not a list");
    std::vector<std::string> values;
    for (const auto& s : v) {
      if (!s.is_string()) throw DataError(path + ": non-string inference under " + k);
      values.push_back(s.get<std::string>());
    }
    if (!l) {
      l = static_cast<int>(values.size());
      cache.l_ = *l;
    }
    cache.insert(text, rel, std::move(values));
  }
  return cache;
}

void CommonsenseCache::save(const std::string& path) const {
  json j = json::object();
  for (const auto& [k, v] : entries_) j[k] = v;
  auto out = open_output(path);
  out << j.dump(1) << '\n';
}

void CommonsenseCache::insert(const std::string& text, Relation relation,
                              std::vector<std::string> inferences) {
  if (static_cast<int>(inferences.size()) != l_) {
    throw DataError("cache entry for (\"" + text + "\", " + std::string(relation_name(relation)) +
                    ") has " + std::to_string(inferences.size()) + " inferences, expected " +
                    std::to_string(l_));
  }
  entries_[key(text, relation)] = std::move(inferences);
}

const std::vector<std::string>& CommonsenseCache::lookup(const std::string& text, Relation relation) const {
  auto it = entries_.find(key(text, relation));
  if (it == entries_.end()) throw CacheMissError(text, std::string(relation_name(relation)));
  return it->second;
}

std::vector<std::string> CommonsenseCache::lookup(const std::string& text, Relation relation,
                                                  MissPolicy policy) const {
  auto it = entries_.find(key(text, relation));
  if (it != entries_.end()) return it->second;
  if (policy == MissPolicy::kError) throw CacheMissError(text, std::string(relation_name(relation)));
  return std::vector<std::string>(static_cast<std::size_t>(l_), std::string(kPlaceholderInference));
}

bool CommonsenseCache::contains(const std::string& text, Relation relation) const {
  return entries_.count(key(text, relation)) != 0;
}

std::vector<std::string> lookup_commonsense(const CommonsenseCache& cache, const std::string& text,
                                            std::string_view relation) {
  return cache.lookup(text, parse_relation(relation));
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError(where + ": bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw DataError(where + ": bad number '" + s + "'");
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

VadLexicon VadLexicon::load(const std::string& path) {
  auto in = open_input(path);
  VadLexicon lex;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cols.size() != 4) throw DataError(where + ": expected word<TAB>V<TAB>A<TAB>D");
    // Tolerate the header line of the published lexicon.
    if (lineno == 1 && cols[1] == "Valence") continue;
    Vad v{parse_double(cols[1], where), parse_double(cols[2], where), parse_double(cols[3], where)};
    for (double x : {v.valence, v.arousal, v.dominance}) {
      if (x < 0.0 || x > 1.0) throw DataError(where + ": VAD component outside [0, 1]");
    }
    lex.insert(cols[0], v);
  }
  return lex;
}

void VadLexicon::save(const std::string& path) const {
  auto out = open_output(path);
  out.precision(17);
  for (const auto& [w, v] : entries_) {
    out << w << '\t' << v.valence << '\t' << v.arousal << '\t' << v.dominance << '\n';
  }
}

void VadLexicon::insert(const std::string& word, Vad vad) { entries_[word] = vad; }

std::optional<Vad> VadLexicon::find(const std::string& word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

double raw_intensity(const Vad& vad) { return std::hypot(vad.valence - 0.5, vad.arousal / 2.0); }

IntensityBounds compute_intensity_bounds(const std::vector<std::string>& words, const VadLexicon& lexicon) {
  std::optional<IntensityBounds> b;
  for (const auto& w : words) {
    auto v = lexicon.find(w);
    if (!v) continue;
    const double x = raw_intensity(*v);
    if (!b) {
      b = IntensityBounds{x, x};
    } else {
      b->lo = std::min(b->lo, x);
      b->hi = std::max(b->hi, x);
    }
  }
  if (!b || !(b->lo < b->hi)) throw DataError("intensity bounds are degenerate (need lo < hi)");
  return *b;
}

double emotion_intensity(const std::string& word, const VadLexicon& lexicon, IntensityBounds bounds) {
  auto v = lexicon.find(word);
  if (!v) return 0.0;
  const double x = (raw_intensity(*v) - bounds.lo) / (bounds.hi - bounds.lo);
  return std::clamp(x, 0.0, 1.0);
}

namespace {

bool concept_before(const ConceptEntry& a, const ConceptEntry& b) {
  if (a.eta != b.eta) return a.eta > b.eta;
  return a.concept_text < b.concept_text;
}

}  // namespace

ConceptStore ConceptStore::load(const std::string& path, const VadLexicon* vad) {
  auto in = open_input(path);
  struct Row {
    std::string token;
    ConceptEntry entry;
    bool has_eta;
  };
  std::vector<Row> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cols.size() != 5 && cols.size() != 4) {
      throw DataError(where + ": expected token<TAB>concept<TAB>relation<TAB>weight<TAB>eta");
    }
    Row r{cols[0], {cols[1], cols[2], parse_double(cols[3], where), 0.0}, cols.size() == 5};
    if (r.entry.weight < 0.0) throw DataError(where + ": negative weight");
    if (r.has_eta) {
      r.entry.eta = parse_double(cols[4], where);
      if (r.entry.eta < 0.0 || r.entry.eta > 1.0) throw DataError(where + ": eta outside [0, 1]");
    } else if (!vad) {
      throw DataError(where + ": eta column missing and no VAD lexicon supplied");
    }
    rows.push_back(std::move(r));
  }
  const bool needs_vad = std::any_of(rows.begin(), rows.end(), [](const Row& r) { return !r.has_eta; });
  IntensityBounds bounds;
  if (needs_vad) {
    std::vector<std::string> inventory;
    for (const auto& r : rows) inventory.push_back(r.entry.concept_text);
    bounds = compute_intensity_bounds(inventory, *vad);
  }
  ConceptStore store;
  for (auto& r : rows) {
    if (!r.has_eta) r.entry.eta = emotion_intensity(r.entry.concept_text, *vad, bounds);
    store.insert(r.token, std::move(r.entry));
  }
  return store;
}

void ConceptStore::save(const std::string& path) const {
  auto out = open_output(path);
  out.precision(17);
  for (const auto& [tok, list] : entries_) {
    for (const auto& c : list) {
      out << tok << '\t' << c.concept_text << '\t' << c.relation << '\t' << c.weight << '\t' << c.eta << '\n';
    }
  }
}

void ConceptStore::insert(const std::string& token, ConceptEntry entry) {
  auto& list = entries_[token];
  list.insert(std::upper_bound(list.begin(), list.end(), entry, concept_before), std::move(entry));
}

const std::vector<ConceptEntry>& ConceptStore::concepts(const std::string& token) const {
  static const std::vector<ConceptEntry> kEmpty;
  auto it = entries_.find(token);
  return it == entries_.end() ? kEmpty : it->second;
}

std::vector<SelectedConcept> select_concepts(const std::string& token, const ConceptStore& store, int n_prime) {
  if (n_prime < 1) throw DataError("n_prime must be >= 1");
  const auto& list = store.concepts(token);
  std::vector<SelectedConcept> out;
  for (const auto& c : list) {
    if (static_cast<int>(out.size()) == n_prime) break;
    out.push_back({c.concept_text, c.eta});
  }
  return out;
}

Vocabulary::Vocabulary()
    : Vocabulary({}, {}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::string> labels) {
  const std::vector<std::string> specials = {std::string(kPadToken), std::string(kUnkToken),
                                             std::string(kBosToken), std::string(kEosToken),
                                             std::string(kClsToken)};
  const bool has_specials =
      tokens.size() >= specials.size() && std::equal(specials.begin(), specials.end(), tokens.begin());
  if (!has_specials) tokens.insert(tokens.begin(), specials.begin(), specials.end());
  tokens_ = std::move(tokens);
  labels_ = std::move(labels);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!token_ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!label_ids_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate emotion label '" + labels_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_ids_.find(token);
  return it == token_ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return token_ids_.count(token) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

int Vocabulary::label_id(const std::string& label) const {
  auto it = label_ids_.find(label);
  if (it == label_ids_.end()) throw DataError("unknown emotion label '" + label + "'");
  return it->second;
}

const std::string& Vocabulary::label(int id) const {
  if (id < 0 || id >= label_count()) throw DataError("label id " + std::to_string(id) + " out of range");
  return labels_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::load(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                      j.at("labels").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void Vocabulary::save(const std::string& path) const {
  json j{{"version", 1}, {"tokens", tokens_}, {"labels", labels_}};
  auto out = open_output(path);
  out << j.dump() << '\n';
}

Vocabulary build_vocab(const std::vector<DialogueSample>& samples, int min_freq,
                       const std::vector<std::string>& extra_tokens) {
  if (samples.empty()) throw DataError("cannot build a vocabulary from zero samples");
  std::map<std::string, int> freq;
  std::set<std::string> labels;
  for (const auto& s : samples) {
    for (const auto& u : s.context) {
      for (const auto& t : u) ++freq[t];
    }
    for (const auto& t : s.response) ++freq[t];
    labels.insert(s.emotion);
  }
  std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary specials;
  std::vector<std::string> tokens(specials.tokens());
  std::set<std::string> present(tokens.begin(), tokens.end());
  for (const auto& [tok, n] : ranked) {
    if (n >= min_freq && present.insert(tok).second) tokens.push_back(tok);
  }
  std::vector<std::string> extras(extra_tokens);
  std::sort(extras.begin(), extras.end());
  for (const auto& tok : extras) {
    if (present.insert(tok).second) tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens), {labels.begin(), labels.end()});
}

std::vector<std::string> knowledge_tokens(const std::vector<DialogueSample>& samples,
                                          const CommonsenseCache& cache, const ConceptStore& concepts,
                                          int n_prime, int max_segments) {
  std::set<std::string> out;
  for (const auto& s : samples) {
    for (const auto& u : segment_last_utterance(s.context.back(), max_segments)) {
      const std::string text = join_tokens(u);
      for (int r = 0; r <= static_cast<int>(Relation::kReact); ++r) {
        if (!cache.contains(text, static_cast<Relation>(r))) continue;
        for (const auto& inf : cache.lookup(text, static_cast<Relation>(r))) {
          for (auto& t : split_whitespace(inf)) out.insert(std::move(t));
        }
      }
    }
    for (const auto& t : s.context_tokens()) {
      for (const auto& c : select_concepts(t, concepts, n_prime)) out.insert(c.concept_text);
    }
  }
  out.insert(std::string(kPlaceholderInference));
  return {out.begin(), out.end()};
}

ag::Matrix random_word_vectors(const Vocabulary& vocab, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  ag::Matrix m(vocab.size(), dim);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  }
  return m;
}

ag::Matrix load_word_vectors(const std::string& path, const Vocabulary& vocab, int dim, std::uint64_t seed) {
  ag::Matrix m = random_word_vectors(vocab, dim, seed);
  auto in = open_input(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    if (!vocab.contains(word)) continue;
    std::vector<double> values;
    double x = 0.0;
    while (ss >> x) values.push_back(x);
    if (static_cast<int>(values.size()) != dim) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                      " components, found " + std::to_string(values.size()));
    }
    const int id = vocab.id(word);
    for (int j = 0; j < dim; ++j) m(id, j) = values[static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace empathy
