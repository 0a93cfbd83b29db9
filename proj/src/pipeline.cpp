#include "empathy/pipeline.hpp"

#include <cctype>

namespace empathy {

KnowledgeBase load_knowledge(const TrainConfig& config) {
  KnowledgeBase kb{CommonsenseCache(config.l), ConceptStore(), VadLexicon()};
  if (!config.cache_path.empty()) kb.cache = CommonsenseCache::load(config.cache_path);
  if (!config.vad_path.empty()) kb.vad = VadLexicon::load(config.vad_path);
  if (!config.concepts_path.empty()) kb.concepts = ConceptStore::load(config.concepts_path, &kb.vad);
  return kb;
}

std::vector<PreparedSample> prepare_all(const CaseModel& model, const std::vector<DialogueSample>& samples,
                                        const KnowledgeBase& knowledge, MissPolicy policy) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.prepare(s, knowledge, policy));
  return out;
}

void check_cache_coverage(const std::vector<DialogueSample>& samples, const CommonsenseCache& cache,
                          int max_segments) {
  for (const auto& s : samples) {
    for (const auto& u : segment_last_utterance(s.context.back(), max_segments)) {
      const std::string text = join_tokens(u);
      for (int r = 0; r <= static_cast<int>(Relation::kReact); ++r) cache.lookup(text, static_cast<Relation>(r));
    }
  }
}

Tokens tokenize_input(const std::string& line) {
  Tokens out;
  for (auto word : split_whitespace(line)) {
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::string tail;
    while (word.size() > 1 && std::string_view(".,!?").find(word.back()) != std::string_view::npos) {
      tail.insert(tail.begin(), word.back());
      word.pop_back();
    }
    out.push_back(word);
    // Runs of terminal punctuation stay together as one token.
    std::string run;
    for (char c : tail) {
      if (c == ',') {
        if (!run.empty()) out.push_back(run);
        run.clear();
        out.emplace_back(",");
      } else {
        run += c;
      }
    }
    if (!run.empty()) out.push_back(run);
  }
  return out;
}

}  // namespace empathy
