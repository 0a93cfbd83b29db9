#pragma once

// Glue between configuration, knowledge resources and prepared samples.

#include "empathy/model.hpp"

#include <vector>

namespace empathy {

// Loads the cache, VAD lexicon and concept store named by the config. An
// unset cache path yields an empty cache with config.l inferences per key;
// unset lexicon or concept paths yield empty resources.
KnowledgeBase load_knowledge(const TrainConfig& config);

std::vector<PreparedSample> prepare_all(const CaseModel& model, const std::vector<DialogueSample>& samples,
                                        const KnowledgeBase& knowledge, MissPolicy policy = MissPolicy::kError);

// Every sub-utterance of every sample must have all five relations cached.
// Throws CacheMissError naming the first missing entry.
void check_cache_coverage(const std::vector<DialogueSample>& samples, const CommonsenseCache& cache,
                          int max_segments);

// Lower-cased tokens with sentence punctuation split off, for raw user input.
Tokens tokenize_input(const std::string& line);

}  // namespace empathy
