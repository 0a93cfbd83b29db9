#pragma once

#include "empathy/model.hpp"

#include <vector>

namespace empathy {

// exp(total NLL / total non-PAD target tokens) under teacher forcing, using
// the prior (inference) path.
double evaluate_ppl(const CaseModel& model, const std::vector<PreparedSample>& data);

// Distinct n-grams over total n-gram occurrences across all responses.
double distinct_n(const std::vector<std::vector<std::string>>& responses, int n);
double distinct_n(const std::vector<std::vector<int>>& responses, int n);

// Fraction of labeled samples whose argmax emotion equals the gold label.
double emotion_accuracy(const CaseModel& model, const std::vector<PreparedSample>& data);

struct EvalReport {
  double ppl = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double acc = 0.0;
};

// Greedy decoding feeds Dist-1/2.
EvalReport evaluate(const CaseModel& model, const std::vector<PreparedSample>& data);

}  // namespace empathy
