#include "empathy/metrics.hpp"

#include "empathy/errors.hpp"

#include <cmath>
#include <set>

namespace empathy {

double evaluate_ppl(const CaseModel& model, const std::vector<PreparedSample>& data) {
  if (data.empty()) throw DataError("perplexity needs at least one sample");
  double nll = 0.0;
  long tokens = 0;
  for (const auto& sample : data) {
    if (sample.decoder_target.empty()) throw DataError("sample " + sample.id + " has no response");
    auto f = model.forward(sample, Mode::kInference, ForwardScope::kFull);
    TokenLoss loss = generation_loss(f.logits, sample.decoder_target, Vocabulary::kPad);
    nll += loss.sum.item();
    tokens += loss.count;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

namespace {

template <typename T>
double distinct(const std::vector<std::vector<T>>& responses, int n) {
  if (n < 1) throw DataError("n-gram order must be positive");
  std::set<std::vector<T>> unique;
  long total = 0;
  for (const auto& r : responses) {
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= r.size(); ++i) {
      unique.emplace(r.begin() + static_cast<long>(i), r.begin() + static_cast<long>(i) + n);
      ++total;
    }
  }
  if (total == 0) throw DataError("no response has " + std::to_string(n) + " tokens");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

}  // namespace

double distinct_n(const std::vector<std::vector<std::string>>& responses, int n) { return distinct(responses, n); }

double distinct_n(const std::vector<std::vector<int>>& responses, int n) { return distinct(responses, n); }

double emotion_accuracy(const CaseModel& model, const std::vector<PreparedSample>& data) {
  if (data.empty()) throw DataError("accuracy needs at least one sample");
  int correct = 0;
  for (const auto& sample : data) {
    if (sample.emotion < 0) throw DataError("sample " + sample.id + " has no emotion label");
    auto f = model.forward(sample, Mode::kInference, ForwardScope::kEncode);
    if (predict_label(f.emotion_logits.value()) == sample.emotion) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

EvalReport evaluate(const CaseModel& model, const std::vector<PreparedSample>& data) {
  EvalReport r;
  r.ppl = evaluate_ppl(model, data);
  r.acc = emotion_accuracy(model, data);
  std::vector<std::vector<int>> generated;
  for (const auto& sample : data) generated.push_back(model.generate(sample).tokens);
  auto safe_distinct = [&](int n) {
    try {
      return distinct_n(generated, n);
    } catch (const DataError&) {
      return 0.0;
    }
  };
  r.dist1 = safe_distinct(1);
  r.dist2 = safe_distinct(2);
  return r;
}

}  // namespace empathy
