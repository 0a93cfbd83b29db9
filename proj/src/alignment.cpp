#include "empathy/alignment.hpp"

#include "empathy/errors.hpp"
#include "empathy/knowledge.hpp"

namespace empathy {

namespace {

void require_row(const Var& v, const char* what) {
  if (!v.defined() || v.rows() != 1) throw ShapeError(std::string(what) + " must be a row vector");
}

}  // namespace

Var prior_distribution(const Var& knowledge, const Var& summary, const nn::Linear& phi) {
  if (!knowledge.defined() || knowledge.rows() == 0) throw ShapeError("prior over zero knowledge vectors");
  require_row(summary, "context summary");
  Var query = ag::tanh(phi(summary));
  return ag::softmax_rows(ag::transpose(ag::matmul(knowledge, ag::transpose(query))));
}

Var posterior_distribution(const Var& knowledge, const Var& response_summary, Mode mode) {
  if (mode != Mode::kTrain) throw ModeError("posterior distribution requested in inference mode");
  if (!knowledge.defined() || knowledge.rows() == 0) throw ShapeError("posterior over zero knowledge vectors");
  require_row(response_summary, "response summary");
  return ag::softmax_rows(ag::transpose(ag::matmul(knowledge, ag::transpose(response_summary))));
}

Var weighted_sum(const Var& probabilities, const Var& knowledge) { return ag::matmul(probabilities, knowledge); }

Var kl_loss(const Var& posterior, const Var& prior) {
  if (posterior.rows() != prior.rows() || posterior.cols() != prior.cols()) {
    throw ShapeError("kl_loss: distributions of different lengths (" + std::to_string(posterior.cols()) +
                     " vs " + std::to_string(prior.cols()) + ")");
  }
  return ag::sum(ag::mul(posterior, ag::sub(ag::log_floor(posterior), ag::log_floor(prior))));
}

std::vector<int> response_bag(std::span<const int> response_ids) {
  std::vector<int> bag;
  for (int id : response_ids) {
    if (!Vocabulary::is_special(id)) bag.push_back(id);
  }
  return bag;
}

Var bow_loss(const Var& r_cog_post, const Var& r_emo_post, std::span<const int> bag, const nn::Linear& head) {
  if (bag.empty()) throw ShapeError("bag-of-words loss over an empty bag");
  const Var parts[] = {r_cog_post, r_emo_post};
  Var log_probs = ag::log_softmax_rows(head(ag::concat_cols(parts)));
  std::vector<std::pair<int, int>> cells;
  cells.reserve(bag.size());
  for (int id : bag) cells.emplace_back(0, id);
  return ag::scale(ag::sum(ag::pick(log_probs, cells)), -1.0 / static_cast<double>(bag.size()));
}

Var bilinear_score(const Var& a, const Var& b, const Var& w) {
  require_row(a, "bilinear lhs");
  require_row(b, "bilinear rhs");
  return ag::sigmoid(ag::matmul(ag::matmul(a, w), ag::transpose(b)));
}

Var coarse_mim_loss(const Var& r_cog, const Var& r_emo, const Var& negative_emo, const Var& negative_cog,
                    const Var& w) {
  if (!negative_emo.defined() || negative_emo.rows() == 0 || !negative_cog.defined() || negative_cog.rows() == 0) {
    throw ShapeError("coarse alignment needs at least one negative on each side");
  }
  Var positive = bilinear_score(r_cog, r_emo, w);
  Var emo_scores = ag::sigmoid(ag::matmul(ag::matmul(r_cog, w), ag::transpose(negative_emo)));        // 1 x n
  Var cog_scores = ag::sigmoid(ag::transpose(ag::matmul(ag::matmul(negative_cog, w), ag::transpose(r_emo))));  // 1 x m
  Var estimate = ag::sub(ag::sub(ag::scale(positive, 2.0), ag::logsumexp_rows(emo_scores)),
                         ag::logsumexp_rows(cog_scores));
  return ag::scale(estimate, -1.0);
}

FineNegatives default_fine_negatives(std::span<const int> source, const Var& er, const Var& cs,
                                     const Var& extra_er, const Var& extra_cs) {
  const auto k = static_cast<Eigen::Index>(source.size());
  const auto own_er = er.rows();
  const auto own_cs = cs.rows();
  if (own_cs != k) throw ShapeError("one source index per knowledge vector required");

  FineNegatives neg;
  if (extra_er.defined() && extra_er.rows() > 0) {
    const Var parts[] = {er, extra_er};
    neg.er_pool = ag::concat_rows(parts);
  } else {
    neg.er_pool = er;
  }
  if (extra_cs.defined() && extra_cs.rows() > 0) {
    const Var parts[] = {cs, extra_cs};
    neg.cs_pool = ag::concat_rows(parts);
  } else {
    neg.cs_pool = cs;
  }
  neg.er_mask = ag::BoolMatrix::Constant(k, neg.er_pool.rows(), true);
  neg.cs_mask = ag::BoolMatrix::Constant(k, neg.cs_pool.rows(), true);
  for (Eigen::Index row = 0; row < k; ++row) {
    const int src = source[static_cast<std::size_t>(row)];
    for (Eigen::Index p = 0; p < own_er; ++p) neg.er_mask(row, p) = (p != src);
    for (Eigen::Index q = 0; q < own_cs; ++q) neg.cs_mask(row, q) = (source[static_cast<std::size_t>(q)] != src);
  }
  return neg;
}

Var fine_mim_loss(const Var& cs, std::span<const int> source, const Var& er, const FineNegatives& negatives,
                  const Var& w) {
  const auto k = cs.rows();
  if (static_cast<Eigen::Index>(source.size()) != k) throw ShapeError("one source index per knowledge vector required");
  std::vector<std::pair<int, int>> cells;
  cells.reserve(source.size());
  for (Eigen::Index row = 0; row < k; ++row) {
    const int src = source[static_cast<std::size_t>(row)];
    if (src < 0 || src >= er.rows()) {
      throw ShapeError("missing reaction vector er_" + std::to_string(src) + " for knowledge row " +
                       std::to_string(row));
    }
    cells.emplace_back(static_cast<int>(row), src);
  }
  if (negatives.er_mask.rows() != k || negatives.cs_mask.rows() != k) {
    throw ShapeError("fine negatives masks must have one row per pair");
  }
  for (Eigen::Index row = 0; row < k; ++row) {
    if (!negatives.er_mask.row(row).any() || !negatives.cs_mask.row(row).any()) {
      throw ShapeError("fine alignment pair " + std::to_string(row) + " has an empty negative set");
    }
  }

  Var cs_w = ag::matmul(cs, w);
  Var positive = ag::sigmoid(ag::pick(ag::matmul(cs_w, ag::transpose(er)), cells));               // K x 1
  Var er_scores = ag::sigmoid(ag::matmul(cs_w, ag::transpose(negatives.er_pool)));               // K x P
  Var cs_scores = ag::sigmoid(ag::matmul(ag::matmul(negatives.cs_pool, w), ag::transpose(er)));  // Q x (t+1)
  std::vector<int> src(source.begin(), source.end());
  Var cs_for_pair = ag::gather_rows(ag::transpose(cs_scores), src);                               // K x Q
  Var estimate = ag::sub(ag::sub(ag::scale(positive, 2.0), ag::logsumexp_rows(er_scores, negatives.er_mask)),
                         ag::logsumexp_rows(cs_for_pair, negatives.cs_mask));
  return ag::scale(ag::sum(estimate), -1.0);
}

AffectState affect_gate(const Var& r_emo, const Var& er0, const Var& w) {
  require_row(r_emo, "r_emo");
  require_row(er0, "er_0");
  const Var parts[] = {r_emo, er0};
  Var mu = ag::sigmoid(ag::matmul(ag::concat_cols(parts), w));
  Var mixed = ag::add(ag::matmul(mu, r_emo), ag::matmul(ag::add_scalar(ag::scale(mu, -1.0), 1.0), er0));
  return {mixed, mu};
}

Var emotion_logits(const Var& r_aff, const Var& w_emo) { return ag::matmul(r_aff, w_emo); }

Var emotion_classify(const Var& r_aff, const Var& w_emo) {
  return ag::softmax_rows(emotion_logits(r_aff, w_emo));
}

Var emotion_loss(const Var& logits, int gold) {
  if (gold < 0 || gold >= logits.cols()) throw DataError("emotion label id " + std::to_string(gold) + " is invalid");
  const std::pair<int, int> cell{0, gold};
  return ag::scale(ag::pick(ag::log_softmax_rows(logits), std::span(&cell, 1)), -1.0);
}

int predict_label(const ag::Matrix& scores) {
  Eigen::Index best = 0;
  scores.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

Var align_loss_total(const AlignComponents& c, double alpha) {
  Var total = Var::scalar(0.0);
  if (c.bow.defined()) total = ag::add(total, c.bow);
  if (c.kl.defined()) total = ag::add(total, c.kl);
  if (c.coarse.defined()) total = ag::add(total, c.coarse);
  if (c.fine.defined()) total = ag::add(total, ag::scale(c.fine, alpha));
  return total;
}

}  // namespace empathy
