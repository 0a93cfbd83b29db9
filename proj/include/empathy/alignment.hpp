#pragma once

// Knowledge discernment (prior/posterior), KL and bag-of-words supervision,
// coarse- and fine-grained mutual-information alignment, the affective gate
// and emotion classification.
//
// Vectors are 1 x d rows; distributions over knowledge are 1 x n rows.

#include "empathy/nn.hpp"

#include <span>
#include <vector>

namespace empathy {

using ag::Var;

enum class Mode { kTrain, kInference };

// softmax_i(k_i . tanh(phi(s))) over the rows of `knowledge`.
Var prior_distribution(const Var& knowledge, const Var& summary, const nn::Linear& phi);

// softmax_i(k_i . s_Y); train-only, throws ModeError otherwise.
Var posterior_distribution(const Var& knowledge, const Var& response_summary, Mode mode);

// sum_i p_i k_i
Var weighted_sum(const Var& probabilities, const Var& knowledge);

// sum_i post_i log(post_i / prior_i), both clamped at 1e-12 inside the logs.
Var kl_loss(const Var& posterior, const Var& prior);

// Response tokens that the bag-of-words head should predict: everything
// except special tokens, duplicates kept.
std::vector<int> response_bag(std::span<const int> response_ids);

// -(1/|B|) sum_{y in B} log softmax(head([r_cog'; r_emo']))_y
Var bow_loss(const Var& r_cog_post, const Var& r_emo_post, std::span<const int> bag, const nn::Linear& head);

// sigma(a W b^T) for one pair.
Var bilinear_score(const Var& a, const Var& b, const Var& w);

// Returns -(2 f(c, e) - log sum exp f(c, e~) - log sum exp f(c~, e)).
Var coarse_mim_loss(const Var& r_cog, const Var& r_emo, const Var& negative_emo, const Var& negative_cog,
                    const Var& w);

// Negatives for every (cs_k, er_source(k)) pair. Row k of `er_mask` selects
// the er_pool rows contrasted with cs_k; row k of `cs_mask` selects the
// cs_pool rows contrasted with er_source(k).
struct FineNegatives {
  Var er_pool;
  ag::BoolMatrix er_mask;
  Var cs_pool;
  ag::BoolMatrix cs_mask;
};

// Other sub-utterances' er / cs within the sample, plus optional in-batch
// extras (other samples' er_0 and u_0 knowledge) that contrast every pair.
FineNegatives default_fine_negatives(std::span<const int> source, const Var& er, const Var& cs,
                                     const Var& extra_er = {}, const Var& extra_cs = {});

// Summed over all pairs, negated like coarse_mim_loss.
Var fine_mim_loss(const Var& cs, std::span<const int> source, const Var& er, const FineNegatives& negatives,
                  const Var& w);

struct AffectState {
  Var r_aff;
  Var mu;  // 1 x 1
};

// mu = sigma(w^T [r_emo; er_0]); r_aff = mu r_emo + (1 - mu) er_0. `w` is 2d x 1.
AffectState affect_gate(const Var& r_emo, const Var& er0, const Var& w);

Var emotion_logits(const Var& r_aff, const Var& w_emo);
Var emotion_classify(const Var& r_aff, const Var& w_emo);  // probabilities
// Cross-entropy from logits: -log softmax(logits)[gold].
Var emotion_loss(const Var& logits, int gold);
int predict_label(const ag::Matrix& scores);

// Undefined components count as zero.
struct AlignComponents {
  Var bow;
  Var kl;
  Var coarse;
  Var fine;
};

Var align_loss_total(const AlignComponents& components, double alpha);

}  // namespace empathy
