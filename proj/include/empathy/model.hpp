#pragma once

// The full model: parameters for every encoder, the discernment/alignment
// heads and the decoder, plus the per-sample and per-batch forward passes.

#include "empathy/alignment.hpp"
#include "empathy/config.hpp"
#include "empathy/generator.hpp"

#include <optional>
#include <vector>

namespace empathy {

// Everything about a sample that does not depend on parameters.
struct PreparedSample {
  std::string id;
  std::vector<int> context_ids;  // CLS + concatenated context
  std::optional<CognitionGraph> cognition;
  std::vector<std::vector<int>> cognition_vertex_ids;
  std::vector<int> knowledge_source;  // sub-utterance of each knowledge vertex
  std::vector<std::vector<int>> reaction_ids;  // concatenated xReact tokens per sub-utterance
  std::optional<EmotionConceptGraph> concepts;
  std::vector<int> response_ids;  // empty when unknown
  std::vector<int> decoder_input;  // BOS + response
  std::vector<int> decoder_target;  // response + EOS
  std::vector<int> bag;
  int emotion = -1;  // -1 when unknown
};

struct SampleForward {
  EncodedSequence context;
  Var cs;  // knowledge vertices of G_CS after the graph encoder
  Var cs_global;  // the subset sourced from u_0, used as in-batch negatives
  Var ec;
  Var prior_cs;
  Var prior_ec;
  Var r_cog;
  Var r_emo;
  Var posterior_cs;
  Var posterior_ec;
  Var r_cog_post;
  Var r_emo_post;
  Var er;  // (t+1) x d
  AffectState affect;
  Var emotion_logits;
  DecoderMemory memory;
  Var logits;  // teacher-forced decoder logits when the response is known
  Var kl;
  Var bow;
  Var emotion_loss;
};

enum class ForwardScope {
  kFull,         // everything, including teacher-forced decoder logits
  kEncode,       // everything up to the decoder memory
  kDiscernment,  // graphs, priors, posteriors and the BOW loss only
};

struct LossBreakdown {
  Var total;
  Var align;
  Var emotion;
  Var generation;
  Var diversity;
  Var bow;
  Var kl;
  Var coarse;
  Var fine;
  double nll_sum = 0.0;
  int tokens = 0;
};

class CaseModel {
 public:
  CaseModel(TrainConfig config, Vocabulary vocab, ag::Matrix word_init);

  // Word vectors come from config.embeddings_path when set.
  static CaseModel create(const TrainConfig& config, const Vocabulary& vocab);

  const TrainConfig& config() const { return config_; }
  TrainConfig& mutable_config() { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  // Response-token frequencies from the training split, indexed by token id.
  const std::vector<long>& token_counts() const { return token_counts_; }
  void set_token_counts(std::vector<long> counts);
  void count_tokens(const std::vector<DialogueSample>& train);
  std::vector<double> diversity_weights() const;

  PreparedSample prepare(const DialogueSample& sample, const KnowledgeBase& knowledge,
                         MissPolicy policy = MissPolicy::kError) const;

  SampleForward forward(const PreparedSample& sample, Mode mode, ForwardScope scope = ForwardScope::kFull,
                        nn::AttentionTrace* trace = nullptr) const;

  // Mode::kTrain computes the posterior path, KL and BOW; coarse alignment
  // uses the other samples of the batch as negatives.
  LossBreakdown batch_losses(const std::vector<const PreparedSample*>& batch, Mode mode) const;
  // Mean bag-of-words loss, the only objective of the first training phase.
  Var batch_bow_loss(const std::vector<const PreparedSample*>& batch) const;

  GenerationOutput generate(const PreparedSample& sample) const;

 private:
  TrainConfig config_;
  Vocabulary vocab_;
  nn::ParameterSet params_;
  std::vector<long> token_counts_;

  EmbeddingTable embedding_;
  nn::TransformerEncoder context_encoder_;
  nn::TransformerEncoder cognition_encoder_;
  nn::TransformerEncoder reaction_encoder_;
  nn::Linear fusion_projection_;
  nn::TransformerEncoder fusion_encoder_;
  RelationEmbeddingBank relation_bank_;
  nn::TransformerEncoder cs_graph_encoder_;
  nn::TransformerEncoder ec_graph_encoder_;
  nn::Linear phi_cs_;
  nn::Linear phi_ec_;
  nn::Linear bow_head_;
  Var w_coarse_;
  Var w_fine_;
  Var w_aff_;
  Var w_emo_;
  nn::Linear empathy_fusion_;
  Decoder decoder_;
};

}  // namespace empathy
