#include "empathy/model.hpp"

#include "empathy/errors.hpp"

namespace empathy {

namespace {

std::vector<int> text_ids(const std::string& text, const Vocabulary& vocab) {
  auto ids = vocab.encode(split_whitespace(text));
  if (ids.empty()) ids.push_back(Vocabulary::kUnk);
  return ids;
}

Var zeros(int d) { return Var::constant(ag::Matrix::Zero(1, d)); }

Var mean_of(const std::vector<Var>& terms) {
  if (terms.empty()) return {};
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
  return ag::scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

CaseModel::CaseModel(TrainConfig config, Vocabulary vocab, ag::Matrix word_init)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  const int d = config_.d;
  if (word_init.rows() != vocab_.size() || word_init.cols() != d) {
    throw ShapeError("word embedding initializer must be |vocab| x d");
  }
  if (vocab_.label_count() < 1) throw DataError("vocabulary has no emotion labels");
  const int hidden = config_.ffn_mult * d;
  nn::Rng rng(config_.seed);

  embedding_ = EmbeddingTable::create(params_, std::move(word_init), rng);
  context_encoder_ = nn::TransformerEncoder::create(params_, "context_encoder", d, config_.heads, hidden,
                                                    config_.layers, rng);
  cognition_encoder_ = nn::TransformerEncoder::create(params_, "cognition_encoder", d, config_.heads, hidden,
                                                      config_.layers, rng);
  reaction_encoder_ = nn::TransformerEncoder::create(params_, "reaction_encoder", d, config_.heads, hidden,
                                                     config_.layers, rng);
  fusion_projection_ = nn::Linear::create(params_, "fusion_projection", 2 * d, d, rng);
  fusion_encoder_ = nn::TransformerEncoder::create(params_, "fusion_encoder", d, config_.heads, hidden,
                                                   config_.layers, rng);
  relation_bank_ = RelationEmbeddingBank::create(params_, "cs_graph.relations", d, rng);
  cs_graph_encoder_ = nn::TransformerEncoder::create(params_, "cs_graph", d, config_.heads, hidden, config_.layers, rng);
  ec_graph_encoder_ = nn::TransformerEncoder::create(params_, "ec_graph", d, config_.heads, hidden, config_.layers, rng);
  phi_cs_ = nn::Linear::create(params_, "phi_cs", d, d, rng);
  phi_ec_ = nn::Linear::create(params_, "phi_ec", d, d, rng);
  bow_head_ = nn::Linear::create(params_, "bow_head", 2 * d, vocab_.size(), rng);
  w_coarse_ = params_.add("w_coarse", nn::xavier_uniform(d, d, rng));
  w_fine_ = params_.add("w_fine", nn::xavier_uniform(d, d, rng));
  w_aff_ = params_.add("w_aff", nn::xavier_uniform(2 * d, 1, rng));
  w_emo_ = params_.add("w_emo", nn::xavier_uniform(d, vocab_.label_count(), rng));
  empathy_fusion_ = nn::Linear::create(params_, "empathy_fusion", 3 * d, d, rng);
  decoder_ = Decoder::create(params_, d, config_.heads, hidden, config_.layers, vocab_.size(), rng);
  decoder_.concepts_first = config_.concepts_first;
  token_counts_.assign(static_cast<std::size_t>(vocab_.size()), 0);
}

CaseModel CaseModel::create(const TrainConfig& config, const Vocabulary& vocab) {
  ag::Matrix init = config.embeddings_path.empty()
                        ? random_word_vectors(vocab, config.d, config.seed)
                        : load_word_vectors(config.embeddings_path, vocab, config.d, config.seed);
  return CaseModel(config, vocab, std::move(init));
}

void CaseModel::set_token_counts(std::vector<long> counts) {
  if (static_cast<int>(counts.size()) != vocab_.size()) throw ShapeError("one token count per vocabulary entry required");
  token_counts_ = std::move(counts);
}

void CaseModel::count_tokens(const std::vector<DialogueSample>& train) {
  token_counts_.assign(static_cast<std::size_t>(vocab_.size()), 0);
  for (const auto& s : train) {
    for (int id : vocab_.encode(s.response)) {
      if (!Vocabulary::is_special(id)) ++token_counts_[static_cast<std::size_t>(id)];
    }
  }
}

std::vector<double> CaseModel::diversity_weights() const {
  return empathy::diversity_weights(token_counts_, config_.div_epsilon);
}

PreparedSample CaseModel::prepare(const DialogueSample& sample, const KnowledgeBase& knowledge,
                                  MissPolicy policy) const {
  if (knowledge.cache.l() != config_.l) {
    throw DataError("commonsense cache holds " + std::to_string(knowledge.cache.l()) + " inferences per key, config l = " +
                    std::to_string(config_.l));
  }
  PreparedSample p;
  p.id = sample.id;
  p.context_ids.push_back(Vocabulary::kCls);
  for (int id : vocab_.encode(sample.context_tokens())) p.context_ids.push_back(id);

  CognitionGraph cg = truncate_graph(build_cognition_graph(sample, knowledge.cache, policy, config_.max_segments), config_.max_graph_vertices);
  for (const auto& reactions : cg.reactions) {
    std::string joined;
    for (const auto& r : reactions) joined += r + " ";
    p.reaction_ids.push_back(text_ids(joined, vocab_));
  }
  if (config_.use_cs_graph) {
    for (const auto& v : cg.vertices) p.cognition_vertex_ids.push_back(text_ids(v, vocab_));
    for (const auto& src : cg.provenance) p.knowledge_source.push_back(src.sub_utterance);
    p.cognition = std::move(cg);
  }
  if (config_.use_ec_graph) {
    p.concepts = truncate_graph(build_emotion_concept_graph(sample, knowledge.concepts, config_.n_prime),
                                config_.max_graph_vertices);
  }
  if (!sample.response.empty()) {
    p.response_ids = vocab_.encode(sample.response);
    p.decoder_input.push_back(Vocabulary::kBos);
    p.decoder_input.insert(p.decoder_input.end(), p.response_ids.begin(), p.response_ids.end());
    p.decoder_target = p.response_ids;
    p.decoder_target.push_back(Vocabulary::kEos);
    p.bag = response_bag(p.response_ids);
  }
  if (!sample.emotion.empty()) p.emotion = vocab_.label_id(sample.emotion);
  return p;
}

SampleForward CaseModel::forward(const PreparedSample& sample, Mode mode, ForwardScope scope,
                                 nn::AttentionTrace* trace) const {
  const int d = config_.d;
  SampleForward f;
  f.context = encode_context(sample.context_ids, embedding_, context_encoder_, trace);
  const Var& s_x = f.context.summary;

  const bool posterior = mode == Mode::kTrain && !sample.response_ids.empty();
  Var s_y_cog;
  Var s_y_ctx;
  if (posterior) {
    s_y_cog = encode_sentence_batch({sample.response_ids}, embedding_, cognition_encoder_);
    std::vector<int> ids{Vocabulary::kCls};
    ids.insert(ids.end(), sample.response_ids.begin(), sample.response_ids.end());
    s_y_ctx = encode_context(ids, embedding_, context_encoder_).summary;
  }

  std::vector<Var> kl_terms;
  f.r_cog = zeros(d);
  f.r_cog_post = zeros(d);
  if (config_.use_cs_graph) {
    if (!sample.cognition) throw DataError("sample " + sample.id + " was prepared without a cognition graph");
    const auto& graph = *sample.cognition;
    Var init = encode_sentence_batch(sample.cognition_vertex_ids, embedding_, cognition_encoder_);
    Var all = relational_graph_attention(init, graph.relation, relation_bank_, cs_graph_encoder_, trace);
    f.cs = ag::slice_rows(all, graph.knowledge_begin(), graph.knowledge_count());
    std::vector<int> global_rows;
    for (std::size_t k = 0; k < sample.knowledge_source.size(); ++k) {
      if (sample.knowledge_source[k] == 0) global_rows.push_back(static_cast<int>(k));
    }
    if (!global_rows.empty()) f.cs_global = ag::gather_rows(f.cs, global_rows);
    f.prior_cs = prior_distribution(f.cs, s_x, phi_cs_);
    f.r_cog = weighted_sum(f.prior_cs, f.cs);
    if (posterior) {
      f.posterior_cs = posterior_distribution(f.cs, s_y_cog, mode);
      f.r_cog_post = weighted_sum(f.posterior_cs, f.cs);
      kl_terms.push_back(kl_loss(f.posterior_cs, f.prior_cs));
    }
  }

  f.r_emo = zeros(d);
  f.r_emo_post = zeros(d);
  if (config_.use_ec_graph) {
    if (!sample.concepts) throw DataError("sample " + sample.id + " was prepared without a concept graph");
    const auto& graph = *sample.concepts;
    Var init = embed_concept_graph(graph, vocab_, embedding_);
    f.ec = vanilla_graph_attention(init, graph.relation, graph.intensity, ec_graph_encoder_, trace);
    f.prior_ec = prior_distribution(f.ec, s_x, phi_ec_);
    f.r_emo = weighted_sum(f.prior_ec, f.ec);
    if (posterior) {
      f.posterior_ec = posterior_distribution(f.ec, s_y_ctx, mode);
      f.r_emo_post = weighted_sum(f.posterior_ec, f.ec);
      kl_terms.push_back(kl_loss(f.posterior_ec, f.prior_ec));
    }
  }
  if (!kl_terms.empty()) {
    f.kl = kl_terms.front();
    for (std::size_t i = 1; i < kl_terms.size(); ++i) f.kl = ag::add(f.kl, kl_terms[i]);
  }
  if (posterior && !sample.bag.empty()) f.bow = bow_loss(f.r_cog_post, f.r_emo_post, sample.bag, bow_head_);
  if (scope == ForwardScope::kDiscernment) return f;

  std::vector<Var> er_rows;
  for (const auto& ids : sample.reaction_ids) {
    Var h = encode_reaction(ids, embedding_, reaction_encoder_);
    er_rows.push_back(fuse_reaction_context(f.context, h, fusion_projection_, fusion_encoder_));
  }
  f.er = ag::concat_rows(er_rows);
  f.affect = affect_gate(f.r_emo, er_rows.front(), w_aff_);
  f.emotion_logits = emotion_logits(f.affect.r_aff, w_emo_);
  if (sample.emotion >= 0) f.emotion_loss = empathy::emotion_loss(f.emotion_logits, sample.emotion);

  f.memory.fused_context = fuse_empathy_signals(f.context.states, f.r_cog, f.affect.r_aff, empathy_fusion_);
  if (config_.use_cs_graph) f.memory.cs_memory = f.cs;
  if (config_.use_ec_graph) f.memory.ec_memory = f.ec;
  if (scope == ForwardScope::kFull && !sample.decoder_input.empty()) {
    f.logits = decoder_.logits(sample.decoder_input, f.memory, embedding_, trace);
  }
  return f;
}

LossBreakdown CaseModel::batch_losses(const std::vector<const PreparedSample*>& batch, Mode mode) const {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<SampleForward> fw;
  fw.reserve(batch.size());
  for (const auto* s : batch) fw.push_back(forward(*s, mode, ForwardScope::kFull));
  const std::size_t n = batch.size();

  LossBreakdown out;
  std::vector<Var> bow;
  std::vector<Var> kl;
  std::vector<Var> emo;
  for (const auto& f : fw) {
    if (f.bow.defined()) bow.push_back(f.bow);
    if (f.kl.defined()) kl.push_back(f.kl);
    if (f.emotion_loss.defined()) emo.push_back(f.emotion_loss);
  }
  out.bow = mean_of(bow);
  out.kl = mean_of(kl);
  out.emotion = mean_of(emo);

  if (config_.use_coarse && config_.use_cs_graph && config_.use_ec_graph && n >= 2) {
    std::vector<Var> terms;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Var> neg_emo;
      std::vector<Var> neg_cog;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        neg_emo.push_back(fw[j].r_emo);
        neg_cog.push_back(fw[j].r_cog);
      }
      terms.push_back(coarse_mim_loss(fw[i].r_cog, fw[i].r_emo, ag::concat_rows(neg_emo), ag::concat_rows(neg_cog),
                                      w_coarse_));
    }
    out.coarse = mean_of(terms);
  }

  if (config_.use_fine && config_.use_cs_graph) {
    std::vector<Var> terms;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Var> extra_er;
      std::vector<Var> extra_cs;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        extra_er.push_back(ag::slice_rows(fw[j].er, 0, 1));
        if (fw[j].cs_global.defined()) extra_cs.push_back(fw[j].cs_global);
      }
      Var er_pool = extra_er.empty() ? Var() : ag::concat_rows(extra_er);
      Var cs_pool = extra_cs.empty() ? Var() : ag::concat_rows(extra_cs);
      const auto& source = batch[i]->knowledge_source;
      auto negatives = default_fine_negatives(source, fw[i].er, fw[i].cs, er_pool, cs_pool);
      terms.push_back(fine_mim_loss(fw[i].cs, source, fw[i].er, negatives, w_fine_));
    }
    out.fine = mean_of(terms);
  }

  std::vector<Var> logits;
  std::vector<int> targets;
  for (std::size_t i = 0; i < n; ++i) {
    if (!fw[i].logits.defined()) continue;
    logits.push_back(fw[i].logits);
    targets.insert(targets.end(), batch[i]->decoder_target.begin(), batch[i]->decoder_target.end());
  }
  if (!logits.empty()) {
    Var all = ag::concat_rows(logits);
    TokenLoss gen = generation_loss(all, targets, Vocabulary::kPad);
    out.generation = gen.mean;
    out.nll_sum = gen.sum.item();
    out.tokens = gen.count;
    const auto weights = diversity_weights();
    out.diversity = diversity_loss(all, targets, weights, Vocabulary::kPad);
  }

  out.align = align_loss_total({out.bow, out.kl, out.coarse, out.fine}, config_.alpha);
  const LossWeights gammas{config_.gamma[0], config_.gamma[1], config_.gamma[2], config_.gamma[3]};
  out.total = total_loss(out.align, out.emotion, out.generation, out.diversity, gammas);
  return out;
}

Var CaseModel::batch_bow_loss(const std::vector<const PreparedSample*>& batch) const {
  std::vector<Var> terms;
  for (const auto* s : batch) {
    auto f = forward(*s, Mode::kTrain, ForwardScope::kDiscernment);
    if (f.bow.defined()) terms.push_back(f.bow);
  }
  if (terms.empty()) throw DataError("no sample in the batch has a response bag");
  return mean_of(terms);
}

GenerationOutput CaseModel::generate(const PreparedSample& sample) const {
  auto f = forward(sample, Mode::kInference, ForwardScope::kEncode);
  return greedy_decode(decoder_, f.memory, embedding_, config_.max_decode);
}

}  // namespace empathy
