#include "empathy/cli.hpp"

#include "empathy/checkpoint.hpp"
#include "empathy/errors.hpp"
#include "empathy/metrics.hpp"
#include "empathy/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace empathy {

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string out_path;
  std::string init;
  std::string data;
  std::string input;
  std::string output;
  bool skip_pretrain = false;
  bool placeholder_misses = false;
  bool strict_misses = false;
};

void apply_overrides(TrainConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

TrainConfig load_config(const Options& o) {
  TrainConfig config = TrainConfig::load(o.config_path);
  apply_overrides(config, o.overrides);
  config.validate();
  return config;
}

std::string require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string(key) + " is not set");
  return value;
}

void write_log(std::ostream& err, const StepLog& log, const char* phase) {
  err << phase << " step " << log.step << " lr " << std::scientific << std::setprecision(3) << log.lr
      << std::defaultfloat << std::setprecision(6) << " total " << log.total << " align " << log.align << " emotion "
      << log.emotion << " generation " << log.generation << " diversity " << log.diversity << "\n";
}

StepLogger every(const TrainConfig& config, std::ostream& err, const char* phase) {
  const long period = std::max(1, config.log_every);
  return [period, &err, phase, first = true](const StepLog& log) mutable {
    if (first || log.step % period == 0) write_log(err, log, phase);
    first = false;
  };
}

struct Corpora {
  std::vector<DialogueSample> train;
  std::vector<DialogueSample> valid;
  std::vector<DialogueSample> test;
};

Corpora load_corpora(const TrainConfig& config) {
  Corpora c;
  c.train = load_corpus(require_path(config.train_path, "train_path"), Split::kTrain);
  std::set<std::string> labels;
  for (const auto& s : c.train) labels.insert(s.emotion);
  if (!config.valid_path.empty()) c.valid = load_corpus(config.valid_path, Split::kValid, &labels);
  if (!config.test_path.empty()) c.test = load_corpus(config.test_path, Split::kTest, &labels);
  return c;
}

int preprocess(const Options& o, std::ostream& out) {
  const TrainConfig config = load_config(o);
  const Corpora data = load_corpora(config);
  const KnowledgeBase kb = load_knowledge(config);
  if (kb.cache.l() != config.l) {
    throw DataError("commonsense cache holds " + std::to_string(kb.cache.l()) + " inferences per key, config l = " +
                    std::to_string(config.l));
  }
  std::vector<DialogueSample> all = data.train;
  all.insert(all.end(), data.valid.begin(), data.valid.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  check_cache_coverage(all, kb.cache, config.max_segments);
  const Vocabulary vocab =
      build_vocab(data.train, config.min_freq, knowledge_tokens(all, kb.cache, kb.concepts, config.n_prime,
                                                                config.max_segments));
  vocab.save(require_path(config.vocab_path, "vocab_path"));
  out << "samples: train " << data.train.size() << ", valid " << data.valid.size() << ", test " << data.test.size()
      << "\n"
      << "vocabulary: " << vocab.size() << " tokens, " << vocab.label_count() << " emotion labels\n"
      << "wrote " << config.vocab_path << "\n";
  return 0;
}

struct Session {
  std::unique_ptr<CaseModel> model;
  std::unique_ptr<Trainer> trainer;
};

Session new_session(const TrainConfig& config, const Corpora& data) {
  Session s;
  s.model = std::make_unique<CaseModel>(CaseModel::create(config, Vocabulary::load(require_path(config.vocab_path,
                                                                                                "vocab_path"))));
  s.model->count_tokens(data.train);
  s.trainer = std::make_unique<Trainer>(*s.model);
  return s;
}

Session resume_session(const TrainConfig& config, const std::string& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  const TrainConfig& stored = ckpt.model->config();
  for (const char* key : {"d", "heads", "layers", "ffn_mult"}) {
    if (stored.get(key) != config.get(key)) {
      throw ConfigError(std::string("config ") + key + " = " + config.get(key) + " differs from the checkpoint (" +
                        stored.get(key) + ")");
    }
  }
  ckpt.model->mutable_config() = config;
  Session s;
  s.model = std::move(ckpt.model);
  s.trainer = std::make_unique<Trainer>(*s.model);
  restore_trainer(*s.trainer, ckpt);
  return s;
}

int pretrain(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig config = load_config(o);
  const Corpora data = load_corpora(config);
  const KnowledgeBase kb = load_knowledge(config);
  Session s = new_session(config, data);
  const auto train = prepare_all(*s.model, data.train, kb);
  const auto trace = s.trainer->pretrain_phase(train, every(config, err, "pretrain"));
  save_checkpoint(o.out_path, *s.model, s.trainer.get());
  out << "pretrained " << trace.size() << " steps";
  if (!trace.empty()) out << ", bag-of-words loss " << trace.front() << " -> " << trace.back();
  out << "\nwrote " << o.out_path << "\n";
  return 0;
}

int train(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig config = load_config(o);
  const Corpora data = load_corpora(config);
  const KnowledgeBase kb = load_knowledge(config);
  Session s = o.init.empty() ? new_session(config, data) : resume_session(config, o.init);
  const auto train = prepare_all(*s.model, data.train, kb);
  const auto valid = prepare_all(*s.model, data.valid, kb);
  if (o.init.empty() && !o.skip_pretrain) s.trainer->pretrain_phase(train, every(config, err, "pretrain"));
  auto on_improve = [&](long step, double ppl) {
    save_checkpoint(o.out_path, *s.model, s.trainer.get());
    err << "validation ppl " << ppl << " at step " << step << ", saved " << o.out_path << "\n";
  };
  const TrainResult result = s.trainer->train_phase(train, valid, every(config, err, "train"), on_improve);
  if (valid.empty()) save_checkpoint(o.out_path, *s.model, s.trainer.get());
  out << "trained " << result.steps << " steps";
  if (result.early_stopped) out << " (early stop)";
  if (!result.valid_ppl.empty()) out << ", best validation ppl " << result.best_valid_ppl << " at step " << result.best_step;
  out << "\nwrote " << o.out_path << "\n";
  return 0;
}

MissPolicy miss_policy(const Options& o, MissPolicy fallback) {
  if (o.placeholder_misses) return MissPolicy::kPlaceholder;
  if (o.strict_misses) return MissPolicy::kError;
  return fallback;
}

struct Loaded {
  std::unique_ptr<CaseModel> model;
  KnowledgeBase knowledge;
};

Loaded load_for_inference(const Options& o) {
  LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
  TrainConfig config = ckpt.model->config();
  apply_overrides(config, o.overrides);
  config.validate();
  ckpt.model->mutable_config() = config;
  return {std::move(ckpt.model), load_knowledge(config)};
}

int eval(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const std::string path = o.data.empty() ? require_path(l.model->config().test_path, "test_path") : o.data;
  const auto labels = l.model->vocab().label_set();
  const auto samples = load_corpus(path, Split::kTest, &labels);
  const auto prepared = prepare_all(*l.model, samples, l.knowledge, miss_policy(o, MissPolicy::kError));
  const EvalReport r = evaluate(*l.model, prepared);
  out << std::left << std::setw(8) << "metric" << "value\n";
  out << std::fixed << std::setprecision(4);
  out << std::setw(8) << "ppl" << r.ppl << "\n"
      << std::setw(8) << "dist1" << r.dist1 << "\n"
      << std::setw(8) << "dist2" << r.dist2 << "\n"
      << std::setw(8) << "acc" << r.acc << "\n";
  out << std::defaultfloat;
  nlohmann::json j = {{"ppl", r.ppl}, {"dist1", r.dist1}, {"dist2", r.dist2}, {"acc", r.acc}};
  out << j.dump() << "\n";
  return 0;
}

std::vector<std::string> decode_tokens(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

int generate(const Options& o, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const auto samples = load_contexts(o.input);
  std::ofstream file;
  if (!o.output.empty()) {
    file.open(o.output);
    if (!file) throw Error("cannot write " + o.output);
  }
  std::ostream& dest = o.output.empty() ? out : file;
  const MissPolicy policy = miss_policy(o, MissPolicy::kError);
  for (const auto& s : samples) {
    PreparedSample p = l.model->prepare(s, l.knowledge, policy);
    auto f = l.model->forward(p, Mode::kInference, ForwardScope::kEncode);
    const auto generated = l.model->generate(p);
    nlohmann::json j = {{"id", s.id},
                        {"emotion_pred", l.model->vocab().label(predict_label(f.emotion_logits.value()))},
                        {"response", decode_tokens(l.model->vocab(), generated.tokens)}};
    dest << j.dump() << "\n";
  }
  return 0;
}

int chat(const Options& o, std::istream& in, std::ostream& out) {
  Loaded l = load_for_inference(o);
  const MissPolicy policy = miss_policy(o, MissPolicy::kPlaceholder);
  DialogueSample dialogue;
  dialogue.id = "chat";
  out << "type an utterance; /reset clears the history, /quit exits\n";
  std::string line;
  int turn = 0;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line == "/quit") break;
    if (line == "/reset") {
      dialogue.context.clear();
      dialogue.speakers.clear();
      continue;
    }
    Tokens tokens = tokenize_input(line);
    if (tokens.empty()) continue;
    dialogue.context.push_back(tokens);
    dialogue.speakers.emplace_back("speaker");
    PreparedSample p = l.model->prepare(dialogue, l.knowledge, policy);
    auto f = l.model->forward(p, Mode::kInference, ForwardScope::kEncode);
    const auto generated = l.model->generate(p);
    const auto words = decode_tokens(l.model->vocab(), generated.tokens);
    out << "emotion: " << l.model->vocab().label(predict_label(f.emotion_logits.value())) << "\n";
    out << "response: " << join_tokens(words) << "\n";
    dialogue.context.push_back(words);
    dialogue.speakers.emplace_back("listener");
    dialogue.id = "chat-" + std::to_string(++turn);
  }
  out << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empathetic dialogue model: preprocessing, training, evaluation and generation", "empathy"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "configuration file (key = value)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override a configuration key, key=value");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override a configuration key, key=value");
  };
  auto add_miss_flags = [&](CLI::App* sub) {
    auto* soft = sub->add_flag("--placeholder-misses", o.placeholder_misses,
                               "use placeholder inferences for contexts missing from the cache");
    sub->add_flag("--strict-misses", o.strict_misses, "fail on contexts missing from the cache")->excludes(soft);
  };

  auto* pre = app.add_subcommand("preprocess", "validate data and knowledge coverage, build the vocabulary");
  add_config(pre);
  auto* pretrain_cmd = app.add_subcommand("pretrain", "phase 1: bag-of-words pretraining of knowledge selection");
  add_config(pretrain_cmd);
  pretrain_cmd->add_option("-o,--out", o.out_path, "checkpoint to write")->required();
  auto* train_cmd = app.add_subcommand("train", "phase 2: full objective with early stopping");
  add_config(train_cmd);
  train_cmd->add_option("-o,--out", o.out_path, "checkpoint to write on validation improvement")->required();
  train_cmd->add_option("--init", o.init, "continue from a checkpoint (e.g. the pretrain output)")
      ->check(CLI::ExistingFile);
  train_cmd->add_flag("--skip-pretrain", o.skip_pretrain, "start without phase 1 when no --init is given");
  auto* eval_cmd = app.add_subcommand("eval", "report ppl, dist1, dist2 and acc");
  add_checkpoint(eval_cmd);
  eval_cmd->add_option("--data", o.data, "labeled JSONL corpus (default: test_path)")->check(CLI::ExistingFile);
  add_miss_flags(eval_cmd);
  auto* gen_cmd = app.add_subcommand("generate", "decode responses for a JSONL file of contexts");
  add_checkpoint(gen_cmd);
  gen_cmd->add_option("-i,--input", o.input, "JSONL contexts")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("-o,--output", o.output, "output JSONL (default: stdout)");
  add_miss_flags(gen_cmd);
  auto* chat_cmd = app.add_subcommand("chat", "interactive conversation on the terminal");
  add_checkpoint(chat_cmd);
  add_miss_flags(chat_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (pre->parsed()) return preprocess(o, out);
    if (pretrain_cmd->parsed()) return pretrain(o, out, err);
    if (train_cmd->parsed()) return train(o, out, err);
    if (eval_cmd->parsed()) return eval(o, out);
    if (gen_cmd->parsed()) return generate(o, out);
    if (chat_cmd->parsed()) return chat(o, in, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace empathy
