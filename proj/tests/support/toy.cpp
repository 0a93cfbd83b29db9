#include "toy.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <random>

namespace toy {

using namespace empathy;

namespace {

struct Script {
  std::string emotion;
  std::vector<std::string> context;  // utterances, space separated
  std::string response;
};

const std::vector<Script>& scripts() {
  static const std::vector<Script> s = {
      {"joyful", {"i won the race today ! i feel great ."}, "congratulations ! you earned it ."},
      {"joyful", {"guess what ?", "what happened ?", "i got the job !"}, "that is great news !"},
      {"joyful", {"my sister had a baby ."}, "how wonderful for your family !"},
      {"sad", {"i lost my dog . i miss him ."}, "i am so sorry for your loss ."},
      {"sad", {"my best friend moved away ."}, "that must feel lonely ."},
      {"sad", {"how are you ?", "fine . you ?", "i cried all night ."}, "what made you so sad ?"},
      {"afraid", {"i heard a noise in the dark . i was scared ."}, "did you check the house ?"},
      {"afraid", {"the storm is getting worse !"}, "stay inside and stay safe ."},
      {"angry", {"my neighbor was rude to me ."}, "that is not okay at all ."},
      {"angry", {"someone broke my car window !", "oh no !", "i am furious ."}, "you should call the police ."},
  };
  return s;
}

const std::map<std::string, std::string>& reactions() {
  static const std::map<std::string, std::string> r = {
      {"joyful", "glad"}, {"sad", "upset"}, {"afraid", "nervous"}, {"angry", "mad"}};
  return r;
}

const std::map<std::string, std::vector<std::string>>& concept_links() {
  static const std::map<std::string, std::vector<std::string>> c = {
      {"won", {"joy", "party"}},       {"great", {"happiness", "joy"}}, {"job", {"party"}},
      {"baby", {"joy", "happiness"}},  {"lost", {"sorrow", "grief"}},   {"miss", {"sorrow"}},
      {"cried", {"tears", "grief"}},   {"moved", {"sorrow"}},           {"dark", {"fear", "danger"}},
      {"scared", {"fear"}},            {"noise", {"danger"}},           {"storm", {"danger", "fear"}},
      {"rude", {"rage", "insult"}},    {"broke", {"rage"}},             {"furious", {"rage"}},
      {"today", {"thing"}},
  };
  return c;
}

const std::map<std::string, Vad>& lexicon() {
  static const std::map<std::string, Vad> v = {
      {"joy", {0.98, 0.82, 0.7}},     {"party", {0.9, 0.85, 0.6}},   {"happiness", {0.96, 0.7, 0.7}},
      {"sorrow", {0.08, 0.4, 0.2}},   {"grief", {0.05, 0.5, 0.2}},   {"tears", {0.2, 0.55, 0.3}},
      {"fear", {0.07, 0.88, 0.2}},    {"danger", {0.12, 0.9, 0.4}},  {"rage", {0.04, 0.96, 0.6}},
      {"insult", {0.1, 0.7, 0.5}},    {"thing", {0.5, 0.0, 0.5}},
  };
  return v;
}

const char* cognition_prefix(Relation r) {
  switch (r) {
    case Relation::kIntent:
      return "to";
    case Relation::kNeed:
      return "needs";
    case Relation::kWant:
      return "wants";
    case Relation::kEffect:
      return "gets";
    case Relation::kReact:
      break;
  }
  return "feels";
}

}  // namespace

World make_world(int l) {
  World w{{}, {CommonsenseCache(l), ConceptStore(), VadLexicon()}, {}};
  int index = 0;
  for (const auto& s : scripts()) {
    DialogueSample d;
    d.id = "toy-" + std::to_string(index++);
    for (std::size_t i = 0; i < s.context.size(); ++i) {
      d.context.push_back(split_whitespace(s.context[i]));
      d.speakers.emplace_back(i % 2 == 0 ? "speaker" : "listener");
    }
    d.response = split_whitespace(s.response);
    d.emotion = s.emotion;
    w.samples.push_back(d);

    for (const auto& u : segment_last_utterance(d.context.back())) {
      std::vector<std::string> words;
      for (const auto& t : u) {
        if (!is_terminal_punctuation(t)) words.push_back(t);
      }
      if (words.empty()) words = u;
      for (int r = 0; r <= static_cast<int>(Relation::kReact); ++r) {
        const auto rel = static_cast<Relation>(r);
        std::vector<std::string> inferences;
        for (int j = 0; j < l; ++j) {
          const std::string& word = words[static_cast<std::size_t>(j + r) % words.size()];
          if (rel == Relation::kReact) {
            inferences.push_back(j == 0 ? reactions().at(s.emotion) : reactions().at(s.emotion) + " " + word);
          } else {
            inferences.push_back(std::string(cognition_prefix(rel)) + " " + word);
          }
        }
        w.knowledge.cache.insert(join_tokens(u), rel, inferences);
      }
    }
  }

  std::vector<std::string> concept_words;
  for (const auto& [word, vad] : lexicon()) {
    w.knowledge.vad.insert(word, vad);
    concept_words.push_back(word);
  }
  const auto bounds = compute_intensity_bounds(concept_words, w.knowledge.vad);
  for (const auto& [token, concepts] : concept_links()) {
    for (const auto& c : concepts) {
      w.knowledge.concepts.insert(token, {c, "RelatedTo", 1.0, emotion_intensity(c, w.knowledge.vad, bounds)});
    }
  }

  w.vocab = build_vocab(w.samples, 1, knowledge_tokens(w.samples, w.knowledge.cache, w.knowledge.concepts, 10));
  return w;
}

TrainConfig small_config(int l) {
  TrainConfig c;
  c.l = l;
  c.d = 32;
  c.heads = 2;
  c.layers = 2;
  c.ffn_mult = 2;
  c.batch_size = 10;
  c.base_lr = 3e-3;
  c.warmup = 20;
  c.phase1_steps = 200;
  c.phase2_steps = 500;
  c.eval_every = 50;
  c.patience = 100;
  c.log_every = 50;
  c.seed = 7;
  return c;
}

std::filesystem::path write_files(const std::filesystem::path& dir, const World& world, const TrainConfig& base) {
  std::filesystem::create_directories(dir);
  auto write_jsonl = [&](const std::string& name, bool with_targets) {
    std::ofstream out(dir / name);
    for (const auto& s : world.samples) {
      nlohmann::json j = {{"id", s.id}, {"context", s.context}, {"speakers", s.speakers}};
      if (with_targets) {
        j["response"] = s.response;
        j["emotion"] = s.emotion;
      }
      out << j.dump() << "\n";
    }
    return (dir / name).string();
  };
  TrainConfig config = base;
  config.train_path = write_jsonl("train.jsonl", true);
  config.valid_path = write_jsonl("valid.jsonl", true);
  config.test_path = write_jsonl("test.jsonl", true);
  write_jsonl("contexts.jsonl", false);
  config.cache_path = (dir / "cache.json").string();
  world.knowledge.cache.save(config.cache_path);
  config.vad_path = (dir / "vad.tsv").string();
  world.knowledge.vad.save(config.vad_path);
  config.concepts_path = (dir / "concepts.tsv").string();
  world.knowledge.concepts.save(config.concepts_path);
  config.vocab_path = (dir / "vocab.json").string();
  const auto path = dir / "config.txt";
  std::ofstream(path) << config.to_text();
  return path;
}

std::vector<PreparedSample> prepare(const CaseModel& model, const World& world) {
  std::vector<PreparedSample> out;
  for (const auto& s : world.samples) out.push_back(model.prepare(s, world.knowledge));
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() / ("empathy-" + name + "-" + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace toy
