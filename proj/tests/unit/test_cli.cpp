#include "empathy/cli.hpp"
#include "toy.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using namespace empathy;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const std::string& input = {}) {
  std::istringstream in(input);
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

class CliFlow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new std::filesystem::path(toy::scratch_dir("cli"));
    TrainConfig c = toy::small_config();
    c.d = 16;
    c.layers = 1;
    c.phase1_steps = 20;
    c.phase2_steps = 40;
    c.eval_every = 20;
    c.log_every = 10;
    config_ = new std::string(toy::write_files(*dir_, toy::make_world(), c).string());
    ckpt_ = new std::string((*dir_ / "model.ckpt").string());
  }
  static void TearDownTestSuite() {
    std::filesystem::remove_all(*dir_);
    delete dir_;
    delete config_;
    delete ckpt_;
  }
  static std::filesystem::path* dir_;
  static std::string* config_;
  static std::string* ckpt_;
};

std::filesystem::path* CliFlow::dir_ = nullptr;
std::string* CliFlow::config_ = nullptr;
std::string* CliFlow::ckpt_ = nullptr;

}  // namespace

TEST(Cli, UsageErrorsExitNonzero) {
  const auto none = run({});
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.err.find("Usage"), std::string::npos);
  const auto unknown = run({"dance"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("error:"), std::string::npos);
  const auto missing = run({"preprocess"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--config"), std::string::npos);
  const auto absent = run({"train", "-c", "/nonexistent/config.txt", "-o", "x.ckpt"});
  EXPECT_EQ(absent.code, 2);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("generate"), std::string::npos);
}

TEST_F(CliFlow, TrainEvaluateGenerateAndChat) {
  const auto pre = run({"preprocess", "-c", *config_});
  ASSERT_EQ(pre.code, 0) << pre.err;
  EXPECT_TRUE(std::filesystem::exists(*dir_ / "vocab.json"));

  const auto pretrain_path = (*dir_ / "pretrain.ckpt").string();
  const auto pre_train = run({"pretrain", "-c", *config_, "-o", pretrain_path});
  ASSERT_EQ(pre_train.code, 0) << pre_train.err;
  EXPECT_NE(pre_train.err.find("pretrain step 1 "), std::string::npos);
  EXPECT_NE(pre_train.out.find("pretrained 20 steps"), std::string::npos);

  const auto train = run({"train", "-c", *config_, "-o", *ckpt_, "--init", pretrain_path});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_NE(train.err.find("train step 21 "), std::string::npos) << train.err;
  EXPECT_NE(train.err.find("validation ppl"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(*ckpt_));

  const auto mismatch = run({"train", "-c", *config_, "-o", (*dir_ / "x.ckpt").string(), "--init", pretrain_path,
                             "--set", "d=32"});
  EXPECT_EQ(mismatch.code, 2);

  const auto eval = run({"eval", "--checkpoint", *ckpt_});
  ASSERT_EQ(eval.code, 0) << eval.err;
  const auto eval_lines = lines_of(eval.out);
  ASSERT_FALSE(eval_lines.empty());
  EXPECT_NE(eval.out.find("metric"), std::string::npos);
  const auto metrics = nlohmann::json::parse(eval_lines.back());
  for (const char* key : {"ppl", "dist1", "dist2", "acc"}) {
    ASSERT_TRUE(metrics.contains(key)) << key;
    EXPECT_TRUE(metrics[key].is_number()) << key;
  }
  EXPECT_GT(metrics["ppl"].get<double>(), 1.0);
  EXPECT_EQ(metrics.size(), 4u);

  const auto contexts = (*dir_ / "contexts.jsonl").string();
  const auto out_path = (*dir_ / "generated.jsonl").string();
  const auto gen = run({"generate", "--checkpoint", *ckpt_, "-i", contexts, "-o", out_path});
  ASSERT_EQ(gen.code, 0) << gen.err;
  std::ifstream in(out_path);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto generated = lines_of(all);
  std::ifstream ctx(contexts);
  std::string ctx_all((std::istreambuf_iterator<char>(ctx)), std::istreambuf_iterator<char>());
  EXPECT_EQ(generated.size(), lines_of(ctx_all).size());
  for (const auto& line : generated) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j["id"].is_string());
    EXPECT_TRUE(j["emotion_pred"].is_string());
    EXPECT_TRUE(j["response"].is_array());
    EXPECT_LE(j["response"].size(), 30u);
  }

  const auto chat = run({"chat", "--checkpoint", *ckpt_}, "i lost my keys today .\nthat sounds hard !\n");
  ASSERT_EQ(chat.code, 0) << chat.err;
  int responses = 0;
  int emotions = 0;
  for (const auto& line : lines_of(chat.out)) {
    const auto pos = line.find("response:");
    if (line.find("emotion:") != std::string::npos) ++emotions;
    if (pos == std::string::npos) continue;
    ++responses;
    std::istringstream words(line.substr(pos + 9));
    int count = 0;
    for (std::string w; words >> w;) ++count;
    EXPECT_LE(count, 30);
  }
  EXPECT_EQ(responses, 2);
  EXPECT_EQ(emotions, 2);

  const auto quit = run({"chat", "--checkpoint", *ckpt_}, "hello there\n/reset\n/quit\nignored line\n");
  ASSERT_EQ(quit.code, 0);
  EXPECT_EQ(quit.out.find("response:", quit.out.find("response:") + 1), std::string::npos);

  const auto strict = run({"generate", "--checkpoint", *ckpt_, "-i", contexts, "--strict-misses"});
  EXPECT_EQ(strict.code, 0) << strict.err;
  EXPECT_EQ(lines_of(strict.out).size(), lines_of(ctx_all).size());
}

TEST_F(CliFlow, MissingCheckpointAndUncachedContextsFail) {
  const auto none = run({"eval", "--checkpoint", (*dir_ / "absent.ckpt").string()});
  EXPECT_EQ(none.code, 2);

  ASSERT_EQ(run({"preprocess", "-c", *config_}).code, 0);
  const auto model_path = (*dir_ / "skip.ckpt").string();
  const auto train = run({"train", "-c", *config_, "-o", model_path, "--skip-pretrain", "--set", "phase2_steps=2",
                          "--set", "eval_every=1"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_EQ(train.err.find("pretrain step"), std::string::npos);

  const auto uncached = (*dir_ / "uncached.jsonl").string();
  std::ofstream(uncached) << R"({"id": "new", "context": [["a", "brand", "new", "line", "."]]})" << "\n";
  const auto strict = run({"generate", "--checkpoint", model_path, "-i", uncached});
  EXPECT_EQ(strict.code, 1);
  EXPECT_NE(strict.err.find("error:"), std::string::npos);
  const auto soft = run({"generate", "--checkpoint", model_path, "-i", uncached, "--placeholder-misses"});
  EXPECT_EQ(soft.code, 0) << soft.err;
  EXPECT_EQ(lines_of(soft.out).size(), 1u);

  const auto bad_key = run({"train", "-c", *config_, "-o", model_path, "--set", "bogus=1"});
  EXPECT_EQ(bad_key.code, 2);
  EXPECT_NE(bad_key.err.find("bogus"), std::string::npos);
}
