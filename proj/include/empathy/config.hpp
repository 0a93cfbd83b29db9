#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace empathy {

struct TrainConfig {
  // Knowledge and graphs.
  int l = 5;
  int n_prime = 10;
  int max_segments = 6;
  int max_graph_vertices = 512;
  int min_freq = 1;

  // Losses.
  double alpha = 0.2;
  std::array<double, 4> gamma = {1.0, 1.0, 1.0, 1.5};
  double div_epsilon = 0.1;

  // Architecture.
  int d = 300;
  int heads = 2;
  int layers = 2;
  int ffn_mult = 4;

  // Optimization.
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double base_lr = 1e-4;
  int warmup = 4000;
  std::uint64_t seed = 1;
  int patience = 5;
  int phase1_steps = 1000;
  int phase2_steps = 20000;
  int eval_every = 500;
  int log_every = 50;

  int max_decode = 30;

  // Ablation switches.
  bool use_cs_graph = true;
  bool use_ec_graph = true;
  bool use_coarse = true;
  bool use_fine = true;
  bool concepts_first = false;  // order of the two knowledge cross-attentions

  // Data.
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string cache_path;
  std::string concepts_path;
  std::string vad_path;
  std::string embeddings_path;
  std::string vocab_path;

  // Throws ConfigError for unknown keys, bad values or failed validation.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  void validate() const;

  // Flat `key = value` text; '#' starts a comment.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
  std::string to_text() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace empathy
