#include "empathy/config.hpp"

#include "empathy/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace empathy {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    try {
      std::size_t pos = 0;
      out = static_cast<T>(std::stod(value, &pos));
      if (pos == value.size()) return out;
    } catch (const std::logic_error&) {
    }
  } else {
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec == std::errc() && ptr == value.data() + value.size()) return out;
  }
  throw ConfigError("bad value '" + value + "' for " + key);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field field(T TrainConfig::*member) {
  Field f;
  f.set = [member](TrainConfig& c, const std::string& key, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(key, v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      c.*member = v;
    } else {
      c.*member = parse_number<T>(key, v);
    }
  };
  f.get = [member](const TrainConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, bool>) {
      return c.*member ? "true" : "false";
    } else if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

Field gamma_field(std::size_t i) {
  return {[i](TrainConfig& c, const std::string& key, const std::string& v) {
            c.gamma[i] = parse_number<double>(key, v);
          },
          [i](const TrainConfig& c) { return format_double(c.gamma[i]); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"l", field(&TrainConfig::l)},
      {"n_prime", field(&TrainConfig::n_prime)},
      {"max_segments", field(&TrainConfig::max_segments)},
      {"max_graph_vertices", field(&TrainConfig::max_graph_vertices)},
      {"min_freq", field(&TrainConfig::min_freq)},
      {"alpha", field(&TrainConfig::alpha)},
      {"gamma1", gamma_field(0)},
      {"gamma2", gamma_field(1)},
      {"gamma3", gamma_field(2)},
      {"gamma4", gamma_field(3)},
      {"div_epsilon", field(&TrainConfig::div_epsilon)},
      {"d", field(&TrainConfig::d)},
      {"heads", field(&TrainConfig::heads)},
      {"layers", field(&TrainConfig::layers)},
      {"ffn_mult", field(&TrainConfig::ffn_mult)},
      {"batch_size", field(&TrainConfig::batch_size)},
      {"beta1", field(&TrainConfig::beta1)},
      {"beta2", field(&TrainConfig::beta2)},
      {"adam_eps", field(&TrainConfig::adam_eps)},
      {"base_lr", field(&TrainConfig::base_lr)},
      {"warmup", field(&TrainConfig::warmup)},
      {"seed", field(&TrainConfig::seed)},
      {"patience", field(&TrainConfig::patience)},
      {"phase1_steps", field(&TrainConfig::phase1_steps)},
      {"phase2_steps", field(&TrainConfig::phase2_steps)},
      {"eval_every", field(&TrainConfig::eval_every)},
      {"log_every", field(&TrainConfig::log_every)},
      {"max_decode", field(&TrainConfig::max_decode)},
      {"use_cs_graph", field(&TrainConfig::use_cs_graph)},
      {"use_ec_graph", field(&TrainConfig::use_ec_graph)},
      {"use_coarse", field(&TrainConfig::use_coarse)},
      {"use_fine", field(&TrainConfig::use_fine)},
      {"concepts_first", field(&TrainConfig::concepts_first)},
      {"train_path", field(&TrainConfig::train_path)},
      {"valid_path", field(&TrainConfig::valid_path)},
      {"test_path", field(&TrainConfig::test_path)},
      {"cache_path", field(&TrainConfig::cache_path)},
      {"concepts_path", field(&TrainConfig::concepts_path)},
      {"vad_path", field(&TrainConfig::vad_path)},
      {"embeddings_path", field(&TrainConfig::embeddings_path)},
      {"vocab_path", field(&TrainConfig::vocab_path)},
  };
  return table;
}

const Field& lookup(const std::string& key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) { lookup(key).set(*this, key, trim(value)); }

std::string TrainConfig::get(const std::string& key) const { return lookup(key).get(*this); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return names;
}

void TrainConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("l", l);
  positive("n_prime", n_prime);
  positive("max_segments", max_segments);
  positive("max_graph_vertices", max_graph_vertices);
  positive("min_freq", min_freq);
  positive("d", d);
  positive("heads", heads);
  positive("layers", layers);
  positive("ffn_mult", ffn_mult);
  positive("batch_size", batch_size);
  positive("base_lr", base_lr);
  positive("warmup", warmup);
  positive("adam_eps", adam_eps);
  positive("max_decode", max_decode);
  positive("div_epsilon", div_epsilon);
  positive("eval_every", eval_every);
  positive("patience", patience);
  if (alpha < 0) throw ConfigError("alpha must be non-negative");
  for (double g : gamma) {
    if (g < 0) throw ConfigError("gamma weights must be non-negative");
  }
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) throw ConfigError("Adam betas must lie in (0, 1)");
  if (d % heads != 0) throw ConfigError("d must be divisible by heads");
  if (phase1_steps < 0 || phase2_steps < 0) throw ConfigError("step budgets must be non-negative");
  if (max_decode > 30) throw ConfigError("max_decode is capped at 30");
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, f] : fields()) j[name] = f.get(*this);
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) c.set(key, value.get<std::string>());
  return c;
}

}  // namespace empathy
