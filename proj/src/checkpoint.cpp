#include "empathy/checkpoint.hpp"

#include "empathy/errors.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace empathy {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'P', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_matrix(std::string& out, const ag::Matrix& m) {
  // Eigen stores column-major; the layout is recorded implicitly by shape.
  out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void fill(ag::Matrix& m) {
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    need(n);
    std::memcpy(m.data(), bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }

  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = sizeof(kMagic) + sizeof(std::uint32_t);
};

}  // namespace

void save_checkpoint(const std::string& path, const CaseModel& model, const Trainer* trainer) {
  nlohmann::json header;
  header["config"] = model.config().to_json();
  header["tokens"] = model.vocab().tokens();
  header["labels"] = model.vocab().labels();
  header["token_counts"] = model.token_counts();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& [name, p] : model.params().items()) shapes.push_back({name, p.rows(), p.cols()});
  header["parameters"] = shapes;
  header["global_step"] = trainer ? trainer->global_step() : 0;
  nlohmann::json slot_steps = nlohmann::json::array();
  if (trainer) {
    for (const auto& s : trainer->optimizer().slots()) slot_steps.push_back(s.steps);
  }
  header["optimizer_steps"] = slot_steps;

  std::string out(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  const std::string text = header.dump();
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (const auto& [name, p] : model.params().items()) put_matrix(out, p.value());
  if (trainer) {
    for (const auto& s : trainer->optimizer().slots()) {
      put_matrix(out, s.m);
      put_matrix(out, s.v);
    }
  }
  put(out, fnv1a(out));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path + " is not a checkpoint file");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected version " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < sizeof(kMagic) + sizeof(std::uint32_t) + 2 * sizeof(std::uint64_t)) {
    throw CheckpointError("checkpoint is truncated");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  if (stored != fnv1a(bytes.substr(0, body))) throw CheckpointError("checkpoint checksum mismatch; file is corrupted");

  Reader in(bytes, body);
  nlohmann::json header;
  try {
    const auto size = in.get<std::uint64_t>();
    header = nlohmann::json::parse(in.take(static_cast<std::size_t>(size)));

    TrainConfig config = TrainConfig::from_json(header.at("config"));
    Vocabulary vocab(header.at("tokens").get<std::vector<std::string>>(),
                     header.at("labels").get<std::vector<std::string>>());
    LoadedCheckpoint out;
    out.model = std::make_unique<CaseModel>(config, vocab, ag::Matrix::Zero(vocab.size(), config.d));
    out.model->set_token_counts(header.at("token_counts").get<std::vector<long>>());
    out.global_step = header.at("global_step").get<long>();

    const auto& shapes = header.at("parameters");
    const auto& items = out.model->params().items();
    if (shapes.size() != items.size()) throw CheckpointError("checkpoint parameter count does not match the model");
    for (std::size_t i = 0; i < items.size(); ++i) {
      Var p = items[i].second;
      if (shapes[i].at(0).get<std::string>() != items[i].first || shapes[i].at(1).get<long>() != p.rows() ||
          shapes[i].at(2).get<long>() != p.cols()) {
        throw CheckpointError("checkpoint parameter " + shapes[i].at(0).get<std::string>() +
                              " does not match the model layout");
      }
      in.fill(p.mutable_value());
    }
    const auto steps = header.at("optimizer_steps").get<std::vector<long>>();
    if (!steps.empty()) {
      if (steps.size() != items.size()) throw CheckpointError("optimizer state does not match the parameters");
      for (std::size_t i = 0; i < items.size(); ++i) {
        Adam::Slot s{ag::Matrix(items[i].second.rows(), items[i].second.cols()),
                     ag::Matrix(items[i].second.rows(), items[i].second.cols()), steps[i]};
        in.fill(s.m);
        in.fill(s.v);
        out.optimizer.push_back(std::move(s));
      }
    }
    if (!in.done()) throw CheckpointError("checkpoint has trailing data");
    return out;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
}

void restore_trainer(Trainer& trainer, const LoadedCheckpoint& checkpoint) {
  trainer.set_global_step(checkpoint.global_step);
  if (checkpoint.optimizer.empty()) return;
  auto& slots = trainer.optimizer().mutable_slots();
  if (slots.size() != checkpoint.optimizer.size()) throw CheckpointError("optimizer state does not match the model");
  slots = checkpoint.optimizer;
}

}  // namespace empathy
