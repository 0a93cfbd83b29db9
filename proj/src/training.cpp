#include "empathy/training.hpp"

#include "empathy/errors.hpp"
#include "empathy/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace empathy {

double learning_rate(long step, double base_lr, int warmup) {
  if (step < 1) step = 1;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(const nn::ParameterSet& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, p] : params.items()) {
    slots_.push_back({ag::Matrix::Zero(p.rows(), p.cols()), ag::Matrix::Zero(p.rows(), p.cols()), 0});
  }
}

void Adam::step(nn::ParameterSet& params, double lr) {
  auto& items = params.items();
  if (items.size() != slots_.size()) throw ShapeError("optimizer state does not match the parameter set");
  for (std::size_t i = 0; i < items.size(); ++i) {
    Var p = items[i].second;
    if (!p.has_grad()) continue;
    auto& s = slots_[i];
    const ag::Matrix& g = p.grad();
    ++s.steps;
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.steps));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.steps));
    p.mutable_value().array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

BatchSampler::BatchSampler(std::size_t count, int batch_size, std::uint64_t seed)
    : count_(count), batch_size_(static_cast<std::size_t>(batch_size)), rng_(seed), order_(count), cursor_(count) {
  if (count == 0) throw DataError("cannot sample batches from an empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
}

std::vector<std::size_t> BatchSampler::next() {
  const std::size_t size = std::min(batch_size_, count_);
  std::vector<std::size_t> batch;
  while (batch.size() < size) {
    if (cursor_ == count_) {
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

namespace {

double value_or_zero(const Var& v) { return v.defined() ? v.item() : 0.0; }

std::vector<const PreparedSample*> gather(const std::vector<PreparedSample>& data,
                                          const std::vector<std::size_t>& idx) {
  std::vector<const PreparedSample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&data[i]);
  return out;
}

std::vector<ag::Matrix> snapshot(const nn::ParameterSet& params) {
  std::vector<ag::Matrix> out;
  for (const auto& [name, p] : params.items()) out.push_back(p.value());
  return out;
}

void restore(nn::ParameterSet& params, const std::vector<ag::Matrix>& values) {
  auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    Var p = items[i].second;
    p.mutable_value() = values[i];
  }
}

}  // namespace

Trainer::Trainer(CaseModel& model)
    : model_(model),
      optimizer_(model.params(), model.config().beta1, model.config().beta2, model.config().adam_eps) {}

std::vector<double> Trainer::pretrain_phase(const std::vector<PreparedSample>& train, const StepLogger& logger) {
  const auto& cfg = model_.config();
  std::vector<double> trace;
  if (cfg.phase1_steps == 0) return trace;
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.seed);
  for (int s = 0; s < cfg.phase1_steps; ++s) {
    const auto batch = gather(train, sampler.next());
    model_.params().zero_grad();
    Var loss = model_.batch_bow_loss(batch);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw TrainingDiverged("bag-of-words loss became non-finite at pretraining step " + std::to_string(s + 1));
    }
    ag::backward(loss);
    ++global_step_;
    const double lr = learning_rate(global_step_, cfg.base_lr, cfg.warmup);
    optimizer_.step(model_.params(), lr);
    trace.push_back(value);
    if (logger) {
      StepLog log;
      log.step = global_step_;
      log.lr = lr;
      log.total = value;
      log.align = value;
      log.bow = value;
      logger(log);
    }
  }
  model_.params().zero_grad();
  return trace;
}

StepLog Trainer::train_step(const std::vector<const PreparedSample*>& batch) {
  const auto& cfg = model_.config();
  model_.params().zero_grad();
  LossBreakdown losses = model_.batch_losses(batch, Mode::kTrain);
  StepLog log;
  log.total = losses.total.item();
  log.align = value_or_zero(losses.align);
  log.emotion = value_or_zero(losses.emotion);
  log.generation = value_or_zero(losses.generation);
  log.diversity = value_or_zero(losses.diversity);
  log.bow = value_or_zero(losses.bow);
  log.kl = value_or_zero(losses.kl);
  log.coarse = value_or_zero(losses.coarse);
  log.fine = value_or_zero(losses.fine);
  for (double v : {log.total, log.align, log.emotion, log.generation, log.diversity}) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "loss became non-finite at step " << global_step_ + 1 << " (align=" << log.align
          << " emotion=" << log.emotion << " generation=" << log.generation << " diversity=" << log.diversity << ")";
      throw TrainingDiverged(msg.str());
    }
  }
  ag::backward(losses.total);
  ++global_step_;
  log.step = global_step_;
  log.lr = learning_rate(global_step_, cfg.base_lr, cfg.warmup);
  optimizer_.step(model_.params(), log.lr);
  model_.params().zero_grad();
  return log;
}

TrainResult Trainer::train_phase(const std::vector<PreparedSample>& train, const std::vector<PreparedSample>& valid,
                                 const StepLogger& logger,
                                 const std::function<void(long, double)>& on_improve) {
  const auto& cfg = model_.config();
  TrainResult result;
  if (cfg.phase2_steps == 0) return result;
  BatchSampler sampler(train.size(), cfg.batch_size, cfg.seed + 1);
  std::vector<ag::Matrix> best;
  int stale = 0;
  for (int s = 0; s < cfg.phase2_steps; ++s) {
    StepLog log = train_step(gather(train, sampler.next()));
    result.log.push_back(log);
    ++result.steps;
    if (logger) logger(log);
    const bool last = s + 1 == cfg.phase2_steps;
    if (valid.empty() || ((s + 1) % cfg.eval_every != 0 && !last)) continue;
    const double ppl = evaluate_ppl(model_, valid);
    result.valid_ppl.push_back(ppl);
    if (best.empty() || ppl < result.best_valid_ppl) {
      result.best_valid_ppl = ppl;
      result.best_step = global_step_;
      best = snapshot(model_.params());
      stale = 0;
      if (on_improve) on_improve(global_step_, ppl);
    } else if (++stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  if (!best.empty()) restore(model_.params(), best);
  return result;
}

}  // namespace empathy
