#pragma once

// Optimizer, learning-rate schedule and the two training phases.

#include "empathy/model.hpp"

#include <functional>
#include <vector>

namespace empathy {

// base_lr * min(step / warmup, sqrt(warmup / step)): linear warmup to
// base_lr at `warmup`, then inverse square-root decay. `step` is 1-based.
double learning_rate(long step, double base_lr, int warmup);

class Adam {
 public:
  struct Slot {
    ag::Matrix m;
    ag::Matrix v;
    long steps = 0;  // updates applied to this parameter
  };

  Adam(const nn::ParameterSet& params, double beta1, double beta2, double eps);

  // Updates every parameter holding a gradient; the others keep their
  // moments untouched.
  void step(nn::ParameterSet& params, double lr);

  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<Slot>& mutable_slots() { return slots_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  std::vector<Slot> slots_;
};

// Deterministic epoch-wise shuffling of sample indices.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t count_;
  std::size_t batch_size_;
  nn::Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
};

struct StepLog {
  long step = 0;  // global optimizer step
  double lr = 0.0;
  double total = 0.0;
  double align = 0.0;
  double emotion = 0.0;
  double generation = 0.0;
  double diversity = 0.0;
  double bow = 0.0;
  double kl = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
};

using StepLogger = std::function<void(const StepLog&)>;

struct TrainResult {
  std::vector<StepLog> log;
  int steps = 0;  // steps taken in this phase
  bool early_stopped = false;
  double best_valid_ppl = 0.0;  // 0 when no evaluation ran
  long best_step = 0;
  std::vector<double> valid_ppl;  // one entry per evaluation
};

// Owns the optimizer and the global step shared by both phases.
class Trainer {
 public:
  explicit Trainer(CaseModel& model);

  CaseModel& model() { return model_; }
  Adam& optimizer() { return optimizer_; }
  const Adam& optimizer() const { return optimizer_; }
  long global_step() const { return global_step_; }
  void set_global_step(long step) { global_step_ = step; }

  // Minimizes the bag-of-words loss only, for config.phase1_steps steps.
  // Returns the per-step loss trace; budget 0 leaves the model untouched.
  std::vector<double> pretrain_phase(const std::vector<PreparedSample>& train, const StepLogger& logger = {});

  // Minimizes the full objective for up to config.phase2_steps steps,
  // evaluating validation PPL every config.eval_every steps. Training stops
  // after `patience` evaluations without improvement and the parameters of
  // the best evaluation are restored. `on_improve` runs after each
  // improvement (checkpointing); it never runs otherwise.
  TrainResult train_phase(const std::vector<PreparedSample>& train, const std::vector<PreparedSample>& valid,
                          const StepLogger& logger = {},
                          const std::function<void(long step, double ppl)>& on_improve = {});

  // One optimizer step on the full objective; returns the logged values.
  StepLog train_step(const std::vector<const PreparedSample*>& batch);

 private:
  CaseModel& model_;
  Adam optimizer_;
  long global_step_ = 0;
};

}  // namespace empathy
