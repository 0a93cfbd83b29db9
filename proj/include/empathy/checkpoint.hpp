#pragma once

// Binary checkpoint: magic, format version, a JSON header (config,
// vocabulary, labels, token counts, parameter shapes, step), then raw
// little-endian doubles for parameters and optional Adam moments, followed
// by a checksum of everything before it.

#include "empathy/training.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace empathy {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  std::unique_ptr<CaseModel> model;
  std::vector<Adam::Slot> optimizer;  // empty when saved without a trainer
  long global_step = 0;
};

void save_checkpoint(const std::string& path, const CaseModel& model, const Trainer* trainer = nullptr);

// Throws CheckpointError on unreadable, truncated or corrupted files and on
// version mismatches.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies the stored optimizer state and step into a trainer of the loaded
// model.
void restore_trainer(Trainer& trainer, const LoadedCheckpoint& checkpoint);

}  // namespace empathy
