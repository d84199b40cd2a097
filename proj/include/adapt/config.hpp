#pragma once

#include <cstdint>
#include <string>

#include "adapt/align.hpp"
#include "adapt/augment.hpp"
#include "adapt/ingest.hpp"
#include "adapt/model.hpp"

namespace adapt {

enum class TrainMode { kPretrain, kFinetune, kFinetuneLC };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

struct TrainConfig {
  double base_lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t epochs = 1000;
  std::size_t warmup_epochs = 40;
  double clip_max_norm = 1.0;
  std::size_t batch_size = 1024;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kPretrain;
  bool balance_datasets = false;
  bool shared_n = false;        // one mask count for both loss terms
  bool noised_targets = false;  // reconstruct s_n instead of A(s)
  std::size_t seeds = 5;        // fine-tuning repetitions

  void validate() const;
};

struct PipelineConfig {
  NormScope scope = NormScope::kPerSample;
  AlignConfig align;
  NoiseConfig noise;
  SpanMaskConfig mask;
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig finetune;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default
  bool prefetch = true;

  // Full-scale values: 256 x 32 representation, 6 x 128 encoder, batch 1024, 1000 epochs.
  static PipelineConfig full();
  // Small enough to pretrain and fine-tune on one CPU core in minutes.
  static PipelineConfig desk();

  // Copies the global seed into both loops and checks cross-section consistency.
  void finalize();
  void validate() const;
};

// INI file with sections [run] [ingest] [align] [noise] [mask] [model] [pretrain] [finetune].
// Keys not present keep the values already in `base`. `[run] preset = full|desk` selects the base.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& ini_text);

// Every resolved value, one `section.key = value` per line, with the unstated-by-source defaults
// annotated.
std::string describe(const PipelineConfig& cfg);

}  // namespace adapt
