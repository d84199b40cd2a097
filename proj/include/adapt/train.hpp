#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adapt/batch.hpp"
#include "adapt/checkpoint.hpp"
#include "adapt/config.hpp"
#include "adapt/eval.hpp"

namespace adapt {

struct PretrainOptions {
  std::string out_dir;          // writes last.adck, last.adop, best.adck when non-empty
  std::string resume_from;      // checkpoint path; the matching .adop must sit next to it
  std::ostream* log = nullptr;  // line-delimited JSON records
  std::size_t stop_after_epochs = 0;  // 0: run all configured epochs
};

struct PretrainResult {
  std::vector<double> epoch_loss;  // mean reconstruction loss per epoch run in this call
  std::size_t first_epoch = 0;     // 0-based index of epoch_loss[0]
  Checkpoint last;
  Checkpoint best;
  double best_loss = 0.0;
};

PretrainResult pretrain(const PipelineConfig& cfg, const SampleStore& store, const PretrainOptions& opts = {});

// Mean masked reconstruction loss of `network` over one deterministic augmentation of `store`.
double reconstruction_loss(const Network<float>& network, const PipelineConfig& cfg, const SampleStore& store,
                           std::uint64_t seed);

std::vector<std::uint32_t> predict(const Network<float>& network, const SampleStore& store, std::size_t batch_size);
MetricsReport evaluate(const Network<float>& network, const SampleStore& store, std::size_t batch_size = 64);

struct FinetuneResult {
  MetricsReport test;
  std::optional<MetricsReport> best_val;
  std::vector<double> epoch_loss;
  Checkpoint model;
};

// Cross-entropy fine-tuning. In finetune_lc mode only the classifier is trained; the encoder tensors
// are copied through untouched and no gradient storage is allocated for them.
FinetuneResult finetune(const PipelineConfig& cfg, const Checkpoint& pretrained, const SampleStore& train,
                        const SampleStore* val, const SampleStore& test, std::size_t n_classes, std::uint64_t seed,
                        std::ostream* log = nullptr);

struct FinetuneSummary {
  std::vector<FinetuneResult> runs;
  MetricsReport aggregate;
};

// Repeats fine-tuning with seeds seed, seed+1, ... (cfg.finetune.seeds runs).
FinetuneSummary finetune_seeds(const PipelineConfig& cfg, const Checkpoint& pretrained, const SampleStore& train,
                               const SampleStore* val, const SampleStore& test, std::size_t n_classes,
                               std::ostream* log = nullptr);

}  // namespace adapt
