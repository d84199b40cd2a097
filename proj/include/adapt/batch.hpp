#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adapt/align.hpp"
#include "adapt/augment.hpp"
#include "adapt/ingest.hpp"

namespace adapt {

// Aligned samples from every registered dataset, pooled into one flat store.
struct SampleStore {
  std::vector<AlignedSample> samples;
  std::vector<std::string> dataset_ids;  // registration order

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Loads, normalizes and aligns every entry. Errors are rethrown naming the dataset.
SampleStore build_training_set(const std::vector<ManifestEntry>& entries, NormScope scope, const AlignConfig& cfg,
                               bool parallel = true);

// Batch tensors are stacked as (B * L) x C.
struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::size_t channels = 0;
  Matrix<double> input_time;
  Matrix<double> input_freq;
  Matrix<double> target_time;
  Matrix<double> target_freq;
  std::vector<MaskPlan> q_time;
  std::vector<MaskPlan> q_freq;
  std::vector<std::optional<std::uint32_t>> labels;
  std::vector<std::string> dataset_ids;
  std::vector<std::size_t> sample_ids;  // indices into the store
};

struct EpochOptions {
  std::size_t batch_size = 1024;
  bool balance_datasets = false;
  bool parallel = true;
};

std::uint64_t epoch_seed(std::uint64_t global_seed, std::uint64_t epoch);

// Sample order for one epoch: a uniform permutation of the store, or (balanced) draws that pick a
// dataset uniformly and then a sample within it. Chunked into batches of at most batch_size.
std::vector<std::vector<std::size_t>> plan_epoch(const SampleStore& store, std::uint64_t epoch_seed,
                                                 const EpochOptions& opts);

// Item augmentation seeds depend only on (epoch_seed, sample id), never on batch position.
Batch make_batch(const SampleStore& store, std::span<const std::size_t> ids, std::uint64_t epoch_seed,
                 const AugmentOptions& aug, bool parallel = true);

std::vector<Batch> iterate_epoch(const SampleStore& store, std::uint64_t epoch_seed, const EpochOptions& opts,
                                 const AugmentOptions& aug);

// Assembles an epoch's batches on a worker thread, at most `capacity` ahead of the consumer.
class BatchPrefetcher {
 public:
  BatchPrefetcher(const SampleStore& store, std::uint64_t epoch_seed, const EpochOptions& opts,
                  AugmentOptions aug, std::size_t capacity = 2);
  ~BatchPrefetcher();
  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  // Next batch in epoch order, or nullopt when the epoch is exhausted.
  std::optional<Batch> next();

 private:
  void run();

  const SampleStore& store_;
  std::uint64_t epoch_seed_;
  EpochOptions opts_;
  AugmentOptions aug_;
  std::size_t capacity_;
  std::vector<std::vector<std::size_t>> plan_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  std::size_t produced_ = 0;
  std::size_t consumed_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

}  // namespace adapt
