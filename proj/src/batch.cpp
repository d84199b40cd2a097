#include "adapt/batch.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "adapt/kernels.hpp"
#include "adapt/rng.hpp"

namespace adapt {

namespace {

template <typename E>
[[noreturn]] void rethrow_named(const E& e, const std::string& id) {
  throw E("dataset '" + id + "': " + e.what());
}

}  // namespace

SampleStore build_training_set(const std::vector<ManifestEntry>& entries, NormScope scope, const AlignConfig& cfg,
                               bool parallel) {
  if (entries.empty()) throw ValidationError("build_training_set: no datasets registered");
  SampleStore store;
  for (const auto& entry : entries) {
    std::vector<RawSample> raw;
    try {
      raw = load_normalized(entry, scope);
    } catch (const FormatError& e) {
      rethrow_named(e, entry.dataset_id);
    } catch (const CorruptionError& e) {
      rethrow_named(e, entry.dataset_id);
    } catch (const ValidationError& e) {
      rethrow_named(e, entry.dataset_id);
    } catch (const IoError& e) {
      rethrow_named(e, entry.dataset_id);
    }
    auto aligned = parallel ? kernels::parallel::align_all(raw, cfg) : kernels::serial::align_all(raw, cfg);
    for (auto& a : aligned) store.samples.push_back(std::move(a));
    if (std::find(store.dataset_ids.begin(), store.dataset_ids.end(), entry.dataset_id) == store.dataset_ids.end()) {
      store.dataset_ids.push_back(entry.dataset_id);
    }
  }
  return store;
}

std::uint64_t epoch_seed(std::uint64_t global_seed, std::uint64_t epoch) { return mix_seed(global_seed, epoch); }

std::vector<std::vector<std::size_t>> plan_epoch(const SampleStore& store, std::uint64_t seed,
                                                 const EpochOptions& opts) {
  if (store.empty()) throw ContractViolation("plan_epoch: empty store");
  if (opts.batch_size == 0) throw ValidationError("batch size must be >= 1");
  Rng rng(stream_seed(seed, Stream::kShuffle));
  std::vector<std::size_t> order(store.size());
  if (opts.balance_datasets) {
    std::vector<std::vector<std::size_t>> by_dataset(store.dataset_ids.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto it = std::find(store.dataset_ids.begin(), store.dataset_ids.end(), store.samples[i].dataset_id);
      by_dataset[static_cast<std::size_t>(it - store.dataset_ids.begin())].push_back(i);
    }
    std::erase_if(by_dataset, [](const auto& v) { return v.empty(); });
    std::uniform_int_distribution<std::size_t> pick_ds(0, by_dataset.size() - 1);
    for (auto& slot : order) {
      const auto& ds = by_dataset[pick_ds(rng)];
      slot = ds[std::uniform_int_distribution<std::size_t>(0, ds.size() - 1)(rng)];
    }
  } else {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += opts.batch_size) {
    const auto end = std::min(order.size(), i + opts.batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch make_batch(const SampleStore& store, std::span<const std::size_t> ids, std::uint64_t seed,
                 const AugmentOptions& aug, bool parallel) {
  if (ids.empty()) throw ContractViolation("make_batch: empty id list");
  std::vector<const AlignedSample*> items;
  std::vector<std::uint64_t> seeds;
  for (auto id : ids) {
    if (id >= store.size()) throw ContractViolation("make_batch: sample id out of range");
    items.push_back(&store.samples[id]);
    seeds.push_back(mix_seed(seed, id));
  }
  auto pairs = parallel ? kernels::parallel::augment_all(items, seeds, aug) : kernels::serial::augment_all(items, seeds, aug);

  Batch b;
  b.size = ids.size();
  b.seq_len = items.front()->time_repr.rows();
  b.channels = items.front()->time_repr.cols();
  const auto rows = b.size * b.seq_len;
  b.input_time = Matrix<double>(rows, b.channels);
  b.input_freq = Matrix<double>(rows, b.channels);
  b.target_time = Matrix<double>(rows, b.channels);
  b.target_freq = Matrix<double>(rows, b.channels);
  const auto block = b.seq_len * b.channels;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& p = pairs[i];
    require_shape(p.input_time, b.seq_len, b.channels, "make_batch");
    std::copy_n(p.input_time.data(), block, b.input_time.data() + i * block);
    std::copy_n(p.input_freq.data(), block, b.input_freq.data() + i * block);
    std::copy_n(p.target_time.data(), block, b.target_time.data() + i * block);
    std::copy_n(p.target_freq.data(), block, b.target_freq.data() + i * block);
    b.q_time.push_back(std::move(p.q_time));
    b.q_freq.push_back(std::move(p.q_freq));
    b.labels.push_back(p.label);
    b.dataset_ids.push_back(std::move(p.dataset_id));
    b.sample_ids.push_back(ids[i]);
  }
  return b;
}

std::vector<Batch> iterate_epoch(const SampleStore& store, std::uint64_t seed, const EpochOptions& opts,
                                 const AugmentOptions& aug) {
  std::vector<Batch> out;
  for (const auto& ids : plan_epoch(store, seed, opts)) out.push_back(make_batch(store, ids, seed, aug, opts.parallel));
  return out;
}

BatchPrefetcher::BatchPrefetcher(const SampleStore& store, std::uint64_t seed, const EpochOptions& opts,
                                 AugmentOptions aug, std::size_t capacity)
    : store_(store),
      epoch_seed_(seed),
      opts_(opts),
      aug_(std::move(aug)),
      capacity_(std::max<std::size_t>(capacity, 1)),
      plan_(plan_epoch(store, seed, opts)) {
  worker_ = std::thread([this] { run(); });
}

BatchPrefetcher::~BatchPrefetcher() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void BatchPrefetcher::run() {
  for (std::size_t i = 0; i < plan_.size(); ++i) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || queue_.size() < capacity_; });
      if (stop_) return;
    }
    std::optional<Batch> batch;
    try {
      batch = make_batch(store_, plan_[i], epoch_seed_, aug_, opts_.parallel);
    } catch (...) {
      std::lock_guard lock(mu_);
      error_ = std::current_exception();
      cv_.notify_all();
      return;
    }
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(*batch));
      ++produced_;
    }
    cv_.notify_all();
  }
}

std::optional<Batch> BatchPrefetcher::next() {
  std::unique_lock lock(mu_);
  if (consumed_ == plan_.size()) return std::nullopt;
  cv_.wait(lock, [&] { return !queue_.empty() || error_; });
  if (queue_.empty() && error_) std::rethrow_exception(error_);
  Batch b = std::move(queue_.front());
  queue_.pop_front();
  ++consumed_;
  lock.unlock();
  cv_.notify_all();
  return b;
}

}  // namespace adapt
