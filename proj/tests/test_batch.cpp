#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"

#include "adapt/batch.hpp"
#include "adapt/binary_io.hpp"
#include "adapt/kernels.hpp"
#include "adapt/synthetic.hpp"

using namespace adapt;

namespace {

std::string batch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "adapt_tests" / name;
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::vector<RawSample> random_set(std::size_t count, std::size_t len, std::size_t ch, std::uint32_t seed,
                                  const std::string& id) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<RawSample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].values = Matrix<double>(len, ch);
    for (auto& v : out[i].values.flat()) v = static_cast<float>(d(rng));
    out[i].label = static_cast<std::uint32_t>(i % 2);
    out[i].dataset_id = id;
  }
  return out;
}

SampleStore two_dataset_store(AlignConfig cfg = {}) {
  const auto dir = batch_dir("mixed");
  write_samples(dir + "/a.adts", random_set(10, 128, 9, 1, "a"));
  write_samples(dir + "/b.adts", random_set(15, 5120, 1, 2, "b"));
  std::vector<ManifestEntry> entries{{"a", Split::kTrain, dir + "/a.adts", 2}, {"b", Split::kTrain, dir + "/b.adts", 2}};
  return build_training_set(entries, NormScope::kPerSample, cfg);
}

}  // namespace

TEST_CASE("training set from two heterogeneous datasets") {
  const auto store = two_dataset_store();
  REQUIRE(store.size() == 25);
  CHECK(store.dataset_ids == std::vector<std::string>{"a", "b"});
  for (const auto& s : store.samples) {
    CHECK(s.time_repr.rows() == 256);
    CHECK(s.time_repr.cols() == 32);
    CHECK(s.freq_repr.rows() == 256);
    CHECK(s.freq_repr.cols() == 32);
  }
  CHECK(std::count_if(store.samples.begin(), store.samples.end(), [](auto& s) { return s.dataset_id == "b"; }) == 15);
  CHECK_THROWS_AS(build_training_set({}, NormScope::kPerSample, AlignConfig{}), ValidationError);
}

TEST_CASE("loader error names the dataset") {
  const auto dir = batch_dir("broken");
  io::write_file(dir + "/bad.adts", "garbage");
  std::vector<ManifestEntry> entries{{"broken_set", Split::kTrain, dir + "/bad.adts", 2}};
  try {
    build_training_set(entries, NormScope::kPerSample, AlignConfig{});
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("broken_set") != std::string::npos);
  }
}

TEST_CASE("epoch planning") {
  const auto store = two_dataset_store(AlignConfig{16, 4});
  EpochOptions opts;
  opts.batch_size = 8;

  const auto plan = plan_epoch(store, epoch_seed(1, 0), opts);
  REQUIRE(plan.size() == 4);
  CHECK(plan[0].size() == 8);
  CHECK(plan[1].size() == 8);
  CHECK(plan[2].size() == 8);
  CHECK(plan[3].size() == 1);
  std::vector<std::size_t> all;
  for (const auto& b : plan) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 25; ++i) CHECK(all[i] == i);

  CHECK(plan_epoch(store, epoch_seed(1, 0), opts) == plan);
  CHECK(plan_epoch(store, epoch_seed(1, 1), opts) != plan);
  CHECK(epoch_seed(1, 0) != epoch_seed(2, 0));

  // Mixed batches appear: across a few epochs some batch holds both datasets.
  bool mixed = false;
  for (std::uint64_t e = 0; e < 5 && !mixed; ++e)
    for (const auto& b : plan_epoch(store, epoch_seed(3, e), opts)) {
      std::set<std::string> ids;
      for (auto i : b) ids.insert(store.samples[i].dataset_id);
      mixed = mixed || ids.size() > 1;
    }
  CHECK(mixed);
}

TEST_CASE("balanced epoch draws datasets uniformly") {
  const auto store = two_dataset_store(AlignConfig{16, 4});
  EpochOptions opts;
  opts.batch_size = 25;
  opts.balance_datasets = true;
  std::size_t from_a = 0, total = 0;
  for (std::uint64_t e = 0; e < 400; ++e)
    for (const auto& b : plan_epoch(store, epoch_seed(9, e), opts))
      for (auto i : b) {
        from_a += store.samples[i].dataset_id == "a";
        ++total;
      }
  CHECK(total == 400 * 25);
  CHECK(std::abs(static_cast<double>(from_a) / static_cast<double>(total) - 0.5) < 0.02);
}

TEST_CASE("batch assembly") {
  const auto store = two_dataset_store(AlignConfig{16, 4});
  AugmentOptions aug;
  const std::vector<std::size_t> ids{3, 17, 0};
  const auto b = make_batch(store, ids, 99, aug);
  CHECK(b.size == 3);
  CHECK(b.seq_len == 16);
  CHECK(b.channels == 4);
  CHECK(b.input_time.rows() == 48);
  CHECK(b.input_time.cols() == 4);
  CHECK(b.q_time.size() == 3);
  CHECK(b.sample_ids == ids);
  CHECK(b.dataset_ids[1] == "b");
  CHECK(b.labels[0] == store.samples[3].label);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(b.target_time(16 + r, c) == store.samples[17].time_repr(r, c));

  // An item's augmentation does not depend on its batch position.
  const std::vector<std::size_t> reordered{17, 0, 3};
  const auto b2 = make_batch(store, reordered, 99, aug);
  CHECK(b2.q_time[0] == b.q_time[1]);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(b2.input_time(r, c) == b.input_time(16 + r, c));

  const auto serial = make_batch(store, ids, 99, aug, false);
  CHECK(serial.input_time == b.input_time);
  CHECK(serial.input_freq == b.input_freq);
}

TEST_CASE("prefetcher yields the same batches as iterate_epoch") {
  const auto store = two_dataset_store(AlignConfig{16, 4});
  EpochOptions opts;
  opts.batch_size = 6;
  AugmentOptions aug;
  const auto ref = iterate_epoch(store, 5, opts, aug);
  BatchPrefetcher pf(store, 5, opts, aug);
  std::size_t n = 0;
  while (auto b = pf.next()) {
    REQUIRE(n < ref.size());
    CHECK(b->sample_ids == ref[n].sample_ids);
    CHECK(b->input_time == ref[n].input_time);
    CHECK(b->input_freq == ref[n].input_freq);
    ++n;
  }
  CHECK(n == ref.size());

  // Destroying a prefetcher mid-epoch must not hang.
  BatchPrefetcher early(store, 6, opts, aug);
  CHECK(early.next().has_value());
}

TEST_CASE("parallel kernels equal their serial references bitwise") {
  std::mt19937_64 rng(4);
  std::normal_distribution<float> d;
  for (auto [m, k, n] : {std::tuple{3, 5, 7}, std::tuple{64, 48, 96}, std::tuple{200, 33, 17}}) {
    Matrix<float> a(m, k), b(k, n), bt(n, k), at(k, m);
    for (auto* x : {&a, &b, &bt, &at})
      for (auto& v : x->flat()) v = d(rng);
    Matrix<float> c1(m, n), c2(m, n);
    kernels::serial::gemm_nn(a, b, c1);
    kernels::parallel::gemm_nn(a, b, c2);
    CHECK(c1 == c2);
    kernels::serial::gemm_nt(a, bt, c1, true);
    kernels::parallel::gemm_nt(a, bt, c2, true);
    CHECK(c1 == c2);
    kernels::serial::gemm_tn(at, b, c1);
    kernels::parallel::gemm_tn(at, b, c2);
    CHECK(c1 == c2);
  }

  SyntheticSpec spec;
  spec.train_per_dataset = 6;
  spec.test_per_dataset = 1;
  const auto corpus = make_synthetic_corpus(spec);
  std::vector<RawSample> raw;
  for (const auto& ds : corpus.train) raw.insert(raw.end(), ds.begin(), ds.end());
  AlignConfig cfg{32, 4};
  const auto s_al = kernels::serial::align_all(raw, cfg);
  const auto p_al = kernels::parallel::align_all(raw, cfg);
  REQUIRE(s_al.size() == p_al.size());
  std::vector<const AlignedSample*> ptrs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < s_al.size(); ++i) {
    CHECK(s_al[i].time_repr == p_al[i].time_repr);
    CHECK(s_al[i].freq_repr == p_al[i].freq_repr);
    ptrs.push_back(&s_al[i]);
    seeds.push_back(1000 + i);
  }
  const auto s_aug = kernels::serial::augment_all(ptrs, seeds, AugmentOptions{});
  const auto p_aug = kernels::parallel::augment_all(ptrs, seeds, AugmentOptions{});
  for (std::size_t i = 0; i < s_aug.size(); ++i) {
    CHECK(s_aug[i].input_time == p_aug[i].input_time);
    CHECK(s_aug[i].input_freq == p_aug[i].input_freq);
    CHECK(s_aug[i].q_time == p_aug[i].q_time);
  }
}

TEST_CASE("synthetic corpus shapes") {
  const auto corpus = make_synthetic_corpus(SyntheticSpec{});
  REQUIRE(corpus.dataset_ids.size() == 4);
  std::size_t total = 0;
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(corpus.train[d].size() == 50);
    CHECK(corpus.test[d].size() == 25);
    for (const auto& s : corpus.train[d]) {
      CHECK(s.length() >= 50);
      CHECK(s.length() <= 500);
      CHECK(s.channels() == d + 1);
      CHECK(s.label.has_value());
      ++total;
    }
  }
  CHECK(total == 200);
  CHECK(make_synthetic_corpus(SyntheticSpec{}).train[2][7].values == corpus.train[2][7].values);
}
