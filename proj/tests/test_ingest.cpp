#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "adapt/binary_io.hpp"
#include "adapt/ingest.hpp"

using namespace adapt;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "adapt_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

RawSample random_sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 40), ch(1, 5);
  std::normal_distribution<float> val(0.0f, 3.0f);
  RawSample s;
  s.values = Matrix<double>(len(rng), ch(rng));
  for (auto& v : s.values.flat()) v = val(rng);
  if (rng() % 3) s.label = static_cast<std::uint32_t>(rng() % 4);
  return s;
}

// Channel statistics computed independently of normalize_per_channel.
std::pair<double, double> mean_sd(const Matrix<double>& m, std::size_t c) {
  long double sum = 0, sq = 0;
  for (std::size_t t = 0; t < m.rows(); ++t) sum += m(t, c);
  const long double mean = sum / m.rows();
  for (std::size_t t = 0; t < m.rows(); ++t) sq += (m(t, c) - mean) * (m(t, c) - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(sq / m.rows()))};
}

}  // namespace

TEST_CASE("single-sample file decodes to one 4x1 sample") {
  io::ByteWriter w;
  w.bytes("ADTS");
  w.u32(1);
  w.u64(1);
  w.u32(4);
  w.u32(1);
  w.i32(0);
  for (float v : {1.f, 2.f, 3.f, 4.f}) w.f32(v);
  const auto path = temp_path("one.adts");
  io::write_file(path, w.buffer());
  auto samples = load_dataset(path, {"d", Split::kTrain, path, 2});
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].length() == 4);
  CHECK(samples[0].channels() == 1);
  CHECK(samples[0].label == 0u);
  CHECK(samples[0].dataset_id == "d");
  CHECK(samples[0].values(3, 0) == 4.0);
}

TEST_CASE("empty sample file yields an empty sequence") {
  const auto path = temp_path("empty.adts");
  write_samples(path, {});
  CHECK(load_dataset(path, {"d", Split::kTrain, path, 0}).empty());
}

TEST_CASE("write/read round trip is byte identical for random files") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<RawSample> samples;
    for (int i = 0; i < 100; ++i) samples.push_back(random_sample(rng));
    const auto bytes = encode_samples(samples);
    const auto back = decode_samples(bytes);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      CHECK(back[i].values == samples[i].values);
      CHECK(back[i].label == samples[i].label);
    }
    CHECK(encode_samples(back) == bytes);
  }
}

TEST_CASE("format errors") {
  std::vector<RawSample> one(1);
  one[0].values = Matrix<double>(3, 2, 1.0);
  one[0].label = 5;
  auto bytes = encode_samples(one);

  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(decode_samples(b), FormatError);
  }
  SUBCASE("bad version") {
    auto b = bytes;
    b[4] = 2;
    CHECK_THROWS_AS(decode_samples(b), FormatError);
  }
  SUBCASE("truncated payload") {
    CHECK_THROWS_AS(decode_samples(bytes.substr(0, bytes.size() - 3)), CorruptionError);
    CHECK_THROWS_AS(decode_samples(bytes.substr(0, 10)), CorruptionError);
  }
  SUBCASE("label beyond class count") {
    const auto path = temp_path("label.adts");
    io::write_file(path, bytes);
    CHECK_THROWS_AS(load_dataset(path, {"d", Split::kTrain, path, 3}), ValidationError);
    CHECK_NOTHROW(load_dataset(path, {"d", Split::kTrain, path, 6}));
  }
  SUBCASE("labeled data needs at least two classes") {
    one[0].label = 0;
    const auto path = temp_path("oneclass.adts");
    write_samples(path, one);
    CHECK_THROWS_AS(load_dataset(path, {"d", Split::kTrain, path, 1}), ValidationError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_samples("/nonexistent/x.adts"), IoError); }
}

TEST_CASE("normalize_per_channel") {
  SUBCASE("[2, 4, 6] uses population sd") {
    RawSample s;
    s.values = Matrix<double>(3, 1, std::vector<double>{2, 4, 6});
    auto n = normalize_per_channel(s);
    const double expected = 2.0 / std::sqrt(8.0 / 3.0);
    CHECK(n.values(0, 0) == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(n.values(1, 0) == doctest::Approx(0.0));
    CHECK(n.values(2, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(1.2247).epsilon(1e-4));
  }
  SUBCASE("constant channel maps to zeros") {
    RawSample s;
    s.values = Matrix<double>(3, 1, 5.0);
    auto n = normalize_per_channel(s);
    for (double v : n.values.flat()) CHECK(v == 0.0);
  }
  SUBCASE("single time step maps to zeros") {
    RawSample s;
    s.values = Matrix<double>(1, 3, std::vector<double>{1, 2, 3});
    const auto n = normalize_per_channel(s);
    for (double v : n.values.flat()) CHECK(v == 0.0);
  }
}

TEST_CASE("normalization properties on random samples") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_sample(rng);
    if (s.length() < 2) continue;
    const auto n = normalize_per_channel(s);
    for (std::size_t c = 0; c < s.channels(); ++c) {
      auto [m0, sd0] = mean_sd(s.values, c);
      auto [m, sd] = mean_sd(n.values, c);
      CHECK(std::abs(m) < 1e-6);
      if (sd0 > 1e-8) CHECK(std::abs(sd - 1.0) < 1e-6);
    }
    // Idempotence.
    const auto nn = normalize_per_channel(n);
    for (std::size_t i = 0; i < n.values.size(); ++i) CHECK(std::abs(nn.values.data()[i] - n.values.data()[i]) < 1e-6);
    // Channel permutation commutes with normalization.
    RawSample rev = s;
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < s.channels(); ++c) rev.values(t, c) = s.values(t, s.channels() - 1 - c);
    const auto nrev = normalize_per_channel(rev);
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < s.channels(); ++c)
        CHECK(nrev.values(t, c) == n.values(t, s.channels() - 1 - c));
  }
}

TEST_CASE("per-dataset normalization pools statistics") {
  std::vector<RawSample> ds(2);
  ds[0].values = Matrix<double>(2, 1, std::vector<double>{0, 2});
  ds[1].values = Matrix<double>(2, 1, std::vector<double>{4, 6});
  normalize_dataset(ds);
  // mean 3, population sd sqrt(5)
  CHECK(ds[0].values(0, 0) == doctest::Approx(-3.0 / std::sqrt(5.0)));
  CHECK(ds[1].values(1, 0) == doctest::Approx(3.0 / std::sqrt(5.0)));
}

TEST_CASE("manifest parsing") {
  const char* text = R"({"normalization": "per_channel_zscore", "scope": "per_dataset",
    "entries": [{"dataset_id": "har", "split": "train", "path": "har.adts", "classes": 6},
                {"dataset_id": "har", "split": "test", "path": "/abs/har_test.adts", "classes": 6}]})";
  auto m = parse_manifest(text, "/data");
  CHECK(m.scope == NormScope::kPerDataset);
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].path == "/data/har.adts");
  CHECK(m.entries[1].path == "/abs/har_test.adts");
  CHECK(m.split(Split::kTest).size() == 1);

  CHECK_THROWS_AS(parse_manifest(R"({"entries": [{"dataset_id": "a", "path": "x"}, {"dataset_id": "a", "path": "y"}]})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_manifest(R"({"entries": [{"dataset_id": "a", "split": "dev", "path": "x"}]})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_manifest("{not json"), FormatError);
  auto again = parse_manifest(manifest_to_json(m));
  CHECK(again.entries.size() == 2);
  CHECK(again.scope == NormScope::kPerDataset);
}

TEST_CASE("CSV conversion") {
  auto s = parse_csv_sample("# label=1\nax,ay\n1,2\n3,4\n5,6\n", "d");
  CHECK(s.length() == 3);
  CHECK(s.channels() == 2);
  CHECK(s.label == 1u);
  CHECK(s.values(2, 1) == 6.0);
  auto unlabeled = parse_csv_sample("1\n2\n");
  CHECK_FALSE(unlabeled.label.has_value());
  CHECK_THROWS_AS(parse_csv_sample("1,2\n3\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv_sample("# label: -1\n1\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv_sample("a,b\n"), ValidationError);
}
