#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"

#include "adapt/eval.hpp"
#include "json.hpp"

using namespace adapt;

TEST_CASE("confusion micro-examples") {
  SUBCASE("one of each outcome") {
    // (pred, label): TP, FP, FN, TN for class 1
    const auto r = compute_metrics({1, 1, 0, 0}, {1, 0, 1, 0}, 2);
    CHECK(r.accuracy == 0.5);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == 0.5);
    REQUIRE(r.per_class.size() == 2);
    CHECK(r.per_class[1].support == 2);
    CHECK(r.per_class[1].predicted == 2);
  }
  SUBCASE("constant predictor") {
    const auto r = compute_metrics({0, 0}, {0, 1}, 2);
    CHECK(r.accuracy == 0.5);
    CHECK(r.per_class[0].precision == 0.5);
    CHECK(r.per_class[0].recall == 1.0);
    CHECK(r.per_class[1].precision == 0.0);
    CHECK(r.per_class[1].f1 == 0.0);
    CHECK(r.precision == 0.25);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("perfect") {
    const auto r = compute_metrics({2, 0, 1}, {2, 0, 1}, 3);
    CHECK(r.accuracy == 1.0);
    CHECK(r.f1 == 1.0);
  }
  SUBCASE("classes absent from both sides are excluded") {
    const auto r = compute_metrics({0, 1}, {0, 1}, 5);
    CHECK(r.per_class.size() == 2);
    CHECK(r.f1 == 1.0);
  }
  SUBCASE("three-class hand count") {
    // labels 0 0 1 1 2 2, preds 0 1 1 1 0 2
    const auto r = compute_metrics({0, 1, 1, 1, 0, 2}, {0, 0, 1, 1, 2, 2}, 3);
    CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
    // class 0: P 1/2 R 1/2; class 1: P 2/3 R 1; class 2: P 1 R 1/2
    CHECK(r.precision == doctest::Approx((0.5 + 2.0 / 3.0 + 1.0) / 3.0));
    CHECK(r.recall == doctest::Approx((0.5 + 1.0 + 0.5) / 3.0));
    CHECK(r.f1 == doctest::Approx((0.5 + 0.8 + 2.0 / 3.0) / 3.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(compute_metrics({}, {}, 2), ValidationError);
    CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 2), ValidationError);
    CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 1}, 2), ValidationError);
  }
}

TEST_CASE("metric invariances") {
  std::mt19937 rng(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::uint32_t> p(40), l(40);
    for (auto& v : p) v = rng() % 4;
    for (auto& v : l) v = rng() % 4;
    const auto base = compute_metrics(p, l, 4);
    std::vector<std::size_t> idx(40);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::uint32_t> ps, ls, pr, lr;
    for (auto i : idx) {
      ps.push_back(p[i]);
      ls.push_back(l[i]);
    }
    const auto shuffled = compute_metrics(ps, ls, 4);
    CHECK(shuffled.f1 == doctest::Approx(base.f1).epsilon(1e-15));
    CHECK(shuffled.accuracy == base.accuracy);
    // Relabel every class k -> 3 - k.
    for (std::size_t i = 0; i < 40; ++i) {
      pr.push_back(3 - p[i]);
      lr.push_back(3 - l[i]);
    }
    const auto relabeled = compute_metrics(pr, lr, 4);
    CHECK(relabeled.f1 == doctest::Approx(base.f1).epsilon(1e-15));
    CHECK(relabeled.precision == doctest::Approx(base.precision).epsilon(1e-15));
  }
}

TEST_CASE("seed aggregation and formatting") {
  MetricsReport a, b;
  a.accuracy = 0.9;
  b.accuracy = 1.0;
  a.f1 = 0.8;
  b.f1 = 0.8;
  const auto agg = aggregate_seeds({a, b});
  CHECK(agg.n_seeds == 2);
  CHECK(agg.accuracy_stat.mean == doctest::Approx(0.95));
  CHECK(agg.accuracy_stat.sd == doctest::Approx(0.05));
  CHECK(agg.accuracy == doctest::Approx(0.95));
  CHECK(agg.f1_stat.sd == 0.0);
  CHECK(format_mean_sd(agg.accuracy_stat) == "95.0±5.0");
  CHECK(format_mean_sd({0.985, 0.012}) == "98.5±1.2");
  CHECK(format_mean_sd({1.0, 0.0}) == "100.0±0.0");

  const auto j = nlohmann::json::parse(report_to_json(agg));
  CHECK(j["accuracy"]["formatted"] == "95.0±5.0");
  CHECK(j["n_seeds"] == 2);
  CHECK(j["averaging"] == "macro");

  const auto single = compute_metrics({0, 1}, {0, 1}, 2);
  CHECK(single.accuracy_stat.mean == 1.0);
  CHECK(single.accuracy_stat.sd == 0.0);
  CHECK_THROWS_AS(aggregate_seeds({}), ValidationError);
}

TEST_CASE("pearson and property correlation") {
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
  CHECK(std::isnan(pearson({1}, {2})));
  CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));

  std::vector<DatasetProperties> rows{{0.9, 100, 1, 2, 2}, {0.8, 200, 2, 2, 1}, {0.7, 300, 3, 2, 3}};
  const auto pc = property_correlation(rows);
  auto find = [&](const std::string& n) {
    for (const auto& x : pc)
      if (x.property == n) return x;
    FAIL("missing property " << n);
    return PropertyCorrelation{};
  };
  CHECK(find("length").r == doctest::Approx(-1.0));
  CHECK(std::isnan(find("classes").r));
  CHECK(find("classes").warning.has_value());
  CHECK(find("total_size").r < 0.0);
}

TEST_CASE("embedding export") {
  std::vector<RawSample> s(2);
  for (std::size_t i = 0; i < 2; ++i) {
    s[i].values = Matrix<double>(5, 2, static_cast<double>(i + 1));
    s[i].dataset_id = "d";
  }
  s[0].label = 1;
  AlignConfig cfg{4, 3};
  const auto raw = export_embeddings(s, EmbeddingStage::kRaw, cfg);
  std::istringstream in(raw);
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header.rfind("x_0_0,x_0_1,x_1_0", 0) == 0);
  CHECK(header.substr(header.size() - 6) == ",label");
  CHECK(std::count(header.begin(), header.end(), ',') == 10);
  CHECK(row0.substr(row0.size() - 2) == ",1");
  CHECK(row1.substr(row1.size() - 3) == ",-1");

  const auto pooled = export_embeddings(s, EmbeddingStage::kPooled, cfg);
  const auto ph = pooled.substr(0, pooled.find('\n'));
  CHECK(std::count(ph.begin(), ph.end(), ',') == 2 * 4 * 3);
  CHECK(ph.find("freq_0_0") != std::string::npos);

  ModelConfig mc;
  mc.seq_len = 4;
  mc.c_in = 3;
  mc.d_model = 4;
  mc.n_heads = 1;
  mc.n_layers = 1;
  mc.ffn_dim = 4;
  Network<float> net(mc, init_params<float>(mc, 1));
  const auto enc = export_embeddings(s, EmbeddingStage::kEncoded, cfg, &net);
  const auto eh = enc.substr(0, enc.find('\n'));
  CHECK(std::count(eh.begin(), eh.end(), ',') == 4 * 4);
  CHECK(eh.rfind("enc_0_0", 0) == 0);
  CHECK_THROWS_AS(export_embeddings(s, EmbeddingStage::kEncoded, cfg), ValidationError);
  CHECK_THROWS_AS(export_embeddings(s, EmbeddingStage::kEncoded, AlignConfig{8, 3}, &net), ValidationError);

  s[1].values = Matrix<double>(6, 2);
  s[1].dataset_id = "other";
  try {
    export_embeddings(s, EmbeddingStage::kRaw, cfg);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("other") != std::string::npos);
  }
  CHECK_NOTHROW(export_embeddings(s, EmbeddingStage::kPooled, cfg));
  CHECK_THROWS_AS(parse_stage("cooked"), ValidationError);
}
