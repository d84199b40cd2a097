#include "adapt/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace adapt {

MetricsReport compute_metrics(const std::vector<std::uint32_t>& predictions, const std::vector<std::uint32_t>& labels,
                              std::size_t n_classes) {
  if (labels.empty()) throw ValidationError("compute_metrics: empty input");
  if (predictions.size() != labels.size()) throw ValidationError("compute_metrics: length mismatch");
  std::vector<std::size_t> tp(n_classes, 0), pred_count(n_classes, 0), true_count(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes || predictions[i] >= n_classes) {
      throw ValidationError("compute_metrics: class index >= n_classes");
    }
    ++true_count[labels[i]];
    ++pred_count[predictions[i]];
    if (labels[i] == predictions[i]) {
      ++tp[labels[i]];
      ++correct;
    }
  }
  MetricsReport r;
  r.n_samples = labels.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (true_count[c] == 0 && pred_count[c] == 0) continue;
    ClassMetrics m;
    m.label = static_cast<std::uint32_t>(c);
    m.support = true_count[c];
    m.predicted = pred_count[c];
    m.precision = pred_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_count[c]) : 0.0;
    m.recall = true_count[c] ? static_cast<double>(tp[c]) / static_cast<double>(true_count[c]) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class.push_back(m);
  }
  for (const auto& m : r.per_class) {
    r.precision += m.precision;
    r.recall += m.recall;
    r.f1 += m.f1;
  }
  const auto k = static_cast<double>(r.per_class.size());
  r.precision /= k;
  r.recall /= k;
  r.f1 /= k;
  r.accuracy_stat = {r.accuracy, 0.0};
  r.precision_stat = {r.precision, 0.0};
  r.recall_stat = {r.recall, 0.0};
  r.f1_stat = {r.f1, 0.0};
  return r;
}

namespace {

MetricStat mean_sd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace

MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ValidationError("aggregate_seeds: no reports");
  std::vector<double> acc, prec, rec, f1;
  for (const auto& r : reports) {
    acc.push_back(r.accuracy);
    prec.push_back(r.precision);
    rec.push_back(r.recall);
    f1.push_back(r.f1);
  }
  MetricsReport out;
  out.n_seeds = reports.size();
  out.n_samples = reports.front().n_samples;
  out.accuracy_stat = mean_sd(acc);
  out.precision_stat = mean_sd(prec);
  out.recall_stat = mean_sd(rec);
  out.f1_stat = mean_sd(f1);
  out.accuracy = out.accuracy_stat.mean;
  out.precision = out.precision_stat.mean;
  out.recall = out.recall_stat.mean;
  out.f1 = out.f1_stat.mean;
  return out;
}

std::string format_mean_sd(const MetricStat& stat) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f±%.1f", stat.mean * 100.0, stat.sd * 100.0);
  return buf;
}

std::string report_to_json(const MetricsReport& report, int indent) {
  nlohmann::json j;
  j["n_seeds"] = report.n_seeds;
  j["n_samples"] = report.n_samples;
  auto stat = [](const MetricStat& s) {
    return nlohmann::json{{"mean", s.mean}, {"sd", s.sd}, {"formatted", format_mean_sd(s)}};
  };
  j["accuracy"] = stat(report.accuracy_stat);
  j["precision"] = stat(report.precision_stat);
  j["recall"] = stat(report.recall_stat);
  j["f1"] = stat(report.f1_stat);
  j["averaging"] = "macro";
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    pc.push_back({{"label", m.label},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1},
                  {"support", m.support},
                  {"predicted", m.predicted}});
  }
  return j.dump(indent);
}

EmbeddingStage parse_stage(const std::string& s) {
  if (s == "raw") return EmbeddingStage::kRaw;
  if (s == "pooled") return EmbeddingStage::kPooled;
  if (s == "encoded") return EmbeddingStage::kEncoded;
  throw ValidationError("unknown embedding stage '" + s + "' (expected raw, pooled or encoded)");
}

std::string export_embeddings(const std::vector<RawSample>& samples, EmbeddingStage stage, const AlignConfig& align,
                              const Network<float>* network) {
  std::ostringstream out;
  out.precision(9);
  auto label_of = [](const std::optional<std::uint32_t>& l) { return l ? static_cast<long long>(*l) : -1LL; };
  if (stage == EmbeddingStage::kRaw) {
    if (samples.empty()) return "label\n";
    const auto len = samples.front().length(), ch = samples.front().channels();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].length() != len || samples[i].channels() != ch) {
        throw ValidationError("raw export needs a fixed shape: sample " + std::to_string(i) + " of dataset '" +
                              samples[i].dataset_id + "' is " + std::to_string(samples[i].length()) + "x" +
                              std::to_string(samples[i].channels()) + ", expected " + std::to_string(len) + "x" +
                              std::to_string(ch));
      }
    }
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < ch; ++c) out << "x_" << t << "_" << c << ",";
    out << "label\n";
    for (const auto& s : samples) {
      for (double v : s.values.flat()) out << v << ",";
      out << label_of(s.label) << "\n";
    }
    return out.str();
  }
  if (stage == EmbeddingStage::kPooled) {
    for (const char* prefix : {"time_", "freq_"})
      for (std::size_t l = 0; l < align.seq_len; ++l)
        for (std::size_t c = 0; c < align.channels; ++c) out << prefix << l << "_" << c << ",";
    out << "label\n";
    for (const auto& s : samples) {
      const auto a = align_sample(s, align);
      for (double v : a.time_repr.flat()) out << v << ",";
      for (double v : a.freq_repr.flat()) out << v << ",";
      out << label_of(s.label) << "\n";
    }
    return out.str();
  }
  if (!network) throw ValidationError("encoded export needs a checkpoint");
  const auto& cfg = network->config();
  if (cfg.seq_len != align.seq_len || cfg.c_in != align.channels) {
    throw ValidationError("checkpoint input shape does not match the alignment config");
  }
  for (std::size_t l = 0; l < cfg.seq_len; ++l)
    for (std::size_t k = 0; k < cfg.d_model; ++k) out << "enc_" << l << "_" << k << ",";
  out << "label\n";
  for (const auto& s : samples) {
    const auto a = align_sample(s, align);
    const auto st = network->forward(cast<float>(a.time_repr), cast<float>(a.freq_repr), 1, false);
    for (float v : st.encoded.flat()) out << v << ",";
    out << label_of(s.label) << "\n";
  }
  return out.str();
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

std::vector<PropertyCorrelation> property_correlation(const std::vector<DatasetProperties>& rows) {
  std::vector<double> acc, len, ch, cls, ratio, total;
  for (const auto& r : rows) {
    acc.push_back(r.accuracy);
    len.push_back(r.length);
    ch.push_back(r.channels);
    cls.push_back(r.classes);
    ratio.push_back(r.train_test_ratio);
    total.push_back(r.length * r.channels);
  }
  std::vector<PropertyCorrelation> out;
  auto add = [&](const char* name, const std::vector<double>& prop) {
    PropertyCorrelation pc{name, pearson(prop, acc), std::nullopt};
    if (std::isnan(pc.r)) pc.warning = std::string("correlation undefined for '") + name + "' (zero variance or n < 2)";
    out.push_back(std::move(pc));
  };
  add("length", len);
  add("channels", ch);
  add("classes", cls);
  add("train_test_ratio", ratio);
  add("total_size", total);
  return out;
}

}  // namespace adapt
