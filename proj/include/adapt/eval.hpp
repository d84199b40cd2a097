#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adapt/align.hpp"
#include "adapt/ingest.hpp"
#include "adapt/model.hpp"

namespace adapt {

struct ClassMetrics {
  std::uint32_t label = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // true count
  std::size_t predicted = 0;  // predicted count
};

struct MetricStat {
  double mean = 0.0;
  double sd = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro
  std::size_t n_samples = 0;
  std::vector<ClassMetrics> per_class;  // classes seen in labels or predictions

  std::size_t n_seeds = 1;
  MetricStat accuracy_stat, precision_stat, recall_stat, f1_stat;
};

// Macro-averaged over classes present in labels or predictions. A class with no predicted positives
// gets precision 0; F1 is 0 when precision + recall is 0.
MetricsReport compute_metrics(const std::vector<std::uint32_t>& predictions, const std::vector<std::uint32_t>& labels,
                              std::size_t n_classes);

// Mean and population sd per metric. The headline fields hold the means.
MetricsReport aggregate_seeds(const std::vector<MetricsReport>& reports);

// "98.5±1.2": percent, one decimal, sd as the subscript-style suffix.
std::string format_mean_sd(const MetricStat& stat);

std::string report_to_json(const MetricsReport& report, int indent = 2);

enum class EmbeddingStage { kRaw, kPooled, kEncoded };
EmbeddingStage parse_stage(const std::string& s);

// CSV with a header row. Columns per stage:
//   raw:     x_<t>_<c> for the common (length, channels) shape
//   pooled:  time_<l>_<c> then freq_<l>_<c>
//   encoded: enc_<l>_<k> (E_o flattened)
// followed by a final `label` column (-1 when unlabeled).
std::string export_embeddings(const std::vector<RawSample>& samples, EmbeddingStage stage, const AlignConfig& align,
                              const Network<float>* network = nullptr);

struct DatasetProperties {
  double accuracy = 0.0;
  double length = 0.0;
  double channels = 0.0;
  double classes = 0.0;
  double train_test_ratio = 0.0;
};

struct PropertyCorrelation {
  std::string property;
  double r = 0.0;  // NaN when undefined
  std::optional<std::string> warning;
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Pearson r between accuracy and each property, plus total size = length * channels.
std::vector<PropertyCorrelation> property_correlation(const std::vector<DatasetProperties>& rows);

}  // namespace adapt
