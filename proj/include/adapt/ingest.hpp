#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adapt/tensor.hpp"

namespace adapt {

// One variable-shape series: values is length x channels, time-major.
struct RawSample {
  Matrix<double> values;
  std::optional<std::uint32_t> label;
  std::string dataset_id;

  std::size_t length() const { return values.rows(); }
  std::size_t channels() const { return values.cols(); }
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

enum class NormScope { kPerSample, kPerDataset };

struct ManifestEntry {
  std::string dataset_id;
  Split split = Split::kTrain;
  std::string path;  // resolved against the manifest directory
  std::uint32_t classes = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  NormScope scope = NormScope::kPerSample;

  std::vector<ManifestEntry> split(Split s) const;
};

// Manifest is JSON:
//   {"normalization": "per_channel_zscore", "scope": "per_sample",
//    "entries": [{"dataset_id": "har", "split": "train", "path": "har.adts", "classes": 6}]}
DatasetManifest parse_manifest(std::string_view json_text, const std::string& base_dir = "");
DatasetManifest load_manifest(const std::string& path);
std::string manifest_to_json(const DatasetManifest& m);

// "ADTS" sample file codec. Values are float32 on disk.
std::string encode_samples(std::span<const RawSample> samples);
std::vector<RawSample> decode_samples(std::string_view bytes);
void write_samples(const std::string& path, std::span<const RawSample> samples);
std::vector<RawSample> read_samples(const std::string& path);

// Reads and validates one manifest entry; labels are checked against the declared class count.
std::vector<RawSample> load_dataset(const std::string& path, const ManifestEntry& entry);

constexpr double kConstantChannelEps = 1e-8;

// Per-channel z-score with population sd. Channels with sd <= 1e-8 become zeros.
RawSample normalize_per_channel(const RawSample& sample);
// Same statistics pooled over every sample of one dataset split (channel counts must agree).
void normalize_dataset(std::span<RawSample> samples);

// Loads an entry and normalizes it according to the manifest scope.
std::vector<RawSample> load_normalized(const ManifestEntry& entry, NormScope scope);

// One sample per CSV file: comma-separated rows, one column per channel.
// Lines starting with '#' are comments; "# label=K" (or "# label: K") attaches a label.
// A non-numeric first row is treated as a column header.
RawSample parse_csv_sample(std::string_view text, const std::string& dataset_id = "");

}  // namespace adapt
