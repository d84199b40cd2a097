#include "adapt/ingest.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "adapt/binary_io.hpp"

namespace adapt {

namespace {

constexpr std::string_view kSampleMagic = "ADTS";
constexpr std::uint32_t kSampleVersion = 1;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_double(std::string_view s, double& out) {
  auto t = trim(s);
  if (t.empty()) return false;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

std::vector<ManifestEntry> DatasetManifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view json_text, const std::string& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest m;
  const auto norm = j.value("normalization", std::string("per_channel_zscore"));
  if (norm != "per_channel_zscore") {
    throw ValidationError("manifest normalization must be 'per_channel_zscore', got '" + norm + "'");
  }
  const auto scope = j.value("scope", std::string("per_sample"));
  if (scope == "per_sample") {
    m.scope = NormScope::kPerSample;
  } else if (scope == "per_dataset") {
    m.scope = NormScope::kPerDataset;
  } else {
    throw ValidationError("manifest scope must be per_sample or per_dataset, got '" + scope + "'");
  }
  if (!j.contains("entries") || !j["entries"].is_array()) {
    throw ValidationError("manifest has no 'entries' array");
  }
  for (const auto& je : j["entries"]) {
    ManifestEntry e;
    try {
      e.dataset_id = je.at("dataset_id").get<std::string>();
      e.split = parse_split(je.value("split", std::string("train")));
      e.path = je.at("path").get<std::string>();
      e.classes = je.value("classes", 0u);
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("bad manifest entry: ") + ex.what());
    }
    if (e.dataset_id.empty()) throw ValidationError("manifest entry with empty dataset_id");
    if (!base_dir.empty() && std::filesystem::path(e.path).is_relative()) {
      e.path = (std::filesystem::path(base_dir) / e.path).string();
    }
    for (const auto& prev : m.entries) {
      if (prev.dataset_id == e.dataset_id && prev.split == e.split) {
        throw ValidationError("duplicate manifest entry for dataset '" + e.dataset_id + "' split '" +
                              std::string(to_string(e.split)) + "'");
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  auto text = io::read_file(path);
  return parse_manifest(text, std::filesystem::path(path).parent_path().string());
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["normalization"] = "per_channel_zscore";
  j["scope"] = m.scope == NormScope::kPerSample ? "per_sample" : "per_dataset";
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"dataset_id", e.dataset_id},
                            {"split", std::string(to_string(e.split))},
                            {"path", e.path},
                            {"classes", e.classes}});
  }
  return j.dump(2);
}

std::string encode_samples(std::span<const RawSample> samples) {
  io::ByteWriter w;
  w.bytes(kSampleMagic);
  w.u32(kSampleVersion);
  w.u64(samples.size());
  for (const auto& s : samples) {
    w.u32(static_cast<std::uint32_t>(s.length()));
    w.u32(static_cast<std::uint32_t>(s.channels()));
    w.i32(s.label ? static_cast<std::int32_t>(*s.label) : -1);
    for (double v : s.values.flat()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

std::vector<RawSample> decode_samples(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kSampleMagic) {
    throw FormatError("bad magic: not an ADTS sample file");
  }
  const auto version = r.u32();
  if (version != kSampleVersion) {
    throw FormatError("unsupported ADTS version " + std::to_string(version));
  }
  const auto count = r.u64();
  std::vector<RawSample> out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto length = r.u32();
    const auto channels = r.u32();
    const auto label = r.i32();
    if (length == 0 || channels == 0) {
      throw FormatError("sample " + std::to_string(n) + " has zero length or channels");
    }
    if (label < -1) {
      throw FormatError("sample " + std::to_string(n) + " has invalid label " + std::to_string(label));
    }
    const std::uint64_t numel = std::uint64_t{length} * channels;
    if (r.remaining() / 4 < numel) {
      throw CorruptionError("sample " + std::to_string(n) + " payload truncated");
    }
    RawSample s;
    s.values = Matrix<double>(length, channels);
    for (auto& v : s.values.flat()) {
      const float f = r.f32();
      if (!std::isfinite(f)) {
        throw ValidationError("sample " + std::to_string(n) + " contains a non-finite value");
      }
      v = f;
    }
    if (label >= 0) s.label = static_cast<std::uint32_t>(label);
    out.push_back(std::move(s));
  }
  if (!r.at_end()) {
    throw FormatError("trailing bytes after " + std::to_string(count) + " samples");
  }
  return out;
}

void write_samples(const std::string& path, std::span<const RawSample> samples) {
  io::write_file(path, encode_samples(samples));
}

std::vector<RawSample> read_samples(const std::string& path) { return decode_samples(io::read_file(path)); }

std::vector<RawSample> load_dataset(const std::string& path, const ManifestEntry& entry) {
  auto samples = read_samples(path);
  bool any_label = false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& s = samples[i];
    s.dataset_id = entry.dataset_id;
    if (!s.label) continue;
    any_label = true;
    if (*s.label >= entry.classes) {
      throw ValidationError("dataset '" + entry.dataset_id + "' sample " + std::to_string(i) + ": label " +
                            std::to_string(*s.label) + " >= class count " + std::to_string(entry.classes));
    }
  }
  if (any_label && entry.classes < 2) {
    throw ValidationError("dataset '" + entry.dataset_id + "' is labeled but declares " +
                          std::to_string(entry.classes) + " classes (need >= 2)");
  }
  return samples;
}

RawSample normalize_per_channel(const RawSample& sample) {
  RawSample out = sample;
  const auto n = sample.length();
  for (std::size_t c = 0; c < sample.channels(); ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < n; ++t) mean += sample.values(t, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double d = sample.values(t, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t t = 0; t < n; ++t) {
      out.values(t, c) = sd <= kConstantChannelEps ? 0.0 : (sample.values(t, c) - mean) / sd;
    }
  }
  return out;
}

void normalize_dataset(std::span<RawSample> samples) {
  if (samples.empty()) return;
  const auto channels = samples.front().channels();
  std::vector<double> sum(channels, 0.0);
  std::size_t count = 0;
  for (const auto& s : samples) {
    if (s.channels() != channels) {
      throw ValidationError("per-dataset normalization needs equal channel counts in '" + s.dataset_id + "'");
    }
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < channels; ++c) sum[c] += s.values(t, c);
    count += s.length();
  }
  std::vector<double> mean(channels), sd(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) mean[c] = sum[c] / static_cast<double>(count);
  for (const auto& s : samples)
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = s.values(t, c) - mean[c];
        sd[c] += d * d;
      }
  for (auto& v : sd) v = std::sqrt(v / static_cast<double>(count));
  for (auto& s : samples)
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t c = 0; c < channels; ++c)
        s.values(t, c) = sd[c] <= kConstantChannelEps ? 0.0 : (s.values(t, c) - mean[c]) / sd[c];
}

std::vector<RawSample> load_normalized(const ManifestEntry& entry, NormScope scope) {
  auto samples = load_dataset(entry.path, entry);
  if (scope == NormScope::kPerDataset) {
    normalize_dataset(samples);
  } else {
    for (auto& s : samples) s = normalize_per_channel(s);
  }
  return samples;
}

RawSample parse_csv_sample(std::string_view text, const std::string& dataset_id) {
  RawSample s;
  s.dataset_id = dataset_id;
  std::vector<double> values;
  std::size_t channels = 0;
  std::size_t rows = 0;
  bool first_data_line = true;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      auto body = trim(std::string_view(t).substr(1));
      if (body.rfind("label", 0) == 0) {
        auto rest = trim(std::string_view(body).substr(5));
        if (!rest.empty() && (rest.front() == '=' || rest.front() == ':')) rest = trim(rest.substr(1));
        double v = 0;
        if (!parse_double(rest, v) || v < 0 || v != std::floor(v)) {
          throw ValidationError("CSV line " + std::to_string(line_no) + ": bad label '" + rest + "'");
        }
        s.label = static_cast<std::uint32_t>(v);
      }
      continue;
    }
    std::vector<double> row;
    bool numeric = true;
    std::size_t start = 0;
    while (true) {
      auto comma = t.find(',', start);
      auto cell = std::string_view(t).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      double v = 0;
      if (!parse_double(cell, v)) numeric = false;
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!numeric) {
      if (first_data_line) {
        first_data_line = false;
        continue;  // header row
      }
      throw ValidationError("CSV line " + std::to_string(line_no) + ": non-numeric value");
    }
    first_data_line = false;
    if (channels == 0) channels = row.size();
    if (row.size() != channels) {
      throw ValidationError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(channels) +
                            " columns, got " + std::to_string(row.size()));
    }
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("CSV line " + std::to_string(line_no) + ": non-finite value");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  if (rows == 0) throw ValidationError("CSV contains no data rows");
  s.values = Matrix<double>(rows, channels, std::move(values));
  return s;
}

}  // namespace adapt
