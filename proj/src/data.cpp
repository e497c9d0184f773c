#include "ernn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ernn/errors.hpp"
#include "ernn/rng.hpp"

namespace ernn {

SequenceDataset SequenceDataset::subset(std::span<const std::size_t> indices) const {
  SequenceDataset out;
  out.seq_len = seq_len;
  out.feature_dim = feature_dim;
  out.class_count = class_count;
  out.features.reserve(indices.size() * stride());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto s = sequence(i);
    out.features.insert(out.features.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> SequenceDataset::class_counts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void SequenceDataset::validate() const {
  if (seq_len == 0 || feature_dim == 0) throw FormatError("dataset: T and d must be positive");
  if (features.size() != labels.size() * stride()) {
    throw FormatError("dataset: feature buffer does not match N × T × d");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw FormatError("dataset: sample " + std::to_string(i) + " has label " +
                        std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
  }
  for (double v : features)
    if (!std::isfinite(v)) throw FormatError("dataset: non-finite feature");
}

SequenceDataset gen_random_walks(std::size_t n_per_class, std::size_t steps, double sigma0,
                                 double sigma1, std::uint64_t seed) {
  if (steps == 0) throw std::invalid_argument("gen_random_walks: T must be >= 1");
  if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) {
    throw std::invalid_argument("gen_random_walks: sigmas must be positive");
  }
  SequenceDataset ds;
  ds.seq_len = steps;
  ds.feature_dim = 2;
  ds.class_count = 2;
  ds.features.reserve(2 * n_per_class * steps * 2);
  ds.labels.reserve(2 * n_per_class);
  Xoshiro256ss rng(seed);
  const double sigmas[2] = {sigma0, sigma1};
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      double x = 0.0, y = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        x += sigmas[c] * rng.normal();
        y += sigmas[c] * rng.normal();
        ds.features.push_back(x);
        ds.features.push_back(y);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

DatasetSplit split(const SequenceDataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw std::invalid_argument("split: train_frac must be in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  Xoshiro256ss rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw std::invalid_argument("split: class " + std::to_string(c) +
                                  " has fewer than 2 samples");
    }
    rng.shuffle(std::span<std::size_t>(idx));
    const double want = std::round(train_frac * static_cast<double>(idx.size()));
    const std::size_t n_train =
        std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, idx.size() - 1);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void csv_fail(std::size_t line_no, const std::string& what) {
  throw FormatError("line " + std::to_string(line_no) + ": " + what);
}

template <typename T>
T parse_field(std::string_view s, std::size_t line_no, const char* column) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    csv_fail(line_no, std::string("non-numeric ") + column + " field '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

SequenceDataset read_csv_sequences(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 4 || header[0] != "sample_id" || header[1] != "t" || header[2] != "label") {
    csv_fail(1, "header must start with sample_id,t,label,f0");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[3 + j] != "f" + std::to_string(j)) {
      csv_fail(1, "expected column f" + std::to_string(j) + ", found '" +
                      std::string(header[3 + j]) + "'");
    }
  }
  if (schema.feature_dim && *schema.feature_dim != d) {
    csv_fail(1, "file has " + std::to_string(d) + " features, schema expects " +
                    std::to_string(*schema.feature_dim));
  }

  SequenceDataset ds;
  ds.feature_dim = d;
  bool have_sample = false;
  long long current_id = 0;
  std::size_t current_len = 0;
  int current_label = 0;
  int max_label = -1;

  auto close_sample = [&](std::size_t at_line) {
    if (!have_sample) return;
    if (ds.labels.size() == 1) {
      ds.seq_len = current_len;
    } else if (current_len != ds.seq_len) {
      csv_fail(at_line, "sample_id " + std::to_string(current_id) + " has " +
                            std::to_string(current_len) + " timesteps, expected " +
                            std::to_string(ds.seq_len));
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3 + d) {
      csv_fail(line_no, "expected " + std::to_string(3 + d) + " fields, found " +
                            std::to_string(fields.size()));
    }
    const auto id = parse_field<long long>(fields[0], line_no, "sample_id");
    const auto t = parse_field<long long>(fields[1], line_no, "t");
    const auto label = parse_field<int>(fields[2], line_no, "label");
    if (label < 0 || (schema.class_count && static_cast<std::size_t>(label) >= *schema.class_count)) {
      csv_fail(line_no, "unknown label " + std::to_string(label));
    }
    if (!have_sample || id != current_id) {
      if (have_sample && id < current_id) csv_fail(line_no, "rows not sorted by sample_id");
      close_sample(line_no - 1);
      have_sample = true;
      current_id = id;
      current_len = 0;
      current_label = label;
      ds.labels.push_back(label);
      max_label = std::max(max_label, label);
    } else if (label != current_label) {
      csv_fail(line_no, "label changes within sample_id " + std::to_string(id));
    }
    if (t != static_cast<long long>(current_len) + 1) {
      csv_fail(line_no, "sample_id " + std::to_string(id) + " expected t=" +
                            std::to_string(current_len + 1) + ", found t=" + std::to_string(t));
    }
    ++current_len;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = parse_field<double>(fields[3 + j], line_no, "feature");
      if (!std::isfinite(v)) csv_fail(line_no, "non-finite feature value");
      ds.features.push_back(v);
    }
  }
  close_sample(line_no);
  if (!have_sample) throw FormatError("csv: no samples");
  ds.class_count = schema.class_count ? *schema.class_count : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

SequenceDataset load_csv_sequences(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  try {
    return read_csv_sequences(in, schema);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_csv_sequences(std::ostream& out, const SequenceDataset& ds) {
  out << "sample_id,t,label";
  for (std::size_t j = 0; j < ds.feature_dim; ++j) out << ",f" << j;
  out << '\n';
  std::string row;
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto seq = ds.sequence(i);
    for (std::size_t t = 0; t < ds.seq_len; ++t) {
      row.clear();
      row += std::to_string(i);
      row += ',';
      row += std::to_string(t + 1);
      row += ',';
      row += std::to_string(ds.labels[i]);
      for (std::size_t j = 0; j < ds.feature_dim; ++j) {
        auto res = std::to_chars(buf, buf + sizeof(buf), seq[t * ds.feature_dim + j]);
        row += ',';
        row.append(buf, res.ptr);
      }
      row += '\n';
      out << row;
    }
  }
}

void save_csv_sequences(const std::filesystem::path& path, const SequenceDataset& ds) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  write_csv_sequences(out, ds);
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

Standardized standardize(const SequenceDataset& train, const SequenceDataset& test) {
  if (train.feature_dim != test.feature_dim) {
    throw DimensionError("standardize: feature dimension mismatch");
  }
  const std::size_t d = train.feature_dim;
  Standardized out{train, test, std::vector<double>(d, 0.0), std::vector<double>(d, 0.0),
                   std::vector<bool>(d, false)};
  const std::size_t rows = train.features.size() / std::max<std::size_t>(d, 1);
  if (rows == 0) return out;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += train.features[r * d + j];
  for (double& m : out.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = train.features[r * d + j] - out.mean[j];
      out.stddev[j] += dv * dv;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    out.stddev[j] = std::sqrt(out.stddev[j] / static_cast<double>(rows));
    out.unscaled[j] = !(out.stddev[j] > 0.0);
  }
  auto apply = [&](std::vector<double>& xs) {
    for (std::size_t r = 0; r < xs.size() / d; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        if (out.unscaled[j]) continue;
        xs[r * d + j] = (xs[r * d + j] - out.mean[j]) / out.stddev[j];
      }
    }
  };
  apply(out.train.features);
  apply(out.test.features);
  return out;
}

}  // namespace ernn
