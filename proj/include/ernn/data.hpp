#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace ernn {

/// N sequences of T timesteps × d features with integer labels in [0, C).
struct SequenceDataset {
  std::size_t seq_len = 0;
  std::size_t feature_dim = 0;
  std::size_t class_count = 0;
  std::vector<double> features;  ///< N × T × d, row-major
  std::vector<int> labels;       ///< N

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::size_t stride() const noexcept { return seq_len * feature_dim; }

  std::span<const double> sequence(std::size_t i) const noexcept {
    return {features.data() + i * stride(), stride()};
  }
  std::span<double> sequence(std::size_t i) noexcept {
    return {features.data() + i * stride(), stride()};
  }

  /// Samples with the given indices, in that order.
  SequenceDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;

  /// Throws FormatError if shapes, labels or features are inconsistent.
  void validate() const;

  bool operator==(const SequenceDataset&) const = default;
};

/// Two-class 2-D random walks: X_0 = 0 and X_t = X_{t−1} + σ_c ε_t with
/// ε_t ~ N(0, I). The first `n_per_class` samples are class 0 (σ0), the next
/// class 1 (σ1). Stored features are X_1 … X_T. Gaussians come from
/// Xoshiro256ss::normal() seeded with `seed`, drawn x then y per step.
SequenceDataset gen_random_walks(std::size_t n_per_class, std::size_t steps, double sigma0,
                                 double sigma1, std::uint64_t seed);

struct DatasetSplit {
  SequenceDataset train;
  SequenceDataset test;
};

/// Stratified split: each class is shuffled with `seed` and round(train_frac·n_c)
/// of it (clamped to [1, n_c − 1]) goes to train. Both parts keep the
/// original sample order. Throws std::invalid_argument if a present class has
/// fewer than two samples or train_frac is outside (0, 1).
DatasetSplit split(const SequenceDataset& ds, double train_frac, std::uint64_t seed);

/// Optional expectations checked while loading.
struct CsvSchema {
  std::optional<std::size_t> feature_dim;
  std::optional<std::size_t> class_count;  ///< labels outside [0, C) are errors
};

// CSV layout: header `sample_id,t,label,f0,...,f{d-1}`; rows sorted by
// (sample_id, t); t runs 1..T within each sample; label constant per sample.

/// Throws FormatError naming the line (or sample id, for ragged lengths).
SequenceDataset read_csv_sequences(std::istream& in, const CsvSchema& schema = {});
SequenceDataset load_csv_sequences(const std::filesystem::path& path,
                                   const CsvSchema& schema = {});

/// Shortest round-trip decimal formatting, so reading back is exact.
void write_csv_sequences(std::ostream& out, const SequenceDataset& ds);
void save_csv_sequences(const std::filesystem::path& path, const SequenceDataset& ds);

struct Standardized {
  SequenceDataset train;
  SequenceDataset test;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> unscaled;  ///< feature had zero spread and was left as is
};

/// Per-feature (x − mean)/std with statistics pooled over all samples and
/// timesteps of `train` only, applied to both splits.
Standardized standardize(const SequenceDataset& train, const SequenceDataset& test);

}  // namespace ernn
