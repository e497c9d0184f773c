#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "ernn/cells.hpp"
#include "ernn/data.hpp"
#include "ernn/linalg.hpp"

namespace ernn {

/// √(Σ over all tensors of ‖θ_a − θ_b‖²_F), η and classifier included.
double parameter_distance(const ErnnParams& a, const ErnnParams& b);

/// Entry e is parameter_distance(checkpoints[e], checkpoints.back()); the last
/// entry is 0. Needs at least two checkpoints of one shape.
std::vector<double> model_distance_trace(std::span<const ErnnParams> checkpoints);

/// Mean over classes of the mean distance from each state to its class
/// centroid, divided by the mean distance between pairs of class centroids.
/// `states` is N×n. Classes without samples are ignored; fewer than two
/// populated classes throws std::invalid_argument. Lower is more discriminative.
double discriminability_ratio(const DenseMatrix& states, std::span<const int> labels,
                              std::size_t class_count);

/// h_t (zero-based t) of every sample, as an N×n matrix.
DenseMatrix hidden_states_at(const ErnnParams& p, const SequenceDataset& ds, std::size_t t);

/// discriminability_ratio of h_t for t = 1..T.
std::vector<double> discriminability_trace(const ErnnParams& p, const SequenceDataset& ds);

struct EtaEntry {
  std::size_t t = 0;  ///< 1-based timestep
  std::size_t k = 0;  ///< 1-based inner step
  double eta = 0.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept. A single point, or all x
/// equal, gives slope 0 and the mean as intercept.
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct EtaReport {
  std::vector<EtaEntry> entries;  ///< row-major over (t, k)
  std::vector<LineFit> fits;      ///< one per k, η against t
};

EtaReport eta_report(const ErnnParams& p);

/// J = ∂[φ(h) − h]/∂h at h = h_t⁽ᵏ⁻¹⁾ of the tape, where φ is the map the inner
/// step relaxes toward. ReLU contributes its active-set diagonal. Not defined
/// for the vanilla RNN (std::invalid_argument).
DenseMatrix inner_jacobian(const ErnnParams& p, const ForwardTape& tape, std::size_t t,
                           std::size_t k);

/// ‖I + η J‖₂; exactly 1 when η = 0.
double contraction_norm(const DenseMatrix& jacobian, double eta);

struct ContractionStat {
  std::size_t t = 0;  ///< 1-based
  std::size_t k = 0;  ///< 1-based
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double frac_below_one = 0.0;
};

/// Statistics of ‖I + η_t⁽ᵏ⁾ J‖₂ over the first `sample_count` samples.
std::vector<ContractionStat> contraction_report(const ErnnParams& p, const SequenceDataset& ds,
                                                std::size_t sample_count);

struct InnerResidualStat {
  std::size_t t = 0;  ///< 1-based
  std::size_t k = 0;  ///< 1-based
  double mean = 0.0;  ///< mean over samples of ‖φ(h⁽ᵏ⁾) − h⁽ᵏ⁾‖₂
};

/// Fixed-point residual after each inner step, averaged over the first
/// `sample_count` samples. Not defined for the vanilla RNN.
std::vector<InnerResidualStat> inner_residual_report(const ErnnParams& p,
                                                     const SequenceDataset& ds,
                                                     std::size_t sample_count);

void write_h1_csv(std::ostream& out, std::span<const double> trace);        // epoch,distance
void write_h2_csv(std::ostream& out, std::span<const double> trace);        // t,ratio
void write_eta_csv(std::ostream& out, const EtaReport& report);            // t,k,eta
void write_contraction_csv(std::ostream& out, std::span<const ContractionStat> stats);

}  // namespace ernn
