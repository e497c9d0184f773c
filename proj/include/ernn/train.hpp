#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ernn/cells.hpp"
#include "ernn/data.hpp"
#include "ernn/linalg.hpp"

namespace ernn {

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::size_t lr_half_period = 50;  ///< epochs between learning-rate halvings
  std::uint64_t seed = 1;
  std::size_t K = 1;
  std::size_t hidden_dim = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;            ///< global-norm clip; 0 disables
  std::size_t threads = 0;           ///< 0: std::thread::hardware_concurrency()
  std::size_t checkpoint_cap = 300;  ///< in-memory per-epoch checkpoints before spilling
  std::filesystem::path spill_dir;   ///< empty: a private temp directory
  bool keep_checkpoints = true;

  /// Throws std::invalid_argument on non-positive sizes or rates.
  void validate() const;
};

/// lr₀ · 2^(−⌊epoch / lr_half_period⌋), epochs counted from 0.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

/// ∂ℓ/∂θ, one tensor per parameter tensor of ErnnParams.
struct GradientSet {
  DenseMatrix dU;
  DenseMatrix dV;
  DenseMatrix dW;
  DenseVector db;
  DenseMatrix deta;
  DenseMatrix d_classifier_weights;
  DenseVector d_classifier_bias;

  static GradientSet zeros_like(const ErnnParams& p);

  std::array<std::span<double>, kTensorCount> tensors();
  std::array<std::span<const double>, kTensorCount> tensors() const;

  void set_zero();
  void add(const GradientSet& other);
  void scale(double alpha);
  double norm() const;
  bool all_finite() const;
};

struct AdamState {
  std::array<std::vector<double>, kTensorCount> first;
  std::array<std::vector<double>, kTensorCount> second;
  std::uint64_t step = 0;

  static AdamState for_params(const ErnnParams& p);
};

struct LossAndGrad {
  double loss = 0.0;
  DenseVector dlogits;
};

/// −log softmax(logits)[label], max-shifted; dlogits = softmax − onehot.
/// Throws std::out_of_range for a bad label.
LossAndGrad softmax_cross_entropy(const DenseVector& logits, int label);

/// Scratch buffers for backward_into; reuse across calls to avoid allocation.
struct BackwardWorkspace {
  std::vector<double> dh, dg, dq, dc, tmp;
};

/// Reverse accumulation through the classifier and all T·K inner steps.
/// Overwrites `grads` (must already be shaped like `p`). Tensors the cell
/// does not train stay zero.
void backward_into(const ErnnParams& p, const ForwardTape& tape, std::span<const double> x_flat,
                   const DenseVector& dlogits, GradientSet& grads, BackwardWorkspace& ws);

GradientSet backward(const ErnnParams& p, const ForwardTape& tape,
                     std::span<const double> x_flat, const DenseVector& dlogits);
/// Checked variant taking one DenseVector per timestep.
GradientSet backward(const ErnnParams& p, const ForwardTape& tape,
                     const std::vector<DenseVector>& x_seq, const DenseVector& dlogits);

/// Loss of one sample.
double sample_loss(const ErnnParams& p, std::span<const double> x_flat, int label);

/// Central differences (ℓ(θ+ε) − ℓ(θ−ε)) / 2ε on every trainable coordinate,
/// compared against backward(). Returns max |a − f| / max(1e-8, |a| + |f|).
/// The perturbed losses come from an independent extended-precision forward
/// pass, so round-off in ℓ does not dominate small gradient coordinates.
double finite_diff_gradcheck(const ErnnParams& p, std::span<const double> x_flat, int label,
                             double eps = 1e-6);

/// Smallest |g| over all pre-activations of the tape. ReLU gradient checks
/// resample instances where this is near zero.
double min_abs_preactivation(const ForwardTape& tape);

/// Bias-corrected Adam on every trainable tensor, η included. Throws
/// DivergenceError (leaving params and state untouched) on non-finite grads.
void adam_step(ErnnParams& p, const GradientSet& grads, AdamState& state, double lr,
               const TrainConfig& config = {});

/// Mean loss and mean gradient over `indices`. Per-sample work may run on
/// several threads; the reduction always runs in index order, so the result
/// does not depend on the thread count.
struct BatchGradient {
  GradientSet grad;
  double mean_loss = 0.0;
};
BatchGradient batch_gradient(const ErnnParams& p, const SequenceDataset& ds,
                             std::span<const std::size_t> indices, std::size_t threads = 1);

/// Fraction of samples whose argmax logit (ties to the smallest index) equals the label.
double evaluate(const ErnnParams& p, const SequenceDataset& ds, std::size_t threads = 1);

/// Mean cross-entropy over the dataset.
double mean_loss(const ErnnParams& p, const SequenceDataset& ds, std::size_t threads = 1);

/// Per-epoch parameter snapshots. Keeps at most `memory_cap` in memory; the
/// oldest in-memory snapshot spills to a checkpoint file beyond that.
class CheckpointStore {
public:
  explicit CheckpointStore(std::size_t memory_cap = 300, std::filesystem::path spill_dir = {});
  CheckpointStore(CheckpointStore&&) noexcept;
  CheckpointStore& operator=(CheckpointStore&&) noexcept;
  CheckpointStore(const CheckpointStore&) = delete;
  CheckpointStore& operator=(const CheckpointStore&) = delete;
  ~CheckpointStore();

  void push(const ErnnParams& params);
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t spilled() const noexcept;
  ErnnParams at(std::size_t i) const;
  std::vector<ErnnParams> all() const;

private:
  std::filesystem::path spill_path(std::size_t i);

  std::size_t memory_cap_;
  std::filesystem::path spill_dir_;
  bool owns_dir_ = false;
  std::size_t in_memory_ = 0;
  std::size_t oldest_in_memory_ = 0;
  std::vector<std::variant<ErnnParams, std::filesystem::path>> entries_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  ///< mean loss over the epoch's mini-batches
  double test_acc = 0.0;    ///< NaN when no evaluation set was given
  double wall_ms = 0.0;
};

struct TrainResult {
  ErnnParams params;
  std::vector<EpochRecord> records;
  CheckpointStore checkpoints;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
  std::string message;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the mean cross-entropy of the last-state logits.
/// Shuffles every epoch with a PRNG seeded from config.seed, halves the
/// learning rate every lr_half_period epochs and snapshots the parameters
/// after every epoch. Stops at the first non-finite loss or gradient and
/// reports the epoch, returning the last finite parameters.
TrainResult train(const ErnnParams& init, const SequenceDataset& train_set,
                  const SequenceDataset* eval_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// CSV `epoch,lr,train_loss,test_acc,wall_ms`.
void write_records_csv(std::ostream& out, std::span<const EpochRecord> records);

}  // namespace ernn
