#include "ernn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unistd.h>

#include "ernn/checkpoint.hpp"
#include "ernn/errors.hpp"
#include "ernn/rng.hpp"
#include "parallel.hpp"

namespace ernn {

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  need(learning_rate > 0.0, "learning_rate must be positive");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(lr_half_period >= 1, "lr_half_period must be >= 1");
  need(K >= 1, "K must be >= 1");
  need(hidden_dim >= 1, "hidden_dim must be >= 1");
  need(adam_beta1 > 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in (0, 1)");
  need(adam_beta2 > 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in (0, 1)");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(clip_norm >= 0.0, "clip_norm must be >= 0");
  need(checkpoint_cap >= 1, "checkpoint_cap must be >= 1");
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  return std::ldexp(config.learning_rate, -static_cast<int>(epoch / config.lr_half_period));
}

// ---------------------------------------------------------------------------
// GradientSet / AdamState

GradientSet GradientSet::zeros_like(const ErnnParams& p) {
  return {DenseMatrix(p.U.rows(), p.U.cols()),
          DenseMatrix(p.V.rows(), p.V.cols()),
          DenseMatrix(p.W.rows(), p.W.cols()),
          DenseVector(p.b.size()),
          DenseMatrix(p.eta.rows(), p.eta.cols()),
          DenseMatrix(p.classifier_weights.rows(), p.classifier_weights.cols()),
          DenseVector(p.classifier_bias.size())};
}

std::array<std::span<double>, kTensorCount> GradientSet::tensors() {
  return {dU.span(), dV.span(), dW.span(), db.span(), deta.span(), d_classifier_weights.span(),
          d_classifier_bias.span()};
}

std::array<std::span<const double>, kTensorCount> GradientSet::tensors() const {
  return {dU.span(), dV.span(), dW.span(), db.span(), deta.span(), d_classifier_weights.span(),
          d_classifier_bias.span()};
}

void GradientSet::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

void GradientSet::add(const GradientSet& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (mine[i].size() != theirs[i].size()) throw DimensionError("GradientSet::add: shape mismatch");
    kernel::axpy(1.0, theirs[i], mine[i]);
  }
}

void GradientSet::scale(double alpha) {
  for (auto t : tensors())
    for (double& v : t) v *= alpha;
}

double GradientSet::norm() const {
  double s = 0.0;
  for (auto t : tensors()) s += kernel::dot(t, t);
  return std::sqrt(s);
}

bool GradientSet::all_finite() const {
  for (auto t : tensors())
    for (double v : t)
      if (!std::isfinite(v)) return false;
  return true;
}

AdamState AdamState::for_params(const ErnnParams& p) {
  AdamState s;
  auto ts = p.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    s.first[i].assign(ts[i].size(), 0.0);
    s.second[i].assign(ts[i].size(), 0.0);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Loss and gradients

LossAndGrad softmax_cross_entropy(const DenseVector& logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const double mx = *std::max_element(logits.values().begin(), logits.values().end());
  LossAndGrad out{0.0, DenseVector(logits.size())};
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.dlogits[i] = std::exp(logits[i] - mx);
    z += out.dlogits[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out.dlogits[i] /= z;
  out.loss = std::log(z) - (logits[static_cast<std::size_t>(label)] - mx);
  out.dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return out;
}

void backward_into(const ErnnParams& p, const ForwardTape& tape, std::span<const double> x_flat,
                   const DenseVector& dlogits, GradientSet& g, BackwardWorkspace& ws) {
  const std::size_t n = tape.hidden();
  const std::size_t d = p.W.cols();
  const std::size_t T = tape.steps();
  const std::size_t K = tape.inner();
  const bool train_u = is_trainable(p.cell_kind, Tensor::U);
  const bool train_eta = is_trainable(p.cell_kind, Tensor::eta);

  g.set_zero();
  ws.dh.assign(n, 0.0);
  ws.dg.assign(n, 0.0);
  ws.dq.assign(n, 0.0);
  ws.dc.assign(n, 0.0);
  ws.tmp.assign(n, 0.0);
  auto dh = std::span<double>(ws.dh);
  auto dg = std::span<double>(ws.dg);
  auto dq = std::span<double>(ws.dq);
  auto dc = std::span<double>(ws.dc);
  auto tmp = std::span<double>(ws.tmp);

  // Classifier.
  kernel::ger(g.d_classifier_weights, 1.0, dlogits.span(), tape.final_state());
  kernel::axpy(1.0, dlogits.span(), g.d_classifier_bias.span());
  kernel::gemv_t(p.classifier_weights, dlogits.span(), dh);

  for (std::size_t t = T; t-- > 0;) {
    auto x = x_flat.subspan(t * d, d);
    auto h_prev = tape.start(t);
    switch (p.cell_kind) {
      case CellKind::vanilla_rnn: {
        auto pre = tape.pre(t, 0);
        auto act = tape.act(t, 0);
        for (std::size_t i = 0; i < n; ++i) dg[i] = dh[i] * activation_slope(p.activation, pre[i], act[i]);
        kernel::ger(g.dV, 1.0, dg, h_prev);
        kernel::ger(g.dW, 1.0, dg, x);
        kernel::axpy(1.0, dg, g.db.span());
        kernel::gemv_t(p.V, dg, dh);
        break;
      }
      case CellKind::ernn_toy: {
        std::fill(dc.begin(), dc.end(), 0.0);
        for (std::size_t k = K; k-- > 0;) {
          const double eta = p.eta(t, k);
          auto hk = tape.state_before(t, k);
          auto pre = tape.pre(t, k);
          auto act = tape.act(t, k);
          double de = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            de += dh[i] * (act[i] - hk[i]);
            dg[i] = eta * dh[i] * activation_slope(p.activation, pre[i], act[i]);
          }
          if (train_eta) g.deta(t, k) += de;
          for (std::size_t i = 0; i < n; ++i) {
            dc[i] += dg[i];
            dh[i] = (1.0 - eta) * dh[i] + dg[i];
          }
        }
        kernel::ger(g.dV, 1.0, dc, h_prev);
        kernel::ger(g.dW, 1.0, dc, x);
        kernel::axpy(1.0, dc, g.db.span());
        kernel::gemv_t(p.V, dc, dh, true);
        break;
      }
      case CellKind::ernn_exemplar:
      case CellKind::fastrnn: {
        for (std::size_t k = K; k-- > 0;) {
          const double eta = p.eta(t, k);
          auto hk = tape.state_before(t, k);
          auto q = tape.affine(t, k);
          auto pre = tape.pre(t, k);
          auto act = tape.act(t, k);
          double de = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            de += dh[i] * (act[i] - hk[i]);
            dg[i] = eta * dh[i] * activation_slope(p.activation, pre[i], act[i]);
          }
          if (train_eta) g.deta(t, k) += de;
          if (train_u) kernel::ger(g.dU, 1.0, dg, q);
          // dq = (I + U)ᵀ dg
          kernel::gemv_t(p.U, dg, dq);
          kernel::axpy(1.0, dg, dq);
          kernel::ger(g.dV, 1.0, dq, hk);
          kernel::ger(g.dW, 1.0, dq, x);
          kernel::axpy(1.0, dq, g.db.span());
          kernel::gemv_t(p.V, dq, tmp);
          for (std::size_t i = 0; i < n; ++i) dh[i] = (1.0 - eta) * dh[i] + tmp[i];
        }
        break;
      }
    }
  }
}

GradientSet backward(const ErnnParams& p, const ForwardTape& tape,
                     std::span<const double> x_flat, const DenseVector& dlogits) {
  const ModelShape s = p.shape();
  if (tape.steps() != s.steps || tape.inner() != s.inner || tape.hidden() != s.hidden) {
    throw DimensionError("backward: tape shape does not match params");
  }
  if (x_flat.size() != s.steps * s.input) throw DimensionError("backward: input length mismatch");
  if (dlogits.size() != s.classes) throw DimensionError("backward: dlogits length mismatch");
  GradientSet g = GradientSet::zeros_like(p);
  BackwardWorkspace ws;
  backward_into(p, tape, x_flat, dlogits, g, ws);
  return g;
}

GradientSet backward(const ErnnParams& p, const ForwardTape& tape,
                     const std::vector<DenseVector>& x_seq, const DenseVector& dlogits) {
  std::vector<double> flat;
  for (const auto& x : x_seq) {
    if (x.size() != p.W.cols()) throw DimensionError("backward: input feature length mismatch");
    flat.insert(flat.end(), x.values().begin(), x.values().end());
  }
  return backward(p, tape, flat, dlogits);
}

double sample_loss(const ErnnParams& p, std::span<const double> x_flat, int label) {
  ForwardTape tape;
  forward_sequence(p, x_flat, tape);
  return softmax_cross_entropy(tape.logits, label).loss;
}

namespace {

using Extended = long double;

Extended activate_ext(Activation a, Extended x) {
  switch (a) {
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0 ? x : Extended{0};
    case Activation::identity: return x;
  }
  return x;
}

// Separate, loop-by-loop restatement of the forward pass and loss in extended
// precision. Central differences of the double-precision loss bottom out near
// 1e-10 absolute, which swamps gradient coordinates of order 1e-8.
Extended reference_loss(const ErnnParams& p, std::span<const double> x_flat, int label,
                        std::size_t perturb_tensor, std::size_t perturb_index, double delta) {
  const ModelShape s = p.shape();
  const std::size_t n = s.hidden, d = s.input;
  std::array<std::vector<Extended>, kTensorCount> th;
  const auto src = p.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) th[i].assign(src[i].begin(), src[i].end());
  th[perturb_tensor][perturb_index] += delta;
  const auto& U = th[0];
  const auto& V = th[1];
  const auto& W = th[2];
  const auto& b = th[3];
  const auto& eta = th[4];
  const auto& cw = th[5];
  const auto& cb = th[6];

  auto affine = [&](const std::vector<Extended>& h, std::size_t t) {
    std::vector<Extended> q(n);
    for (std::size_t i = 0; i < n; ++i) {
      Extended acc = b[i];
      for (std::size_t j = 0; j < n; ++j) acc += V[i * n + j] * h[j];
      for (std::size_t j = 0; j < d; ++j) acc += W[i * d + j] * x_flat[t * d + j];
      q[i] = acc;
    }
    return q;
  };

  std::vector<Extended> h(n, 0);
  for (std::size_t t = 0; t < s.steps; ++t) {
    if (p.cell_kind == CellKind::vanilla_rnn) {
      const auto q = affine(h, t);
      for (std::size_t i = 0; i < n; ++i) h[i] = activate_ext(p.activation, q[i]);
      continue;
    }
    const auto c = affine(h, t);  // toy cell: fixed per timestep
    for (std::size_t k = 0; k < s.inner; ++k) {
      const Extended e = eta[t * s.inner + k];
      std::vector<Extended> g(n);
      if (p.cell_kind == CellKind::ernn_toy) {
        for (std::size_t i = 0; i < n; ++i) g[i] = h[i] + c[i];
      } else {
        const auto q = affine(h, t);
        for (std::size_t i = 0; i < n; ++i) {
          Extended acc = q[i];
          for (std::size_t j = 0; j < n; ++j) acc += U[i * n + j] * q[j];
          g[i] = acc;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        h[i] = (1 - e) * h[i] + e * activate_ext(p.activation, g[i]);
      }
    }
  }

  std::vector<Extended> logits(s.classes);
  Extended mx = -std::numeric_limits<Extended>::infinity();
  for (std::size_t c = 0; c < s.classes; ++c) {
    Extended acc = cb[c];
    for (std::size_t j = 0; j < n; ++j) acc += cw[c * n + j] * h[j];
    logits[c] = acc;
    mx = std::max(mx, acc);
  }
  Extended z = 0;
  for (Extended l : logits) z += std::exp(l - mx);
  return std::log(z) - (logits[static_cast<std::size_t>(label)] - mx);
}

}  // namespace

double finite_diff_gradcheck(const ErnnParams& p, std::span<const double> x_flat, int label,
                             double eps) {
  ForwardTape tape;
  forward_sequence(p, x_flat, tape);
  const auto lg = softmax_cross_entropy(tape.logits, label);
  const GradientSet analytic = backward(p, tape, x_flat, lg.dlogits);

  double worst = 0.0;
  const auto grads = analytic.tensors();
  for (std::size_t ti = 0; ti < kTensorCount; ++ti) {
    if (!is_trainable(p.cell_kind, static_cast<Tensor>(ti))) continue;
    for (std::size_t j = 0; j < grads[ti].size(); ++j) {
      const Extended up = reference_loss(p, x_flat, label, ti, j, eps);
      const Extended down = reference_loss(p, x_flat, label, ti, j, -eps);
      const double f = static_cast<double>((up - down) / (2 * static_cast<Extended>(eps)));
      const double a = grads[ti][j];
      worst = std::max(worst, std::abs(a - f) / std::max(1e-8, std::abs(a) + std::abs(f)));
    }
  }
  return worst;
}

double min_abs_preactivation(const ForwardTape& tape) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < tape.steps(); ++t)
    for (std::size_t k = 0; k < tape.inner(); ++k)
      for (double g : tape.pre(t, k)) m = std::min(m, std::abs(g));
  return m;
}

void adam_step(ErnnParams& p, const GradientSet& grads, AdamState& state, double lr,
               const TrainConfig& config) {
  if (!grads.all_finite()) throw DivergenceError("adam_step: non-finite gradient");
  auto values = p.tensors();
  auto gs = grads.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (values[i].size() != gs[i].size() || state.first[i].size() != values[i].size()) {
      throw DimensionError("adam_step: shapes of params, grads and state differ");
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (!is_trainable(p.cell_kind, static_cast<Tensor>(i))) continue;
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const double g = gs[i][j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[i][j] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Batched evaluation

namespace {

struct Worker {
  ForwardTape tape;
  BackwardWorkspace ws;
};

}  // namespace

BatchGradient batch_gradient(const ErnnParams& p, const SequenceDataset& ds,
                             std::span<const std::size_t> indices, std::size_t threads) {
  const std::size_t B = indices.size();
  if (B == 0) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t nthreads = detail::resolve_threads(threads);
  std::vector<GradientSet> per_sample(B, GradientSet::zeros_like(p));
  std::vector<double> losses(B, 0.0);
  std::vector<Worker> workers(std::min(nthreads, B));
  detail::parallel_for(B, nthreads, [&](std::size_t begin, std::size_t end, std::size_t w) {
    Worker& wk = workers[w];
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t s = indices[i];
      forward_sequence(p, ds.sequence(s), wk.tape);
      const auto lg = softmax_cross_entropy(wk.tape.logits, ds.labels[s]);
      losses[i] = lg.loss;
      backward_into(p, wk.tape, ds.sequence(s), lg.dlogits, per_sample[i], wk.ws);
    }
  });
  BatchGradient out{GradientSet::zeros_like(p), 0.0};
  for (std::size_t i = 0; i < B; ++i) {
    out.grad.add(per_sample[i]);
    out.mean_loss += losses[i];
  }
  out.grad.scale(1.0 / static_cast<double>(B));
  out.mean_loss /= static_cast<double>(B);
  return out;
}

namespace {

// Runs `fn(sample, tape)` on every sample, in parallel chunks.
template <typename Fn>
void for_each_forward(const ErnnParams& p, const SequenceDataset& ds, std::size_t threads, Fn&& fn) {
  const std::size_t nthreads = detail::resolve_threads(threads);
  detail::parallel_for(ds.size(), nthreads, [&](std::size_t begin, std::size_t end, std::size_t) {
    ForwardTape tape;
    for (std::size_t i = begin; i < end; ++i) {
      forward_sequence(p, ds.sequence(i), tape);
      fn(i, tape);
    }
  });
}

}  // namespace

double evaluate(const ErnnParams& p, const SequenceDataset& ds, std::size_t threads) {
  if (ds.empty()) return 0.0;
  std::vector<char> correct(ds.size(), 0);
  for_each_forward(p, ds, threads, [&](std::size_t i, const ForwardTape& tape) {
    const auto& lv = tape.logits.values();
    // max_element returns the first maximum: ties go to the smallest class.
    const auto pred = std::distance(lv.begin(), std::max_element(lv.begin(), lv.end()));
    correct[i] = pred == ds.labels[i];
  });
  const auto hits = std::count(correct.begin(), correct.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double mean_loss(const ErnnParams& p, const SequenceDataset& ds, std::size_t threads) {
  if (ds.empty()) return 0.0;
  std::vector<double> losses(ds.size(), 0.0);
  for_each_forward(p, ds, threads, [&](std::size_t i, const ForwardTape& tape) {
    losses[i] = softmax_cross_entropy(tape.logits, ds.labels[i]).loss;
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Checkpoint store

CheckpointStore::CheckpointStore(std::size_t memory_cap, std::filesystem::path spill_dir)
    : memory_cap_(std::max<std::size_t>(memory_cap, 1)), spill_dir_(std::move(spill_dir)) {}

CheckpointStore::CheckpointStore(CheckpointStore&& o) noexcept
    : memory_cap_(o.memory_cap_),
      spill_dir_(std::move(o.spill_dir_)),
      owns_dir_(std::exchange(o.owns_dir_, false)),
      in_memory_(o.in_memory_),
      oldest_in_memory_(o.oldest_in_memory_),
      entries_(std::move(o.entries_)) {}

CheckpointStore& CheckpointStore::operator=(CheckpointStore&& o) noexcept {
  if (this != &o) {
    if (owns_dir_) {
      std::error_code ec;
      std::filesystem::remove_all(spill_dir_, ec);
    }
    memory_cap_ = o.memory_cap_;
    spill_dir_ = std::move(o.spill_dir_);
    owns_dir_ = std::exchange(o.owns_dir_, false);
    in_memory_ = o.in_memory_;
    oldest_in_memory_ = o.oldest_in_memory_;
    entries_ = std::move(o.entries_);
  }
  return *this;
}

CheckpointStore::~CheckpointStore() {
  if (owns_dir_) {
    std::error_code ec;
    std::filesystem::remove_all(spill_dir_, ec);
  }
}

std::filesystem::path CheckpointStore::spill_path(std::size_t i) {
  if (spill_dir_.empty()) {
    static std::atomic<unsigned> counter{0};
    spill_dir_ = std::filesystem::temp_directory_path() /
                 ("ernn-spill-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    owns_dir_ = true;
  }
  std::filesystem::create_directories(spill_dir_);
  return spill_dir_ / ("epoch_" + std::to_string(i) + ".ckpt");
}

void CheckpointStore::push(const ErnnParams& params) {
  entries_.emplace_back(params);
  ++in_memory_;
  if (in_memory_ > memory_cap_) {
    const std::size_t i = oldest_in_memory_++;
    const auto path = spill_path(i);
    save_checkpoint(path, std::get<ErnnParams>(entries_[i]));
    entries_[i] = path;
    --in_memory_;
  }
}

std::size_t CheckpointStore::spilled() const noexcept { return entries_.size() - in_memory_; }

ErnnParams CheckpointStore::at(std::size_t i) const {
  const auto& e = entries_.at(i);
  if (const auto* p = std::get_if<ErnnParams>(&e)) return *p;
  return load_checkpoint(std::get<std::filesystem::path>(e));
}

std::vector<ErnnParams> CheckpointStore::all() const {
  std::vector<ErnnParams> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const ErnnParams& init, const SequenceDataset& train_set,
                  const SequenceDataset* eval_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  init.validate();
  train_set.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const ModelShape s = init.shape();
  if (train_set.seq_len != s.steps || train_set.feature_dim != s.input ||
      train_set.class_count > s.classes) {
    throw DimensionError("train: dataset shape does not match the model");
  }

  TrainResult result{init, {}, CheckpointStore(config.checkpoint_cap, config.spill_dir), false, 0, {}};
  ErnnParams& params = result.params;
  AdamState adam = AdamState::for_params(params);
  Xoshiro256ss rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t threads = detail::resolve_threads(config.threads);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lr = learning_rate_at(config, epoch);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
      BatchGradient bg = batch_gradient(params, train_set, idx, threads);
      if (!std::isfinite(bg.mean_loss) || !bg.grad.all_finite()) {
        result.diverged = true;
        result.diverged_epoch = epoch;
        result.message = "non-finite loss or gradient in epoch " + std::to_string(epoch);
        return result;
      }
      if (config.clip_norm > 0.0) {
        const double gn = bg.grad.norm();
        if (gn > config.clip_norm) bg.grad.scale(config.clip_norm / gn);
      }
      ErnnParams before = params;
      adam_step(params, bg.grad, adam, lr, config);
      if (!std::all_of(params.tensors().begin(), params.tensors().end(), [](auto t) {
            return std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); });
          })) {
        params = std::move(before);
        result.diverged = true;
        result.diverged_epoch = epoch;
        result.message = "non-finite parameters after update in epoch " + std::to_string(epoch);
        return result;
      }
      loss_sum += bg.mean_loss * static_cast<double>(idx.size());
      seen += idx.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.test_acc = eval_set ? evaluate(params, *eval_set, threads)
                            : std::numeric_limits<double>::quiet_NaN();
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                      .count();
    result.records.push_back(rec);
    if (config.keep_checkpoints) result.checkpoints.push(params);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

void write_records_csv(std::ostream& out, std::span<const EpochRecord> records) {
  out << "epoch,lr,train_loss,test_acc,wall_ms\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',';
    if (!std::isnan(r.test_acc)) out << r.test_acc;
    out << ',' << std::setprecision(6) << r.wall_ms << std::setprecision(17) << '\n';
  }
}

}  // namespace ernn
