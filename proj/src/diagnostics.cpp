#include "ernn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "ernn/errors.hpp"

namespace ernn {

double parameter_distance(const ErnnParams& a, const ErnnParams& b) {
  if (a.shape() != b.shape()) throw DimensionError("parameter_distance: shape drift");
  auto ta = a.tensors();
  auto tb = b.tensors();
  double s = 0.0;
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    if (ta[i].size() != tb[i].size()) throw DimensionError("parameter_distance: shape drift");
    for (std::size_t j = 0; j < ta[i].size(); ++j) {
      const double d = ta[i][j] - tb[i][j];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

std::vector<double> model_distance_trace(std::span<const ErnnParams> checkpoints) {
  if (checkpoints.size() < 2) {
    throw std::invalid_argument("model_distance_trace: need at least two checkpoints");
  }
  const ErnnParams& last = checkpoints.back();
  std::vector<double> out;
  out.reserve(checkpoints.size());
  for (std::size_t e = 0; e + 1 < checkpoints.size(); ++e) {
    out.push_back(parameter_distance(checkpoints[e], last));
  }
  out.push_back(0.0);
  return out;
}

double discriminability_ratio(const DenseMatrix& states, std::span<const int> labels,
                              std::size_t class_count) {
  const std::size_t N = states.rows();
  const std::size_t n = states.cols();
  if (labels.size() != N) throw DimensionError("discriminability_ratio: label count mismatch");
  std::vector<double> centroid(class_count * n, 0.0);
  std::vector<std::size_t> count(class_count, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (c >= class_count) throw std::out_of_range("discriminability_ratio: label out of range");
    ++count[c];
    kernel::axpy(1.0, states.row(i), std::span<double>(centroid).subspan(c * n, n));
  }
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < class_count; ++c) {
    if (count[c] == 0) continue;
    present.push_back(c);
    for (std::size_t j = 0; j < n; ++j) centroid[c * n + j] /= static_cast<double>(count[c]);
  }
  if (present.size() < 2) {
    throw std::invalid_argument("discriminability_ratio: need at least two populated classes");
  }
  auto dist = [n](const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  };

  std::vector<double> intra(class_count, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    intra[c] += dist(states.row(i).data(), centroid.data() + c * n);
  }
  double numerator = 0.0;
  for (std::size_t c : present) numerator += intra[c] / static_cast<double>(count[c]);
  numerator /= static_cast<double>(present.size());

  double denominator = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < present.size(); ++a) {
    for (std::size_t b = a + 1; b < present.size(); ++b) {
      denominator += dist(centroid.data() + present[a] * n, centroid.data() + present[b] * n);
      ++pairs;
    }
  }
  denominator /= static_cast<double>(pairs);
  if (denominator == 0.0) {
    return numerator == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return numerator / denominator;
}

DenseMatrix hidden_states_at(const ErnnParams& p, const SequenceDataset& ds, std::size_t t) {
  if (t >= p.eta.rows()) throw DimensionError("hidden_states_at: timestep out of range");
  DenseMatrix out(ds.size(), p.V.rows());
  ForwardTape tape;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    forward_sequence(p, ds.sequence(i), tape);
    auto h = tape.output(t);
    std::copy(h.begin(), h.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> discriminability_trace(const ErnnParams& p, const SequenceDataset& ds) {
  p.validate();
  const std::size_t T = p.eta.rows();
  const std::size_t n = p.V.rows();
  // All states at once: one forward pass per sample.
  std::vector<DenseMatrix> states(T, DenseMatrix(ds.size(), n));
  ForwardTape tape;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    forward_sequence(p, ds.sequence(i), tape);
    for (std::size_t t = 0; t < T; ++t) {
      auto h = tape.output(t);
      std::copy(h.begin(), h.end(), states[t].row(i).begin());
    }
  }
  std::vector<double> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    out.push_back(discriminability_ratio(states[t], ds.labels, ds.class_count));
  }
  return out;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.empty()) throw DimensionError("fit_line: bad input sizes");
  const double m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) return {0.0, my};
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

EtaReport eta_report(const ErnnParams& p) {
  const std::size_t T = p.eta.rows();
  const std::size_t K = p.eta.cols();
  EtaReport r;
  r.entries.reserve(T * K);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) r.entries.push_back({t + 1, k + 1, p.eta(t, k)});
  std::vector<double> ts(T), ys(T);
  for (std::size_t t = 0; t < T; ++t) ts[t] = static_cast<double>(t + 1);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < T; ++t) ys[t] = p.eta(t, k);
    r.fits.push_back(fit_line(ts, ys));
  }
  return r;
}

DenseMatrix inner_jacobian(const ErnnParams& p, const ForwardTape& tape, std::size_t t,
                           std::size_t k) {
  const std::size_t n = tape.hidden();
  auto pre = tape.pre(t, k);
  auto act = tape.act(t, k);
  DenseMatrix jac(n, n);
  switch (p.cell_kind) {
    case CellKind::vanilla_rnn:
      throw std::invalid_argument("inner_jacobian: the vanilla RNN has no inner iteration");
    case CellKind::ernn_toy:
      for (std::size_t i = 0; i < n; ++i) jac(i, i) = activation_slope(p.activation, pre[i], act[i]);
      break;
    case CellKind::ernn_exemplar:
    case CellKind::fastrnn: {
      // diag(σ'(g)) (I + U) V
      DenseMatrix iu = p.U;
      for (std::size_t i = 0; i < n; ++i) iu(i, i) += 1.0;
      jac = matmul(iu, p.V);
      for (std::size_t i = 0; i < n; ++i) {
        const double slope = activation_slope(p.activation, pre[i], act[i]);
        for (double& v : jac.row(i)) v *= slope;
      }
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) jac(i, i) -= 1.0;
  return jac;
}

double contraction_norm(const DenseMatrix& jacobian, double eta) {
  if (eta == 0.0) return 1.0;
  DenseMatrix m = scale(eta, jacobian);
  for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += 1.0;
  return spectral_norm(m, 5000, 1e-12).value;
}

std::vector<ContractionStat> contraction_report(const ErnnParams& p, const SequenceDataset& ds,
                                                std::size_t sample_count) {
  p.validate();
  const std::size_t T = p.eta.rows();
  const std::size_t K = p.eta.cols();
  const std::size_t S = std::min(sample_count, ds.size());
  std::vector<ContractionStat> stats(T * K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      auto& st = stats[t * K + k];
      st.t = t + 1;
      st.k = k + 1;
      st.min = std::numeric_limits<double>::infinity();
      st.max = -std::numeric_limits<double>::infinity();
    }
  }
  ForwardTape tape;
  for (std::size_t i = 0; i < S; ++i) {
    forward_sequence(p, ds.sequence(i), tape);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const double c = contraction_norm(inner_jacobian(p, tape, t, k), p.eta(t, k));
        auto& st = stats[t * K + k];
        st.min = std::min(st.min, c);
        st.max = std::max(st.max, c);
        st.mean += c;
        st.frac_below_one += c < 1.0 ? 1.0 : 0.0;
      }
    }
  }
  for (auto& st : stats) {
    if (S == 0) {
      st.min = st.max = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    st.mean /= static_cast<double>(S);
    st.frac_below_one /= static_cast<double>(S);
  }
  return stats;
}

std::vector<InnerResidualStat> inner_residual_report(const ErnnParams& p,
                                                     const SequenceDataset& ds,
                                                     std::size_t sample_count) {
  p.validate();
  if (p.cell_kind == CellKind::vanilla_rnn) {
    throw std::invalid_argument("inner_residual_report: the vanilla RNN has no inner iteration");
  }
  const std::size_t T = p.eta.rows();
  const std::size_t K = p.eta.cols();
  const std::size_t n = p.V.rows();
  const std::size_t d = p.W.cols();
  const std::size_t S = std::min(sample_count, ds.size());
  std::vector<InnerResidualStat> stats(T * K);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t k = 0; k < K; ++k) stats[t * K + k] = {t + 1, k + 1, 0.0};

  ForwardTape tape;
  std::vector<double> q(n), g(n);
  for (std::size_t i = 0; i < S; ++i) {
    auto x_all = ds.sequence(i);
    forward_sequence(p, x_all, tape);
    for (std::size_t t = 0; t < T; ++t) {
      auto x = x_all.subspan(t * d, d);
      for (std::size_t k = 0; k < K; ++k) {
        auto h = tape.state(t, k);
        if (p.cell_kind == CellKind::ernn_toy) {
          auto c = tape.affine(t, k);
          for (std::size_t j = 0; j < n; ++j) g[j] = h[j] + c[j];
        } else {
          kernel::gemv(p.V, h, q);
          kernel::gemv(p.W, x, q, true);
          kernel::axpy(1.0, p.b.span(), q);
          kernel::gemv(p.U, q, g);
          kernel::axpy(1.0, q, g);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double r = activate(p.activation, g[j]) - h[j];
          s += r * r;
        }
        stats[t * K + k].mean += std::sqrt(s);
      }
    }
  }
  if (S > 0)
    for (auto& st : stats) st.mean /= static_cast<double>(S);
  return stats;
}

void write_h1_csv(std::ostream& out, std::span<const double> trace) {
  out << "epoch,distance\n" << std::setprecision(17);
  for (std::size_t e = 0; e < trace.size(); ++e) out << e << ',' << trace[e] << '\n';
}

void write_h2_csv(std::ostream& out, std::span<const double> trace) {
  out << "t,ratio\n" << std::setprecision(17);
  for (std::size_t t = 0; t < trace.size(); ++t) out << t + 1 << ',' << trace[t] << '\n';
}

void write_eta_csv(std::ostream& out, const EtaReport& report) {
  out << "t,k,eta\n" << std::setprecision(17);
  for (const auto& e : report.entries) out << e.t << ',' << e.k << ',' << e.eta << '\n';
}

void write_contraction_csv(std::ostream& out, std::span<const ContractionStat> stats) {
  out << "t,k,min,mean,max,frac_lt_1\n" << std::setprecision(17);
  for (const auto& s : stats) {
    out << s.t << ',' << s.k << ',' << s.min << ',' << s.mean << ',' << s.max << ','
        << s.frac_below_one << '\n';
  }
}

}  // namespace ernn
