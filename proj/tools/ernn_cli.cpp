// ernn: generate toy data, train recurrent cells, evaluate and inspect them.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 divergence.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ernn/cells.hpp"
#include "ernn/checkpoint.hpp"
#include "ernn/data.hpp"
#include "ernn/diagnostics.hpp"
#include "ernn/errors.hpp"
#include "ernn/fixed_point.hpp"
#include "ernn/svg.hpp"
#include "ernn/train.hpp"

namespace fs = std::filesystem;
using namespace ernn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

// Shortest text that reads back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

fs::path with_extension(fs::path p, const std::string& ext) { return p.replace_extension(ext); }

// Reads a numeric CSV with a header row back into columns, for plotting.
std::vector<std::vector<double>> read_columns(const fs::path& path, std::vector<std::string>& names) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::stringstream hs(line);
  names.clear();
  for (std::string n; std::getline(hs, n, ',');) names.push_back(n);
  std::vector<std::vector<double>> cols(names.size());
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string field;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::getline(ls, field, ',');
      cols[c].push_back(field.empty() ? NAN : std::strtod(field.c_str(), nullptr));
    }
  }
  return cols;
}

// One chart from a CSV: column `x` against each listed y column.
void plot_csv(const fs::path& csv, const std::string& title, const std::string& x,
              const std::vector<std::string>& ys) {
  std::vector<std::string> names;
  const auto cols = read_columns(csv, names);
  auto index = [&](const std::string& n) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
  };
  svg::LineChart chart;
  chart.title = title;
  chart.x_label = x;
  chart.y_label = ys.size() == 1 ? ys.front() : "value";
  for (const auto& y : ys) chart.series.push_back({y, cols[index(x)], cols[index(y)]});
  write_text(with_extension(csv, ".svg"), svg::render(chart));
}

// Flat `key=value` files become leading `--key=value` arguments of the
// subcommand, so flags given on the command line take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2) return args;
  std::optional<std::string> file;
  std::vector<std::string> rest;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!file) return args;
  std::ifstream in(*file);
  if (!in) throw FormatError("cannot open config '" + *file + "'");
  std::vector<std::string> out{args[0], args[1]};
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config '" + *file + "' line " + std::to_string(no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    out.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// Options shared by every command that reads a dataset and may split it.
struct SplitOptions {
  std::string part = "all";
  double train_frac = 0.5;
  std::uint64_t split_seed = 1;

  void add(CLI::App* cmd, bool with_part) {
    if (with_part) {
      cmd->add_option("--split", part, "Which part of the data to use")
          ->check(CLI::IsMember({"all", "train", "test"}))
          ->capture_default_str();
    }
    cmd->add_option("--train-frac", train_frac, "Training fraction of the stratified split")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--split-seed", split_seed, "Seed of the stratified split")->capture_default_str();
  }

  SequenceDataset select(const SequenceDataset& ds) const {
    if (part == "all") return ds;
    auto parts = split(ds, train_frac, split_seed);
    return part == "train" ? std::move(parts.train) : std::move(parts.test);
  }
};

// ---------------------------------------------------------------------------

struct GenOptions {
  bool toy = false;
  std::size_t n = 10000;
  std::size_t T = 100;
  double sigma0 = 0.1;
  double sigma1 = 1.0;
  std::uint64_t seed = 1;
  std::string out;
  std::string manifest;
  bool svg = false;
};

int cmd_gen(const GenOptions& o) {
  if (!o.toy) throw UsageError("gen: only the --toy random-walk generator is available");
  if (o.n < 1 || o.T < 1) throw UsageError("gen: --n and --T must be positive");
  if (!(o.sigma0 > 0) || !(o.sigma1 > 0)) throw UsageError("gen: sigmas must be positive");
  const auto ds = gen_random_walks(o.n, o.T, o.sigma0, o.sigma1, o.seed);
  save_csv_sequences(o.out, ds);

  std::ostringstream m;
  m << "# toy 2-D random walks, X_t = X_{t-1} + sigma_c * N(0, I), X_0 = 0\n"
    << "# gaussians: xoshiro256** seeded by splitmix64, Box-Muller\n"
    << "# samples=" << ds.size() << " rows=" << ds.size() * ds.seq_len << "\n"
    << "toy=true\n"
    << "n=" << o.n << "\nT=" << o.T << "\nsigma0=" << shortest(o.sigma0)
    << "\nsigma1=" << shortest(o.sigma1)
    << "\nseed=" << o.seed << "\nout=" << o.out << "\n";
  write_text(o.manifest.empty() ? o.out + ".manifest" : o.manifest, m.str());

  if (o.svg) {
    svg::LineChart chart;
    chart.title = "first walk of each class";
    chart.x_label = "x";
    chart.y_label = "y";
    for (int c = 0; c < 2; ++c) {
      const auto s = ds.sequence(static_cast<std::size_t>(c) * o.n);
      svg::Series series{"class " + std::to_string(c), {0.0}, {0.0}};
      for (std::size_t t = 0; t < ds.seq_len; ++t) {
        series.x.push_back(s[2 * t]);
        series.y.push_back(s[2 * t + 1]);
      }
      chart.series.push_back(std::move(series));
    }
    write_text(with_extension(o.out, ".svg"), svg::render(chart));
  }
  std::cerr << "wrote " << ds.size() << " sequences to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string test;
  SplitOptions split;
  std::string cell = "ernn";
  std::string activation;
  std::size_t K = 1;
  std::size_t hidden = 10;
  double lr = 1e-2;
  double eta_init = 1e-2;
  std::size_t batch = 128;
  std::size_t epochs = 100;
  std::size_t half_period = 50;
  std::uint64_t seed = 1;
  double clip = 0.0;
  std::size_t threads = 0;
  std::string out;
  std::string records;
  std::string keep_checkpoints;
  bool svg = false;
  bool quiet = false;
};

int cmd_train(const TrainOptions& o) {
  // Reject inconsistent settings before touching any data.
  const CellKind kind = parse_cell_kind(o.cell);
  const Activation act = o.activation.empty() ? default_activation(kind) : parse_activation(o.activation);
  if (kind == CellKind::fastrnn && o.K != 1) {
    throw UsageError("train: fastrnn is the K = 1, U = 0 special case; got --K " + std::to_string(o.K));
  }
  if (kind == CellKind::vanilla_rnn && o.K != 1) {
    throw UsageError("train: the vanilla rnn cell has no inner steps; use --K 1");
  }
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.lr_half_period = o.half_period;
  cfg.seed = o.seed;
  cfg.K = o.K;
  cfg.hidden_dim = o.hidden;
  cfg.clip_norm = o.clip;
  cfg.threads = o.threads;
  cfg.keep_checkpoints = !o.keep_checkpoints.empty();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const auto all = load_csv_sequences(o.data);
  SequenceDataset train_set, eval_set;
  if (!o.test.empty()) {
    train_set = all;
    eval_set = load_csv_sequences(o.test, CsvSchema{all.feature_dim, std::nullopt});
  } else {
    auto parts = split(all, o.split.train_frac, o.split.split_seed);
    train_set = std::move(parts.train);
    eval_set = std::move(parts.test);
  }
  const std::size_t classes = std::max(train_set.class_count, eval_set.class_count);
  const ModelShape shape{o.hidden, train_set.feature_dim, train_set.seq_len, o.K, classes};
  // Initialization draws come from a stream distinct from the shuffling one.
  const auto init = ErnnParams::initialize(kind, act, shape, o.seed + 1, o.eta_init);

  auto progress = [&](const EpochRecord& r) {
    if (o.quiet) return;
    std::cerr << "epoch " << r.epoch << " lr=" << r.lr << " loss=" << r.train_loss
              << " test_acc=" << r.test_acc << " (" << std::lround(r.wall_ms) << " ms)\n";
  };
  const auto result = train(init, train_set, &eval_set, cfg, progress);

  save_checkpoint(o.out, result.params);
  const fs::path records = o.records.empty() ? fs::path(o.out + ".records.csv") : fs::path(o.records);
  {
    auto out = open_out(records);
    write_records_csv(out, result.records);
  }
  if (!o.keep_checkpoints.empty()) {
    fs::create_directories(o.keep_checkpoints);
    for (std::size_t e = 0; e < result.checkpoints.size(); ++e) {
      std::ostringstream name;
      name << "epoch_" << std::setw(4) << std::setfill('0') << e << ".ckpt";
      save_checkpoint(fs::path(o.keep_checkpoints) / name.str(), result.checkpoints.at(e));
    }
  }
  if (o.svg) plot_csv(records, "training (" + o.cell + ")", "epoch", {"train_loss", "test_acc"});

  if (result.diverged) {
    std::cerr << "training diverged: " << result.message << "\n";
    return kExitDiverged;
  }
  if (!result.records.empty()) {
    std::cout << "test_acc=" << result.records.back().test_acc << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string ckpt;
  std::string data;
  SplitOptions split;
  std::size_t threads = 0;
};

int cmd_eval(const EvalOptions& o) {
  const auto p = load_checkpoint(o.ckpt);
  const auto ds = o.split.select(load_csv_sequences(o.data));
  if (ds.seq_len != p.eta.rows() || ds.feature_dim != p.W.cols()) {
    throw FormatError("eval: dataset shape (T=" + std::to_string(ds.seq_len) +
                      ", d=" + std::to_string(ds.feature_dim) + ") does not match the checkpoint");
  }
  std::cout << "accuracy=" << std::setprecision(17) << evaluate(p, ds, o.threads) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseOptions {
  std::string ckpt;
  std::string data;
  SplitOptions split;
  std::string checkpoints;
  std::string out_dir = ".";
  std::size_t samples = 200;
  bool svg = false;
};

int cmd_diagnose(const DiagnoseOptions& o) {
  const auto p = load_checkpoint(o.ckpt);
  const auto ds = o.split.select(load_csv_sequences(o.data));
  if (ds.seq_len != p.eta.rows() || ds.feature_dim != p.W.cols()) {
    throw FormatError("diagnose: dataset shape does not match the checkpoint");
  }
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);

  if (!o.checkpoints.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.checkpoints)) {
      if (e.path().extension() == ".ckpt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ErnnParams> cps;
    for (const auto& f : files) cps.push_back(load_checkpoint(f));
    if (cps.size() < 2) throw FormatError("diagnose: need at least two per-epoch checkpoints");
    auto out = open_out(dir / "h1_trace.csv");
    write_h1_csv(out, model_distance_trace(cps));
    out.close();
    if (o.svg) plot_csv(dir / "h1_trace.csv", "distance to final model", "epoch", {"distance"});
  }

  {
    auto out = open_out(dir / "h2_trace.csv");
    write_h2_csv(out, discriminability_trace(p, ds));
  }
  if (o.svg) plot_csv(dir / "h2_trace.csv", "intra/inter-class distance", "t", {"ratio"});

  if (p.cell_kind != CellKind::vanilla_rnn) {
    const auto report = eta_report(p);
    {
      auto out = open_out(dir / "eta.csv");
      write_eta_csv(out, report);
    }
    for (std::size_t k = 0; k < report.fits.size(); ++k) {
      std::cerr << "eta fit k=" << k + 1 << ": slope=" << report.fits[k].slope
                << " intercept=" << report.fits[k].intercept << "\n";
    }
    if (o.svg) {
      svg::LineChart chart{"step sizes", "t", "eta", {}, 640, 400};
      const std::size_t K = p.eta.cols();
      for (std::size_t k = 0; k < K; ++k) {
        svg::Series s{"k=" + std::to_string(k + 1), {}, {}};
        for (std::size_t t = 0; t < p.eta.rows(); ++t) {
          s.x.push_back(static_cast<double>(t + 1));
          s.y.push_back(p.eta(t, k));
        }
        chart.series.push_back(std::move(s));
      }
      write_text(dir / "eta.svg", svg::render(chart));
    }
    {
      auto out = open_out(dir / "contraction.csv");
      write_contraction_csv(out, contraction_report(p, ds, std::min(o.samples, ds.size())));
    }
    if (o.svg) plot_csv(dir / "contraction.csv", "contraction norm", "t", {"min", "mean", "max"});
  }
  std::cerr << "diagnostics written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct PhiOptions {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t points = 601;
  double tol = 1e-12;
  std::string out = "-";
  bool svg = false;
};

int cmd_phi(const PhiOptions& o) {
  if (o.points < 2 || !(o.hi > o.lo)) throw UsageError("phi: need --points >= 2 and --hi > --lo");
  if (!(o.tol > 0)) throw UsageError("phi: --tol must be positive");
  if (o.svg && o.out == "-") throw UsageError("phi: --svg needs --out FILE");
  const auto alphas = linspace(o.lo, o.hi, o.points);
  if (o.out == "-") {
    write_phi_curve(std::cout, alphas, o.tol);
    return 0;
  }
  {
    auto out = open_out(o.out);
    write_phi_curve(out, alphas, o.tol);
  }
  if (o.svg) plot_csv(o.out, "equilibrium of h = tanh(h + alpha)", "alpha", {"phi", "dphi"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ernn: recurrent cells with inner fixed-point steps; data, training and diagnostics"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  auto config_opt = [](CLI::App* cmd) {
    cmd->add_option("--config", "Flat key=value file mirroring the flags; flags override it");
  };

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate the two-class random-walk dataset");
  g->add_flag("--toy", gen.toy, "Toy 2-D random walks (the only generator)");
  g->add_option("--n", gen.n, "Walks per class")->capture_default_str();
  g->add_option("--T", gen.T, "Steps per walk")->capture_default_str();
  g->add_option("--sigma0", gen.sigma0, "Step std of class 0")->capture_default_str();
  g->add_option("--sigma1", gen.sigma1, "Step std of class 1")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out, "Sequence CSV to write")->required();
  g->add_option("--manifest", gen.manifest, "Manifest path (default: OUT.manifest)");
  g->add_flag("--svg", gen.svg, "Also plot the first walk of each class");
  config_opt(g);

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a cell on a sequence CSV");
  t->add_option("--data", tr.data, "Sequence CSV")->required();
  t->add_option("--test", tr.test, "Separate evaluation CSV (otherwise DATA is split)");
  tr.split.add(t, false);
  t->add_option("--cell", tr.cell)
      ->check(CLI::IsMember({"rnn", "ernn-toy", "ernn", "fastrnn"}))
      ->capture_default_str();
  t->add_option("--activation", tr.activation, "tanh, relu or identity (default depends on cell)")
      ->check(CLI::IsMember({"tanh", "relu", "identity", "linear"}));
  t->add_option("--K", tr.K, "Inner steps per timestep")->capture_default_str();
  t->add_option("--hidden", tr.hidden)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--eta-init", tr.eta_init, "Initial step size for every (t, k)")->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--half-period", tr.half_period, "Epochs between learning-rate halvings")
      ->capture_default_str();
  t->add_option("--seed", tr.seed, "Shuffling seed; initialization uses SEED+1")->capture_default_str();
  t->add_option("--clip", tr.clip, "Global gradient-norm clip, 0 for none")->capture_default_str();
  t->add_option("--threads", tr.threads, "Worker threads, 0 for all cores")->capture_default_str();
  t->add_option("--out", tr.out, "Final checkpoint")->required();
  t->add_option("--records", tr.records, "Per-epoch CSV (default: OUT.records.csv)");
  t->add_option("--keep-checkpoints", tr.keep_checkpoints, "Directory for per-epoch checkpoints");
  t->add_flag("--svg", tr.svg, "Plot the records CSV");
  t->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");
  config_opt(t);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt)->required();
  e->add_option("--data", ev.data)->required();
  ev.split.add(e, true);
  e->add_option("--threads", ev.threads)->capture_default_str();
  config_opt(e);

  DiagnoseOptions dg;
  auto* d = app.add_subcommand("diagnose", "Stability, discriminability, step-size and contraction reports");
  d->add_option("--ckpt", dg.ckpt)->required();
  d->add_option("--data", dg.data)->required();
  dg.split.add(d, true);
  d->add_option("--checkpoints", dg.checkpoints, "Per-epoch checkpoint directory (enables h1_trace.csv)");
  d->add_option("--out-dir", dg.out_dir)->capture_default_str();
  d->add_option("--samples", dg.samples, "Samples used for the contraction report")->capture_default_str();
  d->add_flag("--svg", dg.svg, "Plot every CSV written");
  config_opt(d);

  PhiOptions ph;
  auto* f = app.add_subcommand("phi", "Sweep the scalar equilibrium map and its derivative");
  f->add_option("--lo", ph.lo)->capture_default_str();
  f->add_option("--hi", ph.hi)->capture_default_str();
  f->add_option("--points", ph.points)->capture_default_str();
  f->add_option("--tol", ph.tol)->capture_default_str();
  f->add_option("--out", ph.out, "CSV path, - for stdout")->capture_default_str();
  f->add_flag("--svg", ph.svg, "Plot the curve next to the CSV");
  config_opt(f);

  try {
    const auto args = expand_config(argc, argv);
    std::vector<const char*> cargs;
    for (const auto& a : args) cargs.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& err) {
      const int code = app.exit(err);
      return code == 0 ? 0 : kExitUsage;
    }
    if (g->parsed()) return cmd_gen(gen);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (d->parsed()) return cmd_diagnose(dg);
    if (f->parsed()) return cmd_phi(ph);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& err) {
    std::cerr << "numerical divergence: " << err.what() << "\n";
    return kExitDiverged;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const DimensionError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
