// alicfm: config-driven experiment pipeline.
//
//   alicfm <verb> <config.toml> [--set section.key=value]...
//
// Verbs: gen-data, train-ali, train-cfm, rollout-eval, plot, run-all.
// Artifacts live under the config's output_dir (resolved against $ALICFM_OUT
// when relative): dataset.csv, ali.ckpt, ali_log.csv, cfm.ckpt, cfm_log.csv,
// trajectories.csv, emd.csv, plot.svg.
//
// Every verb is a pure function of (config, input files, seed): re-running
// overwrites its outputs byte-identically. Exit codes: 0 success, 2 config
// error, 3 numerical divergence, 4 I/O.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ali/checkpoint.hpp"
#include "ali/config.hpp"
#include "ali/svg.hpp"

namespace fs = std::filesystem;
using namespace ali;

namespace {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-stage substreams of the root seed. Streams that shape reconstructed
// state (coupling plan, metric spec, data draws) are separate from the
// training streams, so a resumed run rebuilds them identically while the
// training stream continues from the checkpoint.
enum : std::uint64_t {
  kStreamData = 1,
  kStreamCoupling = 2,
  kStreamAli = 3,
  kStreamCfm = 4,
  kStreamFreshRef = 5,
  kStreamLand = 6,
};

Rng stream(const ExperimentConfig& cfg, std::uint64_t which) {
  Rng root(cfg.seed);
  return root.fork(which);
}

std::uint64_t derived_seed(const ExperimentConfig& cfg, std::uint64_t which) {
  return stream(cfg, which).next_u64();
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path dir = cfg.output_dir;
  if (dir.is_relative())
    if (const char* root = std::getenv("ALICFM_OUT")) dir = fs::path(root) / dir;
  return dir;
}

fs::path artifact(const ExperimentConfig& cfg, const char* name) { return out_dir(cfg) / name; }

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out_dir(cfg), ec);
  if (ec) throw IoError("cannot create output directory " + out_dir(cfg).string() + ": " + ec.message());
}

// Library file errors become exit code 4.
template <class F>
auto io(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

MarginalDataset generate_dataset(const ExperimentConfig& cfg) {
  if (cfg.data.generator == "knot") {
    KnotSpec spec;
    spec.marginals = cfg.data.marginals;
    spec.samples = cfg.data.samples;
    spec.sigma = cfg.data.sigma;
    spec.seed = derived_seed(cfg, kStreamData);
    return gen_knot(spec);
  }
  return io([&] { return read_dataset_csv(cfg.data.path); });
}

// dataset.csv always holds original coordinates; commands that train or roll
// out normalise after reading, recomputing the same min-max record each time.
MarginalDataset load_training_dataset(const ExperimentConfig& cfg) {
  const fs::path p = artifact(cfg, "dataset.csv");
  if (!fs::exists(p)) throw IoError(p.string() + " is missing, run gen-data first");
  MarginalDataset ds = io([&] { return read_dataset_csv(p.string()); });
  return cfg.data.normalise ? normalise(ds) : ds;
}

// Incremental log writer: a fresh run truncates and writes the header, a
// resumed run appends, so the file always matches the checkpoint iteration.
class LogSink {
 public:
  LogSink(fs::path path, const char* header, bool resume)
      : path_(std::move(path)), header_(header), fresh_(!resume) {}

  void row(const std::string& line) { pending_ += line; }

  void flush() {
    std::ofstream out(path_, fresh_ ? std::ios::trunc : std::ios::app);
    if (!out) throw IoError("cannot open " + path_.string());
    if (fresh_) out << header_ << "\n";
    out << pending_;
    if (!out) throw IoError("write failed for " + path_.string());
    fresh_ = false;
    pending_.clear();
  }

 private:
  fs::path path_;
  std::string header_;
  bool fresh_;
  std::string pending_;
};

int cmd_gen_data(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const MarginalDataset ds = generate_dataset(cfg);
  const fs::path p = artifact(cfg, "dataset.csv");
  io([&] { write_dataset_csv(ds, p.string()); });
  std::size_t rows = 0;
  for (const Batch& b : ds.batches) rows += b.size();
  std::cout << p.string() << ": " << rows << " rows, " << ds.size() << " marginals, dim "
            << ds.dim() << "\n";
  return 0;
}

int cmd_train_ali(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(cfg);
  const MarginalDataset ds = load_training_dataset(cfg);
  const std::size_t d = ds.dim();
  const AliTrainConfig& tc = cfg.ali;

  // the metric spec and coupling plan come from their own substreams, so a
  // resumed run reconstructs exactly what the fresh run used
  LandMetricSpec land_local;
  const LandMetricSpec* land = nullptr;
  if (tc.reg.norm == RegNorm::Land) {
    std::size_t total = 0;
    for (const Batch& b : ds.batches) total += b.size();
    Tensor pts({total, d});
    std::vector<double> times;
    times.reserve(total);
    std::size_t r = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t s = 0; s < ds.batches[i].size(); ++s, ++r) {
        for (std::size_t c = 0; c < d; ++c) pts.at(r, c) = ds.batches[i].points.at(s, c);
        times.push_back(ds.times[i]);
      }
    Rng lrng = stream(cfg, kStreamLand);
    land_local = make_land_spec(pts, times, 0.4, 0.4, 1e-3, lrng);
    land = &land_local;
  }
  Rng crng = stream(cfg, kStreamCoupling);
  const CouplingSource src =
      make_coupling_source(ds.batches.front(), ds.batches.back(), tc.coupling, &crng);

  const fs::path ckpt = artifact(cfg, "ali.ckpt");
  AliCheckpoint st;
  if (cfg.ali_resume) {
    if (!fs::exists(ckpt)) throw IoError(ckpt.string() + " is missing, cannot resume");
    st = io([&] { return load_ali_checkpoint(ckpt.string()); });
    if (st.gen.dim() != d)
      throw std::invalid_argument("train-ali: checkpoint dimension " + std::to_string(st.gen.dim()) +
                                  " does not match dataset dimension " + std::to_string(d));
  } else {
    Rng rng = stream(cfg, kStreamAli);
    st.gen = make_generator(d, tc.gen_hidden, Activation::ELU, rng, tc.time_noise_std);
    st.disc = make_discriminator(d, tc.disc_hidden, Activation::ELU, rng);
    st.opt_gen.lr = tc.lr_gen;
    st.opt_disc.lr = tc.lr_disc;
    st.rng = rng;
    pretrain_ali(st.gen, ds, src, tc, st.opt_gen, st.rng, land);
  }

  LogSink log(artifact(cfg, "ali_log.csv"), "iter,t_i,loss_disc,loss_gen,loss_reg", cfg.ali_resume);
  bool diverged = false;
  std::string why;
  AliStepRecord last;
  const std::uint64_t first = st.iteration + 1;
  for (std::uint64_t it = first; it <= tc.iterations; ++it) {
    AliStepRecord rec;
    try {
      rec = ali_train_step(st.gen, st.disc, ds, src, tc, st.opt_gen, st.opt_disc, st.rng, land);
    } catch (const std::runtime_error& e) {
      diverged = true;
      why = e.what();
      break;
    }
    rec.iter = it;
    st.iteration = it;
    last = rec;
    log.row(std::to_string(it) + ',' + detail::format_g17(rec.t_i) + ',' +
            detail::format_g17(rec.loss_disc) + ',' + detail::format_g17(rec.loss_gen) + ',' +
            detail::format_g17(rec.loss_reg) + "\n");
    if (rec.gen_norm > kDivergenceNorm) {
      diverged = true;
      why = "generator output norm " + short_num(rec.gen_norm) + " above the divergence bound";
      break;
    }
    if (cfg.checkpoint_every != 0 && it % cfg.checkpoint_every == 0 && it < tc.iterations) {
      io([&] { save_ali_checkpoint(ckpt.string(), st); });
      log.flush();
    }
  }
  io([&] { save_ali_checkpoint(ckpt.string(), st); });
  log.flush();
  if (diverged)
    throw DivergedError("train-ali: " + why + " at iteration " + std::to_string(st.iteration + 1) +
                        "; partial checkpoint saved");
  std::cerr << "[alicfm] train-ali: " << st.iteration << " iterations in "
            << short_num(seconds_since(t0)) << " s\n";
  std::cout << ckpt.string() << ": " << st.iteration << " iterations";
  if (st.iteration >= first)
    std::cout << ", losses disc=" << short_num(last.loss_disc) << " gen="
              << short_num(last.loss_gen) << " reg=" << short_num(last.loss_reg);
  std::cout << "\n";
  return 0;
}

PathSampler make_sampler(const ExperimentConfig& cfg, const MarginalDataset& ds) {
  switch (cfg.interpolant) {
    case PathFamily::Linear: {
      Rng crng = stream(cfg, kStreamCoupling);
      return linear_path_sampler(
          make_coupling_source(ds.batches.front(), ds.batches.back(), cfg.ali.coupling, &crng));
    }
    case PathFamily::Piecewise:
      return piecewise_path_sampler(ds);
    case PathFamily::Spline:
      return spline_path_sampler(ds);
    case PathFamily::Ali: {
      const fs::path ckpt = fs::path(out_dir(cfg)) / "ali.ckpt";
      if (!fs::exists(ckpt))
        throw IoError(ckpt.string() + " is missing, run train-ali before train-cfm");
      AliCheckpoint st = io([&] { return load_ali_checkpoint(ckpt.string()); });
      if (st.gen.dim() != ds.dim())
        throw std::invalid_argument("train-cfm: interpolant dimension " +
                                    std::to_string(st.gen.dim()) + " does not match dataset " +
                                    std::to_string(ds.dim()));
      Rng crng = stream(cfg, kStreamCoupling);
      return ali_path_sampler(std::move(st.gen),
                              make_coupling_source(ds.batches.front(), ds.batches.back(),
                                                   cfg.ali.coupling, &crng));
    }
  }
  throw std::invalid_argument("train-cfm: unknown interpolant");
}

int cmd_train_cfm(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(cfg);
  const MarginalDataset ds = load_training_dataset(cfg);
  const PathSampler sampler = make_sampler(cfg, ds);
  const CfmTrainConfig& cc = cfg.cfm;

  const fs::path ckpt = artifact(cfg, "cfm.ckpt");
  CfmCheckpoint st;
  if (cfg.cfm_resume) {
    if (!fs::exists(ckpt)) throw IoError(ckpt.string() + " is missing, cannot resume");
    st = io([&] { return load_cfm_checkpoint(ckpt.string()); });
    if (st.field.dim() != ds.dim())
      throw std::invalid_argument("train-cfm: checkpoint dimension " +
                                  std::to_string(st.field.dim()) + " does not match dataset " +
                                  std::to_string(ds.dim()));
  } else {
    Rng rng = stream(cfg, kStreamCfm);
    st.field = make_field(ds.dim(), cc.hidden, Activation::ELU, rng);
    st.opt.lr = cc.lr;
    st.rng = rng;
  }

  LogSink log(artifact(cfg, "cfm_log.csv"), "iter,loss", cfg.cfm_resume);
  bool diverged = false;
  std::string why;
  double last_loss = 0.0;
  const std::uint64_t first = st.iteration + 1;
  for (std::uint64_t it = first; it <= cc.iterations; ++it) {
    CfmStepRecord rec;
    try {
      rec = cfm_train_step(st.field, sampler, cc.batch, st.opt, st.rng);
    } catch (const std::runtime_error& e) {
      diverged = true;
      why = e.what();
      break;
    }
    st.iteration = it;
    last_loss = rec.loss;
    log.row(std::to_string(it) + ',' + detail::format_g17(rec.loss) + "\n");
    if (cfg.checkpoint_every != 0 && it % cfg.checkpoint_every == 0 && it < cc.iterations) {
      io([&] { save_cfm_checkpoint(ckpt.string(), st); });
      log.flush();
    }
  }
  io([&] { save_cfm_checkpoint(ckpt.string(), st); });
  log.flush();
  if (diverged)
    throw DivergedError("train-cfm: " + why + " at iteration " + std::to_string(st.iteration + 1) +
                        "; partial checkpoint saved");
  std::cerr << "[alicfm] train-cfm: " << st.iteration << " iterations in "
            << short_num(seconds_since(t0)) << " s\n";
  std::cout << ckpt.string() << ": " << st.iteration << " iterations";
  if (st.iteration >= first) std::cout << ", loss " << short_num(last_loss);
  std::cout << "\n";
  return 0;
}

int cmd_rollout_eval(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_out_dir(cfg);
  const MarginalDataset ds = load_training_dataset(cfg);
  const fs::path ckpt = artifact(cfg, "cfm.ckpt");
  if (!fs::exists(ckpt))
    throw IoError(ckpt.string() + " is missing, run train-cfm before rollout-eval");
  const CfmCheckpoint st = io([&] { return load_cfm_checkpoint(ckpt.string()); });
  if (st.field.dim() != ds.dim())
    throw std::invalid_argument("rollout-eval: field dimension " + std::to_string(st.field.dim()) +
                                " does not match dataset " + std::to_string(ds.dim()));

  // scoring reference: the training marginals, or a fresh draw of the same
  // generator mapped into the training coordinates
  MarginalDataset ref = ds;
  if (cfg.eval.fresh_reference) {
    KnotSpec spec;
    spec.marginals = cfg.data.marginals;
    spec.samples = cfg.data.samples;
    spec.sigma = cfg.data.sigma;
    spec.seed = derived_seed(cfg, kStreamFreshRef);
    MarginalDataset fresh = gen_knot(spec);
    if (!ds.norm.empty()) {
      for (Batch& b : fresh.batches) apply_norm(b.points, ds.norm);
      fresh.norm = ds.norm;
    }
    ref = std::move(fresh);
  }

  EvalProtocolConfig ec;
  ec.mode = cfg.eval.mode;
  ec.solver = cfg.rollout.solver;
  ec.steps_per_unit = cfg.eval.steps_per_unit;
  ec.cost = cfg.eval.cost;
  const EvalResult res = eval_protocol(st.field, ref, ec);
  io([&] { write_emd_table_csv(res.table, artifact(cfg, "emd.csv").string()); });

  // full-span trajectories from the first marginal, reported in original
  // coordinates so they overlay the raw data
  TrajectorySet traj = rollout(st.field, ds.batches.front().points, cfg.rollout);
  if (!ds.norm.empty())
    for (Tensor& s : traj.states) apply_denorm(s, ds.norm);
  io([&] { write_trajectories_csv(traj, artifact(cfg, "trajectories.csv").string()); });

  std::size_t traj_bad = 0;
  for (const bool b : traj.divergent) traj_bad += b ? 1 : 0;
  std::cerr << "[alicfm] rollout-eval: " << short_num(seconds_since(t0)) << " s\n";
  std::cout << artifact(cfg, "emd.csv").string() << ": mean EMD " << short_num(res.table.mean)
            << " over " << res.table.values.size() << " stamps (cost "
            << emd_cost_name(ec.cost) << ", mode " << eval_mode_name(ec.mode) << ")\n";
  std::cout << artifact(cfg, "trajectories.csv").string() << ": " << traj.size()
            << " trajectories, " << traj.times.size() << " recorded times\n";
  if (res.divergent_rows > 0 || traj_bad > 0)
    throw DivergedError("rollout-eval: " + std::to_string(res.divergent_rows) +
                        " divergent evaluation rows, " + std::to_string(traj_bad) +
                        " divergent trajectories; outputs written");
  return 0;
}

int cmd_plot(const ExperimentConfig& cfg) {
  ensure_out_dir(cfg);
  const fs::path dsp = artifact(cfg, "dataset.csv");
  if (!fs::exists(dsp)) throw IoError(dsp.string() + " is missing, run gen-data first");
  const MarginalDataset ds = io([&] { return read_dataset_csv(dsp.string()); });

  TrajectorySet traj;
  const fs::path tp = artifact(cfg, "trajectories.csv");
  if (fs::exists(tp)) {
    try {
      traj = read_trajectories_csv(tp.string());
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      const bool empty_file = msg.find("no data rows") != std::string::npos ||
                              msg.find("empty file") != std::string::npos;
      if (!empty_file) throw IoError(msg);
    }
  }

  const fs::path svgp = artifact(cfg, "plot.svg");
  io([&] { write_plot_svg(ds, traj, svgp.string()); });
  std::size_t rows = 0;
  for (const Batch& b : ds.batches) rows += b.size();
  std::cout << svgp.string() << ": " << rows << " points, " << traj.size() << " trajectories\n";
  return 0;
}

int cmd_run_all(const ExperimentConfig& cfg) {
  cmd_gen_data(cfg);
  if (cfg.interpolant == PathFamily::Ali)
    cmd_train_ali(cfg);
  else
    std::cerr << "[alicfm] run-all: interpolant is " << path_family_name(cfg.interpolant)
              << ", skipping train-ali\n";
  cmd_train_cfm(cfg);
  cmd_rollout_eval(cfg);
  const MarginalDataset ds = io([&] {
    return read_dataset_csv(artifact(cfg, "dataset.csv").string());
  });
  if (ds.dim() == 2)
    cmd_plot(cfg);
  else
    std::cerr << "[alicfm] run-all: data is " << ds.dim() << "D, skipping plot\n";
  return 0;
}

int usage(std::ostream& os) {
  os << "usage: alicfm <verb> <config.toml> [--set section.key=value]...\n"
        "\n"
        "verbs:\n"
        "  gen-data      write dataset.csv from the configured generator or source file\n"
        "  train-ali     train the adversarial interpolant, write ali.ckpt + ali_log.csv\n"
        "  train-cfm     train the velocity field, write cfm.ckpt + cfm_log.csv\n"
        "  rollout-eval  integrate the field, write trajectories.csv + emd.csv\n"
        "  plot          render dataset and trajectories to plot.svg (2D only)\n"
        "  run-all       the full pipeline in order\n"
        "\n"
        "Artifacts go to the config's output_dir, resolved against $ALICFM_OUT\n"
        "when relative. Exit codes: 0 success, 2 config error, 3 numerical\n"
        "divergence, 4 I/O.\n";
  return 2;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  TomlDoc doc = parse_toml(buf.str());
  for (const std::string& o : overrides) apply_set_override(doc, o);
  ExperimentConfig cfg = parse_experiment_config(doc);
  validate_input_files(cfg);
  return cfg;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) return usage(std::cerr);
  if (args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
    usage(std::cout);
    return 0;
  }

  const std::string verb = args[0];
  if (args.size() < 2) {
    std::cerr << "alicfm: " << verb << " needs a config file\n";
    return usage(std::cerr);
  }
  const std::string config_path = args[1];
  std::vector<std::string> overrides;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--set" && i + 1 < args.size()) {
      overrides.push_back(args[++i]);
    } else {
      std::cerr << "alicfm: unexpected argument '" << args[i] << "'\n";
      return usage(std::cerr);
    }
  }

  const ExperimentConfig cfg = load_config(config_path, overrides);
  if (verb == "gen-data") return cmd_gen_data(cfg);
  if (verb == "train-ali") return cmd_train_ali(cfg);
  if (verb == "train-cfm") return cmd_train_cfm(cfg);
  if (verb == "rollout-eval") return cmd_rollout_eval(cfg);
  if (verb == "plot") return cmd_plot(cfg);
  if (verb == "run-all") return cmd_run_all(cfg);
  std::cerr << "alicfm: unknown verb '" << verb << "'\n";
  return usage(std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "alicfm: " << e.what() << "\n";
    return 2;
  } catch (const DivergedError& e) {
    std::cerr << "alicfm: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "alicfm: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "alicfm: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "alicfm: unexpected error: " << e.what() << "\n";
    return 1;
  }
}
