#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ali/ali_train.hpp"
#include "ali/autodiff.hpp"
#include "ali/coupling.hpp"
#include "ali/eval_data.hpp"
#include "ali/interpolants.hpp"
#include "ali/nn.hpp"
#include "ali/rng.hpp"

namespace ali {

// u(x, t): velocity net over (x | t).
struct VectorField {
  Mlp net;

  std::size_t dim() const { return net.out_width(); }

  void validate() const {
    if (net.in_width() != net.out_width() + 1)
      throw std::invalid_argument("VectorField: net must map (x|t) to a velocity, got in=" +
                                  std::to_string(net.in_width()) +
                                  " out=" + std::to_string(net.out_width()));
  }
};

inline VectorField make_field(std::size_t d, std::vector<std::size_t> hidden, Activation act,
                              Rng& rng) {
  std::vector<std::size_t> widths;
  widths.reserve(hidden.size() + 2);
  widths.push_back(d + 1);
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(d);
  VectorField u{make_mlp(widths, act, rng)};
  u.validate();
  return u;
}

inline Tensor field_eval(const VectorField& u, const Tensor& x, const Tensor& t_col) {
  if (t_col.rows() != x.rows() || t_col.cols() != 1)
    throw std::invalid_argument("field_eval: time column must be rows x 1");
  return forward_plain(u.net, detail::with_time_col(x, t_col));
}

inline Tensor field_eval(const VectorField& u, const Tensor& x, double t) {
  return field_eval(u, x, Tensor({x.rows(), 1}, t));
}

// One minibatch of conditional-path supervision: positions x on the path at
// times t, with the path's own velocity u as the regression target.
struct PathSample {
  Tensor x;  // m x d
  Tensor t;  // m x 1
  Tensor u;  // m x d
};

using PathSampler = std::function<PathSample(std::size_t, Rng&)>;

// Paths from a frozen interpolant: positions from G, targets from dG/dt.
inline PathSampler ali_path_sampler(AliGenerator gen, CouplingSource src) {
  gen.validate();
  return [gen = std::move(gen), src = std::move(src)](std::size_t m, Rng& rng) {
    PathSample s;
    Tensor x0, x1;
    draw_pairs(src, m, rng, x0, x1);
    s.t = Tensor({m, 1});
    for (std::size_t i = 0; i < m; ++i) s.t[i] = rng.uniform();
    s.x = ali_eval_rows(gen, x0, x1, s.t);
    s.u = ali_dt_rows(gen, x0, x1, s.t);
    return s;
  };
}

// Straight chords of the coupling; the classic OT-CFM target when the source
// carries an optimal plan.
inline PathSampler linear_path_sampler(CouplingSource src) {
  return [src = std::move(src)](std::size_t m, Rng& rng) {
    PathSample s;
    Tensor x0, x1;
    draw_pairs(src, m, rng, x0, x1);
    const std::size_t d = x0.cols();
    s.t = Tensor({m, 1});
    s.x = Tensor({m, d});
    s.u = Tensor({m, d});
    for (std::size_t i = 0; i < m; ++i) {
      const double t = rng.uniform();
      s.t[i] = t;
      for (std::size_t c = 0; c < d; ++c) {
        s.x.at(i, c) = (1.0 - t) * x0.at(i, c) + t * x1.at(i, c);
        s.u.at(i, c) = x1.at(i, c) - x0.at(i, c);
      }
    }
    return s;
  };
}

namespace detail {

// Chained tuples through every marginal, all marginals the same size so the
// tuple indices refer to the caller's batches directly.
inline std::vector<std::vector<std::size_t>> chain_tuples(const MarginalDataset& ds,
                                                          const char* who) {
  validate_dataset(ds, who);
  const std::size_t n = ds.batches.front().size();
  for (const Batch& b : ds.batches)
    if (b.size() != n)
      throw std::invalid_argument(std::string(who) + ": marginals must share one sample count");
  return multi_marginal_chain(ds.batches);
}

inline std::size_t segment_of(const std::vector<double>& times, double t) {
  std::size_t j = 0;
  while (j + 2 < times.size() && t > times[j + 1]) ++j;
  return j;
}

}  // namespace detail

// Piecewise-linear path through one chained tuple per draw; the velocity is
// the segment slope, discontinuous at every interior knot by construction.
inline PathSampler piecewise_path_sampler(const MarginalDataset& ds) {
  const auto tuples = detail::chain_tuples(ds, "piecewise_path_sampler");
  const std::vector<double> times = ds.times;
  std::vector<Tensor> knots;  // per tuple: K x d
  knots.reserve(tuples.size());
  const std::size_t k = ds.size(), d = ds.dim();
  for (const auto& tup : tuples) {
    Tensor pts({k, d});
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < d; ++c) pts.at(j, c) = ds.batches[j].points.at(tup[j], c);
    knots.push_back(std::move(pts));
  }
  return [times, knots, d](std::size_t m, Rng& rng) {
    PathSample s;
    s.t = Tensor({m, 1});
    s.x = Tensor({m, d});
    s.u = Tensor({m, d});
    for (std::size_t i = 0; i < m; ++i) {
      const Tensor& pts = knots[rng.uniform_index(knots.size())];
      const double t = rng.uniform();
      s.t[i] = t;
      const std::size_t j = detail::segment_of(times, t);
      const double h = times[j + 1] - times[j];
      const double a = (t - times[j]) / h;
      for (std::size_t c = 0; c < d; ++c) {
        const double y0 = pts.at(j, c), y1 = pts.at(j + 1, c);
        s.x.at(i, c) = (1.0 - a) * y0 + a * y1;
        s.u.at(i, c) = (y1 - y0) / h;
      }
    }
    return s;
  };
}

// Natural cubic spline through each chained tuple, fitted once up front.
inline PathSampler spline_path_sampler(const MarginalDataset& ds) {
  const auto tuples = detail::chain_tuples(ds, "spline_path_sampler");
  std::vector<SplineInterpolant> splines;
  splines.reserve(tuples.size());
  const std::size_t k = ds.size(), d = ds.dim();
  for (const auto& tup : tuples) {
    Tensor pts({k, d});
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < d; ++c) pts.at(j, c) = ds.batches[j].points.at(tup[j], c);
    splines.push_back(spline_fit(pts, ds.times));
  }
  return [splines, d](std::size_t m, Rng& rng) {
    PathSample s;
    s.t = Tensor({m, 1});
    s.x = Tensor({m, d});
    s.u = Tensor({m, d});
    for (std::size_t i = 0; i < m; ++i) {
      const SplineInterpolant& sp = splines[rng.uniform_index(splines.size())];
      const double t = rng.uniform();
      s.t[i] = t;
      const Tensor x = spline_eval(sp, t);
      const Tensor u = spline_deriv(sp, t);
      for (std::size_t c = 0; c < d; ++c) {
        s.x.at(i, c) = x.at(0, c);
        s.u.at(i, c) = u.at(0, c);
      }
    }
    return s;
  };
}

// Mean squared residual between the field and a path sample's velocities.
inline double cfm_residual(const VectorField& field, const PathSample& s) {
  if (s.x.rows() != s.u.rows() || s.x.cols() != s.u.cols())
    throw std::invalid_argument("cfm_residual: sample shape mismatch");
  const Tensor pred = field_eval(field, s.x, s.t);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    for (std::size_t c = 0; c < pred.cols(); ++c) {
      const double r = pred.at(i, c) - s.u.at(i, c);
      acc += r * r;
    }
  }
  return acc / static_cast<double>(pred.rows());
}

// CFM objective against a frozen interpolant: t ~ U[0,1] per pair, position
// from G, target from dG/dt.
inline double cfm_loss(const VectorField& field, const AliGenerator& gen, const Tensor& x0,
                       const Tensor& x1, Rng& rng) {
  detail::check_pair(x0, x1, gen.dim(), "cfm_loss");
  if (field.dim() != gen.dim())
    throw std::invalid_argument("cfm_loss: field/interpolant dimension mismatch");
  PathSample s;
  s.t = Tensor({x0.rows(), 1});
  for (std::size_t i = 0; i < x0.rows(); ++i) s.t[i] = rng.uniform();
  s.x = ali_eval_rows(gen, x0, x1, s.t);
  s.u = ali_dt_rows(gen, x0, x1, s.t);
  return cfm_residual(field, s);
}

struct CfmTrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch = 128;
  double lr = 1e-4;
  std::vector<std::size_t> hidden = {32, 32};
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations == 0) throw std::invalid_argument("CfmTrainConfig: iterations must be positive");
    if (batch == 0) throw std::invalid_argument("CfmTrainConfig: batch must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("CfmTrainConfig: lr must be positive");
  }
};

struct CfmStepRecord {
  std::size_t iter = 0;
  double loss = 0.0;
};

struct CfmTrainResult {
  VectorField field;
  AdamState opt;
  std::vector<CfmStepRecord> log;
  bool diverged = false;
  std::size_t iterations_done = 0;
};

// Regress the field onto conditional-path velocities. The path source is
// whatever the sampler closes over; nothing in here can touch it.
// One regression step on a fresh batch of conditional path samples. Throws
// on a non-finite loss so callers can checkpoint the last good state.
inline CfmStepRecord cfm_train_step(VectorField& u, const PathSampler& sample, std::size_t batch,
                                    AdamState& opt, Rng& rng) {
  const PathSample s = sample(batch, rng);
  Tape tape;
  const TapedMlp fnet = stage(u.net, tape);
  const Var pred = forward(fnet, tape.leaf(detail::with_time_col(s.x, s.t)));
  const Var loss = mean_row_sqnorm(sub(pred, tape.leaf(s.u)));
  CfmStepRecord rec;
  rec.loss = tape.value(loss).scalar();
  if (!std::isfinite(rec.loss))
    throw std::runtime_error("cfm_train_step: non-finite loss, step aborted");
  tape.backward(loss);
  adam_step(opt, u.net, fnet, tape);
  return rec;
}

inline CfmTrainResult train_cfm(const CfmTrainConfig& cfg, std::size_t dim,
                                const PathSampler& sample, Rng& rng) {
  cfg.validate();
  if (dim == 0) throw std::invalid_argument("train_cfm: dimension must be positive");
  CfmTrainResult res;
  res.field = make_field(dim, cfg.hidden, Activation::ELU, rng);
  res.opt.lr = cfg.lr;
  res.log.reserve(cfg.iterations);
  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    try {
      CfmStepRecord rec = cfm_train_step(res.field, sample, cfg.batch, res.opt, rng);
      rec.iter = iter;
      res.log.push_back(rec);
    } catch (const std::runtime_error&) {
      res.diverged = true;
      break;
    }
    ++res.iterations_done;
  }
  return res;
}

// Spec of the frozen-interpolant stage: same coupling as the adversarial run.
inline CfmTrainResult train_cfm(const CfmTrainConfig& cfg, const AliGenerator& gen,
                                const CouplingSource& src, Rng& rng) {
  return train_cfm(cfg, gen.dim(), ali_path_sampler(gen, src), rng);
}

inline void write_cfm_log_csv(const std::vector<CfmStepRecord>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_cfm_log_csv: cannot open " + path);
  out << "iter,loss\n";
  for (const CfmStepRecord& r : log) out << r.iter << ',' << detail::format_g17(r.loss) << "\n";
  if (!out) throw std::runtime_error("write_cfm_log_csv: write failed for " + path);
}

enum class Solver { Euler, Rk4 };

inline std::string solver_name(Solver s) { return s == Solver::Euler ? "euler" : "rk4"; }

inline Solver solver_from_name(const std::string& s) {
  if (s == "euler") return Solver::Euler;
  if (s == "rk4") return Solver::Rk4;
  throw std::invalid_argument("unknown solver: " + s);
}

struct RolloutConfig {
  Solver solver = Solver::Rk4;
  std::size_t steps = 101;
  std::size_t stride = 1;  // record every stride-th step; start and end always

  void validate() const {
    if (steps == 0) throw std::invalid_argument("RolloutConfig: steps must be >= 1");
    if (stride == 0) throw std::invalid_argument("RolloutConfig: stride must be >= 1");
  }
};

struct TrajectorySet {
  std::vector<double> times;      // recorded times, first is the start time
  std::vector<Tensor> states;     // one n x d tensor per recorded time
  std::vector<bool> divergent;    // per trajectory

  std::size_t size() const { return divergent.size(); }
  std::size_t dim() const { return states.empty() ? 0 : states.front().cols(); }
};

namespace detail {

// Grid point k of n over [t0, t1] as one rounding of the exact convex
// combination. Splitting a run at a grid point reproduces the same time
// values bitwise, which is what makes composed Euler runs bit-identical.
inline double grid_time(double t0, double t1, std::size_t k, std::size_t n) {
  if (k == 0) return t0;
  if (k == n) return t1;
  return (static_cast<double>(n - k) * t0 + static_cast<double>(k) * t1) /
         static_cast<double>(n);
}

inline bool row_finite(const Tensor& x, std::size_t i) {
  for (std::size_t c = 0; c < x.cols(); ++c)
    if (!std::isfinite(x.at(i, c))) return false;
  return true;
}

}  // namespace detail

// Integrate dx = u dt over [t_start, t_end] with a fixed-step solver. A row
// that leaves the finite range is frozen at its last finite state and flagged;
// everything else keeps integrating.
inline TrajectorySet rollout_span(const VectorField& u, const Tensor& x0, double t_start,
                                  double t_end, const RolloutConfig& cfg) {
  u.validate();
  cfg.validate();
  if (!(t_start >= 0.0 && t_start < t_end && t_end <= 1.0))
    throw std::invalid_argument("rollout_span: need 0 <= t_start < t_end <= 1");
  if (x0.cols() != u.dim())
    throw std::invalid_argument("rollout_span: state dimension " + std::to_string(x0.cols()) +
                                " vs field " + std::to_string(u.dim()));
  if (!x0.all_finite()) throw std::invalid_argument("rollout_span: non-finite initial points");

  const std::size_t n = x0.rows(), steps = cfg.steps;
  TrajectorySet out;
  out.divergent.assign(n, false);
  out.times.push_back(t_start);
  out.states.push_back(x0);

  Tensor x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double tk = detail::grid_time(t_start, t_end, k, steps);
    const double tk1 = detail::grid_time(t_start, t_end, k + 1, steps);
    const double h = tk1 - tk;
    Tensor next({n, x.cols()});
    if (cfg.solver == Solver::Euler) {
      const Tensor v = field_eval(u, x, tk);
      for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] + h * v[i];
    } else {
      const Tensor k1 = field_eval(u, x, tk);
      Tensor probe(x.shape);
      for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] + 0.5 * h * k1[i];
      const double tm = tk + 0.5 * h;
      const Tensor k2 = field_eval(u, probe, tm);
      for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] + 0.5 * h * k2[i];
      const Tensor k3 = field_eval(u, probe, tm);
      for (std::size_t i = 0; i < x.size(); ++i) probe[i] = x[i] + h * k3[i];
      const Tensor k4 = field_eval(u, probe, tk1);
      for (std::size_t i = 0; i < x.size(); ++i)
        next[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (out.divergent[i] || !detail::row_finite(next, i)) {
        out.divergent[i] = true;
        for (std::size_t c = 0; c < x.cols(); ++c) next.at(i, c) = x.at(i, c);
      }
    }
    x = std::move(next);
    if ((k + 1) % cfg.stride == 0 || k + 1 == steps) {
      out.times.push_back(tk1);
      out.states.push_back(x);
    }
  }
  return out;
}

inline TrajectorySet rollout(const VectorField& u, const Tensor& x0, const RolloutConfig& cfg) {
  return rollout_span(u, x0, 0.0, 1.0, cfg);
}

// Final state only, over a sub-interval; the grid matches rollout_span's.
inline Batch rollout_between(const VectorField& u, const Batch& from, double t_start,
                             double t_end, std::size_t steps, Solver solver = Solver::Rk4) {
  validate_batch(from, "rollout_between");
  RolloutConfig cfg;
  cfg.solver = solver;
  cfg.steps = steps;
  cfg.stride = steps;  // record only the endpoints
  const TrajectorySet traj = rollout_span(u, from.points, t_start, t_end, cfg);
  Batch out;
  out.points = traj.states.back();
  out.time = t_end;
  return out;
}

// Per-stamp evaluation. Trajectory mode rolls one cloud from the first stamp
// through all later ones; Push mode restarts each leg from the observed
// previous marginal, the held-one-out style.
enum class EvalMode { Trajectory, Push };

inline const char* eval_mode_name(EvalMode m) {
  return m == EvalMode::Trajectory ? "trajectory" : "push";
}

inline EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "trajectory") return EvalMode::Trajectory;
  if (s == "push") return EvalMode::Push;
  throw std::invalid_argument("unknown eval mode: " + s);
}

struct EvalProtocolConfig {
  EvalMode mode = EvalMode::Trajectory;
  Solver solver = Solver::Rk4;
  std::size_t steps_per_unit = 101;  // per-leg step count scales with the leg span
  EmdCost cost = EmdCost::Euclidean;
};

struct EvalResult {
  MarginalDataset pushed;  // stamps 2..K, same normalisation state as the reference
  EmdTable table;          // denormalised costs per stamp, plus their mean
  std::size_t divergent_rows = 0;
};

// Pushes samples stamp to stamp and scores each arrival against the reference
// marginal. The EMD side denormalises, the pushed dataset stays in the
// training coordinates.
inline EvalResult eval_protocol(const VectorField& u, const MarginalDataset& ref,
                                const EvalProtocolConfig& cfg) {
  validate_dataset(ref, "eval_protocol", false);
  if (ref.size() < 2)
    throw std::invalid_argument("eval_protocol: need at least two time stamps");
  if (cfg.steps_per_unit == 0)
    throw std::invalid_argument("eval_protocol: steps_per_unit must be positive");

  EvalResult res;
  res.pushed.norm = ref.norm;
  Tensor state = ref.batches.front().points;
  for (std::size_t i = 1; i < ref.size(); ++i) {
    const double span = ref.times[i] - ref.times[i - 1];
    RolloutConfig leg;
    leg.solver = cfg.solver;
    leg.steps = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.steps_per_unit * span)));
    leg.stride = leg.steps;
    const Tensor& start = cfg.mode == EvalMode::Push ? ref.batches[i - 1].points : state;
    const TrajectorySet t = rollout_span(u, start, ref.times[i - 1], ref.times[i], leg);
    for (bool flag : t.divergent) res.divergent_rows += flag ? 1 : 0;
    state = t.states.back();
    Batch b;
    b.points = state;
    b.time = ref.times[i];
    res.pushed.times.push_back(ref.times[i]);
    res.pushed.batches.push_back(std::move(b));
  }
  res.table = evaluate_marginals(res.pushed, ref, cfg.cost);
  return res;
}

inline void write_emd_table_csv(const EmdTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_emd_table_csv: cannot open " + path);
  out << "t,emd\n";
  for (std::size_t i = 0; i < table.times.size(); ++i)
    out << detail::format_g17(table.times[i]) << ',' << detail::format_g17(table.values[i]) << "\n";
  out << "mean," << detail::format_g17(table.mean) << "\n";
  if (!out) throw std::runtime_error("write_emd_table_csv: write failed for " + path);
}

inline void write_trajectories_csv(const TrajectorySet& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectories_csv: cannot open " + path);
  const std::size_t d = traj.dim();
  out << "traj_id,t";
  for (std::size_t c = 1; c <= d; ++c) out << ",x_" << c;
  out << "\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      out << i << ',' << detail::format_g17(traj.times[k]);
      for (std::size_t c = 0; c < d; ++c)
        out << ',' << detail::format_g17(traj.states[k].at(i, c));
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("write_trajectories_csv: write failed for " + path);
}

inline TrajectorySet read_trajectories_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trajectories_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_trajectories_csv: empty file " + path);
  std::size_t commas = 0;
  for (char ch : line)
    if (ch == ',') ++commas;
  if (commas < 2 || line.rfind("traj_id,t,", 0) != 0)
    throw std::runtime_error("read_trajectories_csv: bad header '" + line + "' in " + path);
  const std::size_t d = commas - 1;

  // rows arrive grouped by trajectory, all sharing one time grid
  std::vector<std::vector<std::vector<double>>> rows;  // [traj][step][coord]
  std::vector<double> times;
  std::size_t lineno = 1, step = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    vals.reserve(d + 2);
    const char* p = line.c_str();
    for (;;) {
      char* end = nullptr;
      vals.push_back(std::strtod(p, &end));
      if (end == p)
        throw std::runtime_error("read_trajectories_csv: parse error at " + path + ":" +
                                 std::to_string(lineno));
      p = end;
      if (*p == ',') {
        ++p;
      } else if (*p == '\0' || *p == '\r') {
        break;
      } else {
        throw std::runtime_error("read_trajectories_csv: parse error at " + path + ":" +
                                 std::to_string(lineno));
      }
    }
    if (vals.size() != d + 2)
      throw std::runtime_error("read_trajectories_csv: expected " + std::to_string(d + 2) +
                               " columns at " + path + ":" + std::to_string(lineno));
    const double idv = vals[0];
    const auto id = static_cast<std::size_t>(idv);
    if (idv != static_cast<double>(id) || id > rows.size())
      throw std::runtime_error("read_trajectories_csv: trajectory ids must count up from 0, got " +
                               std::to_string(idv) + " at " + path + ":" + std::to_string(lineno));
    if (id == rows.size()) {
      rows.emplace_back();
      step = 0;
    }
    if (id == 0) {
      times.push_back(vals[1]);
    } else {
      if (step >= times.size() || vals[1] != times[step])
        throw std::runtime_error("read_trajectories_csv: time grid mismatch at " + path + ":" +
                                 std::to_string(lineno));
    }
    ++step;
    rows[id].push_back(std::vector<double>(vals.begin() + 2, vals.end()));
  }
  if (rows.empty()) throw std::runtime_error("read_trajectories_csv: no data rows in " + path);
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].size() != times.size())
      throw std::runtime_error("read_trajectories_csv: trajectory " + std::to_string(i) +
                               " has " + std::to_string(rows[i].size()) + " rows, expected " +
                               std::to_string(times.size()));

  TrajectorySet traj;
  traj.times = std::move(times);
  traj.divergent.assign(rows.size(), false);
  traj.states.reserve(traj.times.size());
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    Tensor s({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        s.at(i, c) = rows[i][k][c];
        if (!std::isfinite(s.at(i, c))) traj.divergent[i] = true;
      }
    traj.states.push_back(std::move(s));
  }
  return traj;
}

}  // namespace ali
