#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ali/autodiff.hpp"
#include "ali/coupling.hpp"
#include "ali/eval_data.hpp"
#include "ali/interpolants.hpp"
#include "ali/nn.hpp"
#include "ali/regularizers.hpp"
#include "ali/rng.hpp"

namespace ali {

// Maps (x + t) in R^{d+1} to a scalar logit.
struct Discriminator {
  Mlp net;

  std::size_t dim() const { return net.in_width() - 1; }

  void validate() const {
    if (net.in_width() < 2 || net.out_width() != 1)
      throw std::invalid_argument("Discriminator: net must map d+1 -> 1, got " +
                                  std::to_string(net.in_width()) + " -> " +
                                  std::to_string(net.out_width()));
  }
};

inline Discriminator make_discriminator(std::size_t d, std::vector<std::size_t> hidden,
                                        Activation act, Rng& rng) {
  std::vector<std::size_t> widths;
  widths.push_back(d + 1);
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(1);
  Discriminator disc{make_mlp(std::move(widths), act, rng)};
  disc.validate();
  return disc;
}

enum class GanVariant { Saturating, NonSaturating };

inline const char* gan_variant_name(GanVariant v) {
  return v == GanVariant::Saturating ? "saturating" : "non-saturating";
}

inline GanVariant gan_variant_from_name(const std::string& s) {
  if (s == "saturating") return GanVariant::Saturating;
  if (s == "non-saturating") return GanVariant::NonSaturating;
  throw std::invalid_argument("unknown gan variant '" + s + "'");
}

enum class CouplingKind { Independent, Ot };

inline const char* coupling_kind_name(CouplingKind k) {
  return k == CouplingKind::Independent ? "independent" : "ot";
}

inline CouplingKind coupling_kind_from_name(const std::string& s) {
  if (s == "independent") return CouplingKind::Independent;
  if (s == "ot") return CouplingKind::Ot;
  throw std::invalid_argument("unknown coupling '" + s + "'");
}

struct AliTrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch = 128;
  double lr_gen = 1e-3;
  double lr_disc = 1e-3;
  double time_noise_std = 0.0;
  std::size_t pretrain_steps = 0;
  std::vector<std::size_t> gen_hidden = {128, 128};
  std::vector<std::size_t> disc_hidden = {128, 128};
  RegulariserSpec reg;  // carries lambda
  GanVariant gan = GanVariant::NonSaturating;
  CouplingKind coupling = CouplingKind::Ot;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations == 0) throw std::invalid_argument("AliTrainConfig: iterations must be positive");
    if (batch == 0) throw std::invalid_argument("AliTrainConfig: batch must be positive");
    if (!(lr_gen > 0.0) || !(lr_disc > 0.0))
      throw std::invalid_argument("AliTrainConfig: learning rates must be positive");
    if (!(time_noise_std >= 0.0))
      throw std::invalid_argument("AliTrainConfig: negative time-noise std");
    reg.validate();
  }
};

// Sigmoid outputs are pinned away from {0, 1} so the log terms stay finite.
inline constexpr double kProbClamp = 1e-7;

namespace detail {

inline Tensor with_time_col(const Tensor& pts, const Tensor& t_col) {
  const std::size_t n = pts.rows(), d = pts.cols();
  Tensor out({n, d + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = pts.at(i, c);
    out.at(i, d) = t_col[i];
  }
  return out;
}

inline double clamped_sigmoid(double logit) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

// m rows drawn uniformly with replacement
inline Tensor draw_rows(const Batch& b, std::size_t m, Rng& rng) {
  Tensor out({m, b.dim()});
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = rng.uniform_index(b.size());
    for (std::size_t c = 0; c < b.dim(); ++c) out.at(k, c) = b.points.at(i, c);
  }
  return out;
}

// per-row Gaussian jitter, mirroring the generator's train-time input noise
inline Tensor noisy_times(const Tensor& t_col, double noise_std, Rng& rng) {
  Tensor out = t_col;
  if (noise_std > 0.0)
    for (double& v : out.data) v += rng.normal(0.0, noise_std);
  return out;
}

inline double max_row_norm(const Tensor& pts) {
  double mx = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < pts.cols(); ++c) sq += pts.at(i, c) * pts.at(i, c);
    mx = std::max(mx, std::sqrt(sq));
  }
  return mx;
}

}  // namespace detail

struct GanLosses {
  double value = 0.0;  // E log(1 - D(fake)) + E log D(real)
  double disc = 0.0;   // -value: ascent written as descent
  double gen = 0.0;    // per variant
};

inline GanLosses gan_losses(const Discriminator& disc, const Tensor& gen_points,
                            const Tensor& real_points, double t_i,
                            GanVariant variant = GanVariant::NonSaturating) {
  disc.validate();
  if (gen_points.rows() == 0 || real_points.rows() == 0)
    throw std::invalid_argument("gan_losses: empty batch");
  if (gen_points.cols() != disc.dim() || real_points.cols() != disc.dim())
    throw std::invalid_argument("gan_losses: dimension mismatch");
  const Tensor tf({gen_points.rows(), 1}, t_i);
  const Tensor tr({real_points.rows(), 1}, t_i);
  const Tensor lf = forward_plain(disc.net, detail::with_time_col(gen_points, tf));
  const Tensor lr = forward_plain(disc.net, detail::with_time_col(real_points, tr));
  if (!lf.all_finite() || !lr.all_finite())
    throw std::runtime_error("gan_losses: non-finite discriminator output, step aborted");
  double fake_term = 0.0, real_term = 0.0, gen_ns = 0.0;
  for (std::size_t i = 0; i < lf.rows(); ++i) {
    const double p = detail::clamped_sigmoid(lf.at(i, 0));
    fake_term += std::log(1.0 - p);
    gen_ns -= std::log(p);
  }
  for (std::size_t i = 0; i < lr.rows(); ++i)
    real_term += std::log(detail::clamped_sigmoid(lr.at(i, 0)));
  fake_term /= static_cast<double>(lf.rows());
  gen_ns /= static_cast<double>(lf.rows());
  real_term /= static_cast<double>(lr.rows());
  GanLosses out;
  out.value = fake_term + real_term;
  out.disc = -out.value;
  out.gen = variant == GanVariant::NonSaturating ? gen_ns : fake_term;
  return out;
}

// Pair sampler over the end marginals: the product distribution, or the exact
// OT plan between the two empirical measures computed once up front.
struct CouplingSource {
  Batch b0, b1;                   // equal-size working copies when OT
  CouplingKind kind = CouplingKind::Ot;
  std::vector<std::size_t> plan;  // OT only: b0 row -> b1 row
};

inline CouplingSource make_coupling_source(const Batch& q0, const Batch& q1, CouplingKind kind,
                                           Rng* rng = nullptr) {
  validate_batch(q0, "make_coupling_source");
  validate_batch(q1, "make_coupling_source");
  CouplingSource src;
  src.kind = kind;
  src.b0 = q0;
  src.b1 = q1;
  if (kind == CouplingKind::Independent) return src;
  const std::size_t n = std::min(q0.size(), q1.size());
  if (q0.size() != q1.size()) {
    if (!rng)
      throw std::invalid_argument("make_coupling_source: unequal sizes need an rng to subsample");
    if (q0.size() != n) src.b0 = detail::subsample(q0, n, *rng);
    if (q1.size() != n) src.b1 = detail::subsample(q1, n, *rng);
  }
  const Pairing p = minibatch_ot(src.b0, src.b1);
  src.plan.assign(n, 0);
  for (const IndexPair& pr : p.pairs) src.plan[pr.i] = pr.j;
  return src;
}

// m pairs with replacement; independent draws both ends, OT draws a plan row.
inline void draw_pairs(const CouplingSource& src, std::size_t m, Rng& rng, Tensor& x0,
                       Tensor& x1) {
  const std::size_t d = src.b0.dim();
  x0 = Tensor({m, d});
  x1 = Tensor({m, d});
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = rng.uniform_index(src.b0.size());
    const std::size_t j =
        src.kind == CouplingKind::Ot ? src.plan[i] : rng.uniform_index(src.b1.size());
    for (std::size_t c = 0; c < d; ++c) {
      x0.at(k, c) = src.b0.points.at(i, c);
      x1.at(k, c) = src.b1.points.at(j, c);
    }
  }
}

struct AliStepRecord {
  std::size_t iter = 0;
  std::size_t index = 0;  // intermediate marginal index, 1-based
  double t_i = 0.0;
  double loss_disc = 0.0;
  double loss_gen = 0.0;
  double loss_reg = 0.0;
  double gen_norm = 0.0;  // max row norm of the fake batch, divergence guard input
};

namespace detail {

// The regulariser term on the current tape. Draw order within a step is part
// of the determinism contract: pairs, intermediate index, real rows, fake
// noise, then these regulariser draws.
inline Var reg_term_on_tape(Tape& tape, const TapedMlp& fnet, const AliGenerator& gen,
                            const MarginalDataset& ds, const CouplingSource& src,
                            std::size_t idx, const Tensor& x0, const Tensor& x1,
                            const AliTrainConfig& cfg, Rng& rng, const LandMetricSpec* land) {
  const double t_i = ds.times[idx];
  const std::size_t m = x0.rows();
  switch (cfg.reg.kind) {
    case RegKind::LinearRef: {
      const Tensor t_col({m, 1}, t_i);
      const Tensor t_f = noisy_times(t_col, gen.time_noise_std, rng);
      return reg_linear_loss(tape, fnet, x0, x1, t_i, t_f);
    }
    case RegKind::PiecewiseRef: {
      const std::vector<ChainedTriple> triples =
          markov_chain_coupling(src.b0, ds.batches[idx], src.b1, &rng);
      const std::size_t d = src.b0.dim();
      Tensor c0({m, d}), ct({m, d}), c1({m, d});
      for (std::size_t k = 0; k < m; ++k) {
        const ChainedTriple& tr = triples[rng.uniform_index(triples.size())];
        for (std::size_t c = 0; c < d; ++c) {
          c0.at(k, c) = src.b0.points.at(tr.i0, c);
          ct.at(k, c) = ds.batches[idx].points.at(tr.it, c);
          c1.at(k, c) = src.b1.points.at(tr.i1, c);
        }
      }
      Tensor t_clean({m, 1});
      for (double& v : t_clean.data) v = rng.uniform();
      const Tensor t_f = noisy_times(t_clean, gen.time_noise_std, rng);
      return reg_piecewise_loss(tape, fnet, c0, ct, c1, t_i, t_clean, t_f);
    }
    case RegKind::SecondDerivative: {
      std::vector<double> ts(cfg.reg.mc_samples);
      for (double& v : ts) v = rng.uniform(cfg.reg.h, 1.0 - cfg.reg.h);
      Tensor jit({m, 1});
      const bool noisy = gen.time_noise_std > 0.0;
      if (noisy)
        for (double& v : jit.data) v = rng.normal(0.0, gen.time_noise_std);
      return reg_second_derivative_loss(tape, fnet, x0, x1, ts, cfg.reg.h, cfg.reg.norm, land,
                                        noisy ? &jit : nullptr);
    }
  }
  throw std::invalid_argument("reg_term_on_tape: unknown regulariser kind");
}

}  // namespace detail

// One discriminator ascent step on frozen fakes, then one generator descent
// step against the frozen discriminator, on a fresh draw.
inline AliStepRecord ali_train_step(AliGenerator& gen, Discriminator& disc,
                                    const MarginalDataset& ds, const CouplingSource& src,
                                    const AliTrainConfig& cfg, AdamState& opt_gen,
                                    AdamState& opt_disc, Rng& rng,
                                    const LandMetricSpec* land = nullptr) {
  if (ds.size() < 3)
    throw std::invalid_argument(
        "ali_train_step: need at least one intermediate marginal (K >= 3)");
  if (gen.dim() != ds.dim() || disc.dim() != ds.dim())
    throw std::invalid_argument("ali_train_step: network/data dimension mismatch");
  const std::size_t m = cfg.batch;
  Tensor x0, x1;
  draw_pairs(src, m, rng, x0, x1);
  const std::size_t idx = 1 + rng.uniform_index(ds.size() - 2);
  const double t_i = ds.times[idx];
  const Tensor real = detail::draw_rows(ds.batches[idx], m, rng);

  AliStepRecord rec;
  rec.index = idx + 1;
  rec.t_i = t_i;

  // The updates run on the logits: log D = -softplus(-z) and
  // log(1-D) = -softplus(z). Identical objective to gan_losses, but the
  // gradient stays alive when the discriminator saturates, where the clamped
  // probability form goes exactly flat and training stalls.
  const Tensor t_col({m, 1}, t_i);
  {
    const Tensor fake = ali_eval_rows(gen, x0, x1, t_col, true, &rng);
    rec.gen_norm = detail::max_row_norm(fake);
    Tape tape;
    const TapedMlp dnet = stage(disc.net, tape);
    const Var zf = forward(dnet, tape.leaf(detail::with_time_col(fake, t_col)));
    const Var zr = forward(dnet, tape.leaf(detail::with_time_col(real, t_col)));
    const Var loss = add(mean_all(activation(zf, Activation::Softplus)),
                         mean_all(activation(scale(zr, -1.0), Activation::Softplus)));
    rec.loss_disc = tape.value(loss).scalar();
    if (!std::isfinite(rec.loss_disc))
      throw std::runtime_error("ali_train_step: non-finite discriminator loss, step aborted");
    tape.backward(loss);
    adam_step(opt_disc, disc.net, dnet, tape);
  }
  {
    Tape tape;
    const TapedMlp fnet = stage(gen.net, tape);
    const TapedMlp dnet = stage(disc.net, tape);  // frozen: staged but never stepped
    const Tensor t_f = detail::noisy_times(t_col, gen.time_noise_std, rng);
    const Var xg = ali_forward_taped(tape, fnet, x0, x1, t_col, t_f);
    const Var z = forward(dnet, concat_cols({xg, tape.leaf(t_col)}));
    const Var gan_term = cfg.gan == GanVariant::NonSaturating
                             ? mean_all(activation(scale(z, -1.0), Activation::Softplus))
                             : scale(mean_all(activation(z, Activation::Softplus)), -1.0);
    const Var reg_term =
        detail::reg_term_on_tape(tape, fnet, gen, ds, src, idx, x0, x1, cfg, rng, land);
    const Var total = add(gan_term, scale(reg_term, cfg.reg.lambda));
    rec.loss_gen = tape.value(gan_term).scalar();
    rec.loss_reg = tape.value(reg_term).scalar();
    rec.gen_norm = std::max(rec.gen_norm, detail::max_row_norm(tape.value(xg)));
    if (!std::isfinite(rec.loss_gen) || !std::isfinite(rec.loss_reg))
      throw std::runtime_error("ali_train_step: non-finite generator loss, step aborted");
    tape.backward(total);
    adam_step(opt_gen, gen.net, fnet, tape);
  }
  return rec;
}

// Regulariser-only warmup; the adversarial terms are left out entirely.
inline std::vector<AliStepRecord> pretrain_ali(AliGenerator& gen, const MarginalDataset& ds,
                                               const CouplingSource& src,
                                               const AliTrainConfig& cfg, AdamState& opt_gen,
                                               Rng& rng, const LandMetricSpec* land = nullptr) {
  cfg.validate();
  validate_dataset(ds, "pretrain_ali");
  if (ds.size() < 3)
    throw std::invalid_argument("pretrain_ali: need at least one intermediate marginal (K >= 3)");
  std::vector<AliStepRecord> log;
  log.reserve(cfg.pretrain_steps);
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    Tensor x0, x1;
    draw_pairs(src, cfg.batch, rng, x0, x1);
    const std::size_t idx = 1 + rng.uniform_index(ds.size() - 2);
    Tape tape;
    const TapedMlp fnet = stage(gen.net, tape);
    const Var reg =
        detail::reg_term_on_tape(tape, fnet, gen, ds, src, idx, x0, x1, cfg, rng, land);
    AliStepRecord rec;
    rec.iter = step + 1;
    rec.index = idx + 1;
    rec.t_i = ds.times[idx];
    rec.loss_reg = tape.value(reg).scalar();
    if (!std::isfinite(rec.loss_reg))
      throw std::runtime_error("pretrain_ali: non-finite regulariser, step aborted");
    tape.backward(reg);
    adam_step(opt_gen, gen.net, fnet, tape);
    log.push_back(rec);
  }
  return log;
}

inline constexpr double kDivergenceNorm = 1e6;

struct AliTrainResult {
  AliGenerator gen;
  Discriminator disc;
  AdamState opt_gen, opt_disc;
  std::vector<AliStepRecord> log;
  bool diverged = false;
  std::size_t iterations_done = 0;
};

// Full training run: fresh networks, optional pretraining, then alternating
// updates. On divergence the partial state is returned with the flag set so
// the caller can checkpoint it.
inline AliTrainResult train_ali(const AliTrainConfig& cfg, const MarginalDataset& ds, Rng& rng,
                                const LandMetricSpec* land_in = nullptr) {
  cfg.validate();
  validate_dataset(ds, "train_ali");
  if (ds.size() < 3)
    throw std::invalid_argument("train_ali: need at least one intermediate marginal (K >= 3)");
  const std::size_t d = ds.dim();
  AliTrainResult res;
  res.gen = make_generator(d, cfg.gen_hidden, Activation::ELU, rng, cfg.time_noise_std);
  res.disc = make_discriminator(d, cfg.disc_hidden, Activation::ELU, rng);
  res.opt_gen.lr = cfg.lr_gen;
  res.opt_disc.lr = cfg.lr_disc;
  const CouplingSource src =
      make_coupling_source(ds.batches.front(), ds.batches.back(), cfg.coupling, &rng);

  LandMetricSpec land_local;
  const LandMetricSpec* land = land_in;
  if (cfg.reg.norm == RegNorm::Land && !land) {
    // reference cloud straight from the training marginals
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
    land_local = make_land_spec(pts, times, 0.4, 0.4, 1e-3, rng);
    land = &land_local;
  }

  pretrain_ali(res.gen, ds, src, cfg, res.opt_gen, rng, land);
  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    AliStepRecord rec;
    try {
      rec = ali_train_step(res.gen, res.disc, ds, src, cfg, res.opt_gen, res.opt_disc, rng, land);
    } catch (const std::runtime_error&) {
      res.diverged = true;
      break;
    }
    rec.iter = iter;
    res.log.push_back(rec);
    res.iterations_done = iter;
    if (rec.gen_norm > kDivergenceNorm) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

inline void write_train_log_csv(const std::vector<AliStepRecord>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_train_log_csv: cannot open " + path);
  out << "iter,t_i,loss_disc,loss_gen,loss_reg\n";
  for (const AliStepRecord& r : log) {
    out << r.iter << ',' << detail::format_g17(r.t_i) << ',' << detail::format_g17(r.loss_disc)
        << ',' << detail::format_g17(r.loss_gen) << ',' << detail::format_g17(r.loss_reg)
        << "\n";
  }
  if (!out) throw std::runtime_error("write_train_log_csv: write failed for " + path);
}

}  // namespace ali
