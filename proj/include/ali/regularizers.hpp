#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ali/coupling.hpp"
#include "ali/interpolants.hpp"
#include "ali/rng.hpp"
#include "ali/tensor.hpp"

namespace ali {

enum class RegKind { LinearRef, PiecewiseRef, SecondDerivative };
enum class RegNorm { Euclidean, Land };

inline const char* reg_kind_name(RegKind k) {
  switch (k) {
    case RegKind::LinearRef: return "linear";
    case RegKind::PiecewiseRef: return "piecewise";
    case RegKind::SecondDerivative: return "second-derivative";
  }
  return "?";
}

inline RegKind reg_kind_from_name(const std::string& s) {
  if (s == "linear") return RegKind::LinearRef;
  if (s == "piecewise") return RegKind::PiecewiseRef;
  if (s == "second-derivative") return RegKind::SecondDerivative;
  throw std::invalid_argument("unknown regulariser kind: " + s);
}

inline const char* reg_norm_name(RegNorm n) {
  return n == RegNorm::Euclidean ? "euclidean" : "land";
}

inline RegNorm reg_norm_from_name(const std::string& s) {
  if (s == "euclidean") return RegNorm::Euclidean;
  if (s == "land") return RegNorm::Land;
  throw std::invalid_argument("unknown regulariser norm: " + s);
}

struct RegulariserSpec {
  RegKind kind = RegKind::LinearRef;
  double lambda = 1.0;
  // SecondDerivative only:
  double h = 1e-3;
  std::size_t mc_samples = 3;
  RegNorm norm = RegNorm::Euclidean;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("RegulariserSpec: lambda must be >= 0");
    if (kind == RegKind::SecondDerivative) {
      // below ~1e-5 the squared stencil is all cancellation noise after /h^4
      if (h < 1e-5)
        throw std::invalid_argument("RegulariserSpec: stencil h = " + std::to_string(h) +
                                    " too small for 64-bit evaluation (min 1e-5)");
      if (h >= 0.5) throw std::invalid_argument("RegulariserSpec: stencil h must be << 1");
      if (mc_samples == 0) throw std::invalid_argument("RegulariserSpec: mc_samples must be >= 1");
    }
  }
};

// Diagonal data-driven metric: h_a(x,t) sums squared offsets to reference
// points, damped by space and time kernels; the metric is (diag(h)+eps I)^-1.
struct LandMetricSpec {
  Tensor ref_points;              // n x d
  std::vector<double> ref_times;  // n
  double gamma1 = 0.4;
  double gamma2 = 0.4;
  double eps = 1e-3;

  void validate() const {
    if (ref_points.rows() == 0 || ref_points.rows() != ref_times.size())
      throw std::invalid_argument("LandMetricSpec: reference set empty or size mismatch");
    if (!(gamma1 > 0.0 && gamma2 > 0.0 && eps > 0.0))
      throw std::invalid_argument("LandMetricSpec: gamma1, gamma2, eps must be > 0");
  }
};

inline constexpr std::size_t kLandDefaultCap = 2048;

inline LandMetricSpec make_land_spec(const Tensor& points, const std::vector<double>& times,
                                     double gamma1, double gamma2, double eps, Rng& rng,
                                     std::size_t cap = kLandDefaultCap) {
  if (points.rows() != times.size())
    throw std::invalid_argument("make_land_spec: points/times size mismatch");
  LandMetricSpec spec;
  spec.gamma1 = gamma1;
  spec.gamma2 = gamma2;
  spec.eps = eps;
  const std::size_t n = points.rows();
  if (n <= cap) {
    spec.ref_points = points;
    spec.ref_times = times;
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t k = 0; k < cap; ++k) {
      const std::size_t r = k + rng.uniform_index(idx.size() - k);
      std::swap(idx[k], idx[r]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    spec.ref_points = Tensor({cap, points.cols()});
    spec.ref_times.resize(cap);
    for (std::size_t k = 0; k < cap; ++k) {
      for (std::size_t c = 0; c < points.cols(); ++c)
        spec.ref_points.at(k, c) = points.at(idx[k], c);
      spec.ref_times[k] = times[idx[k]];
    }
  }
  spec.validate();
  return spec;
}

// Per-coordinate metric entries 1/(h_a + eps) for each row of x.
inline Tensor land_metric(const Tensor& x, double t, const LandMetricSpec& spec) {
  spec.validate();
  const std::size_t n = x.rows(), d = x.cols();
  if (spec.ref_points.cols() != d)
    throw std::invalid_argument("land_metric: dimension mismatch");
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < spec.ref_points.rows(); ++s) {
      const double dt = t - spec.ref_times[s];
      double sq = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x.at(i, c) - spec.ref_points.at(s, c);
        sq += diff * diff;
      }
      const double k = std::exp(-sq / spec.gamma1) * std::exp(-(dt * dt) / spec.gamma2);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x.at(i, c) - spec.ref_points.at(s, c);
        out.at(i, c) += diff * diff * k;
      }
    }
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = 1.0 / (out.at(i, c) + spec.eps);
  }
  return out;
}

inline double weighted_sq_norm(const Tensor& v, const Tensor& metric) {
  if (!v.same_shape(metric))
    throw std::invalid_argument("weighted_sq_norm: shape mismatch " + v.shape_str() + " vs " +
                                metric.shape_str());
  for (double m : metric.data)
    if (!(m > 0.0)) throw std::invalid_argument("weighted_sq_norm: metric must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += metric[i] * v[i] * v[i];
  return s;
}

inline Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), src.cols()});
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t c = 0; c < src.cols(); ++c) out.at(k, c) = src.at(idx[k], c);
  return out;
}

// ---- plain evaluations (weights honoured, no tape) ----

inline double reg_linear(const AliGenerator& gen, const Batch& b0, const Batch& b1,
                         const Pairing& pairs, double t_i) {
  if (!(t_i > 0.0 && t_i < 1.0))
    throw std::invalid_argument("reg_linear: t_i must lie in (0,1)");
  std::vector<std::size_t> i0, i1;
  for (const IndexPair& pr : pairs.pairs) {
    i0.push_back(pr.i);
    i1.push_back(pr.j);
  }
  const Tensor x0 = gather_rows(b0.points, i0);
  const Tensor x1 = gather_rows(b1.points, i1);
  const Tensor g = ali_eval(gen, x0, x1, t_i);
  const Tensor l = linear_ref(x0, x1, t_i);
  double s = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    double row = 0.0;
    for (std::size_t c = 0; c < x0.cols(); ++c) {
      const double diff = g.at(k, c) - l.at(k, c);
      row += diff * diff;
    }
    s += pairs.weights[k] * row;
  }
  return s;
}

inline double reg_piecewise(const AliGenerator& gen, const Batch& b0, const Batch& bt,
                            const Batch& b1, const std::vector<ChainedTriple>& triples,
                            double t_i, Rng& rng,
                            PiecewiseForm form = PiecewiseForm::ContinuityConsistent) {
  if (!(t_i > 0.0 && t_i < 1.0))
    throw std::invalid_argument("reg_piecewise: t_i must lie in (0,1)");
  if (triples.empty()) throw std::invalid_argument("reg_piecewise: no triples");
  const std::size_t n = triples.size(), d = b0.dim();
  Tensor x0({n, d}), xt({n, d}), x1({n, d}), tcol({n, 1});
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t c = 0; c < d; ++c) {
      x0.at(k, c) = b0.points.at(triples[k].i0, c);
      xt.at(k, c) = bt.points.at(triples[k].it, c);
      x1.at(k, c) = b1.points.at(triples[k].i1, c);
    }
    tcol[k] = rng.uniform();
  }
  const Tensor g = ali_eval_rows(gen, x0, x1, tcol);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor r0({1, d}), rt({1, d}), r1({1, d});
    for (std::size_t c = 0; c < d; ++c) {
      r0.at(0, c) = x0.at(k, c);
      rt.at(0, c) = xt.at(k, c);
      r1.at(0, c) = x1.at(k, c);
    }
    const Tensor l = piecewise_ref(r0, rt, r1, t_i, tcol[k], form);
    double row = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = g.at(k, c) - l[c];
      row += diff * diff;
    }
    s += triples[k].weight * row;
  }
  return s;
}

inline double reg_second_derivative(const AliGenerator& gen, const Batch& b0, const Batch& b1,
                                    const Pairing& pairs, const RegulariserSpec& spec, Rng& rng,
                                    const LandMetricSpec* land = nullptr) {
  spec.validate();
  if (spec.kind != RegKind::SecondDerivative)
    throw std::invalid_argument("reg_second_derivative: wrong spec kind");
  if (spec.norm == RegNorm::Land && !land)
    throw std::invalid_argument("reg_second_derivative: LAND norm needs a metric spec");
  std::vector<std::size_t> i0, i1;
  for (const IndexPair& pr : pairs.pairs) {
    i0.push_back(pr.i);
    i1.push_back(pr.j);
  }
  const Tensor x0 = gather_rows(b0.points, i0);
  const Tensor x1 = gather_rows(b1.points, i1);
  const double h = spec.h;
  const std::size_t d = x0.cols();
  double total = 0.0;
  // one t per Monte-Carlo sample, shared by the whole batch
  for (std::size_t s = 0; s < spec.mc_samples; ++s) {
    const double t = rng.uniform(h, 1.0 - h);
    const Tensor gp = ali_eval(gen, x0, x1, t + h);
    const Tensor gm = ali_eval(gen, x0, x1, t - h);
    const Tensor gc = ali_eval(gen, x0, x1, t);
    Tensor metric;
    if (spec.norm == RegNorm::Land) metric = land_metric(gc, t, *land);
    double acc = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      double row = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double st = gp.at(k, c) + gm.at(k, c) - 2.0 * gc.at(k, c);
        const double w = spec.norm == RegNorm::Land ? metric.at(k, c) : 1.0;
        row += w * st * st;
      }
      acc += pairs.weights[k] * row;
    }
    total += acc / (h * h * h * h);
  }
  return total / static_cast<double>(spec.mc_samples);
}

// ---- taped builders on row-aligned matrices (uniform weights) ----

// mean_k |gate(t_i) f_k|^2; equals the linear-reference deviation because the
// skeleton cancels against the reference exactly.
inline Var reg_linear_loss(Tape& tape, const TapedMlp& fnet, const Tensor& x0, const Tensor& x1,
                           double t_i, const Tensor& t_for_f) {
  if (!(t_i > 0.0 && t_i < 1.0))
    throw std::invalid_argument("reg_linear_loss: t_i must lie in (0,1)");
  const std::size_t n = x0.rows(), d = x0.cols();
  Tensor in({n, 2 * d + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      in.at(i, c) = x0.at(i, c);
      in.at(i, d + c) = x1.at(i, c);
    }
    in.at(i, 2 * d) = t_for_f[i];
  }
  Var f = forward(fnet, tape.leaf(in));
  const double gate = t_i * (1.0 - t_i);
  return scale(mean_row_sqnorm(f), gate * gate);
}

inline Var reg_piecewise_loss(Tape& tape, const TapedMlp& fnet, const Tensor& x0,
                              const Tensor& xt, const Tensor& x1, double t_i,
                              const Tensor& t_clean, const Tensor& t_for_f,
                              PiecewiseForm form = PiecewiseForm::ContinuityConsistent) {
  const std::size_t n = x0.rows(), d = x0.cols();
  Var g = ali_forward_taped(tape, fnet, x0, x1, t_clean, t_for_f);
  Tensor ref({n, d});
  for (std::size_t k = 0; k < n; ++k) {
    Tensor r0({1, d}), rt({1, d}), r1({1, d});
    for (std::size_t c = 0; c < d; ++c) {
      r0.at(0, c) = x0.at(k, c);
      rt.at(0, c) = xt.at(k, c);
      r1.at(0, c) = x1.at(k, c);
    }
    const Tensor l = piecewise_ref(r0, rt, r1, t_i, t_clean[k], form);
    for (std::size_t c = 0; c < d; ++c) ref.at(k, c) = l[c];
  }
  return mean_row_sqnorm(sub(g, tape.leaf(ref)));
}

// Squared FD stencil over shared MC times; the optional per-row jitter shifts
// f's time input at all three stencil points together so the stencil geometry
// survives the smoothing.
inline Var reg_second_derivative_loss(Tape& tape, const TapedMlp& fnet, const Tensor& x0,
                                      const Tensor& x1, const std::vector<double>& t_samples,
                                      double h, RegNorm norm = RegNorm::Euclidean,
                                      const LandMetricSpec* land = nullptr,
                                      const Tensor* f_time_jitter = nullptr) {
  if (t_samples.empty())
    throw std::invalid_argument("reg_second_derivative_loss: no time samples");
  if (norm == RegNorm::Land && !land)
    throw std::invalid_argument("reg_second_derivative_loss: LAND norm needs a metric spec");
  const std::size_t n = x0.rows();
  auto tcol = [&](double t, double off) {
    Tensor col({n, 1}, t + off);
    if (f_time_jitter)
      for (std::size_t i = 0; i < n; ++i) col[i] += (*f_time_jitter)[i];
    return col;
  };
  Var acc{};
  bool first = true;
  for (double t : t_samples) {
    if (!(t >= h && t <= 1.0 - h))
      throw std::invalid_argument("reg_second_derivative_loss: t sample outside [h, 1-h]");
    Var gp = ali_forward_taped(tape, fnet, x0, x1, Tensor({n, 1}, t + h), tcol(t, h));
    Var gm = ali_forward_taped(tape, fnet, x0, x1, Tensor({n, 1}, t - h), tcol(t, -h));
    Var gc = ali_forward_taped(tape, fnet, x0, x1, Tensor({n, 1}, t), tcol(t, 0.0));
    Var st = add(add(gp, gm), scale(gc, -2.0));
    Var val;
    if (norm == RegNorm::Land) {
      // metric frozen at the current center values; no gradient through it
      const Tensor metric = land_metric(tape.value(gc), t, *land);
      val = scale(sum_all(mul(mul(st, st), tape.leaf(metric))), 1.0 / static_cast<double>(n));
    } else {
      val = mean_row_sqnorm(st);
    }
    val = scale(val, 1.0 / (h * h * h * h));
    acc = first ? val : add(acc, val);
    first = false;
  }
  return scale(acc, 1.0 / static_cast<double>(t_samples.size()));
}

}  // namespace ali
