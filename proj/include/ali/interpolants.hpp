#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ali/nn.hpp"
#include "ali/rng.hpp"
#include "ali/tensor.hpp"

namespace ali {

inline void check_unit_time(double t, const char* who) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument(std::string(who) + ": t = " + std::to_string(t) +
                                " outside [0,1]");
}

// (1-t) x0 + t x1, elementwise over matching shapes.
inline Tensor linear_ref(const Tensor& x0, const Tensor& x1, double t) {
  check_unit_time(t, "linear_ref");
  if (!x0.same_shape(x1))
    throw std::invalid_argument("linear_ref: shape mismatch " + x0.shape_str() + " vs " +
                                x1.shape_str());
  Tensor out(x0.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
  return out;
}

// How to read the second segment of the two-piece reference path. The source
// formula is not continuous at the knot; the continuity-consistent form is the
// default and the literal form stays available for comparison.
enum class PiecewiseForm { ContinuityConsistent, Literal };

// Two-segment path through (0,x0), (t_i,x_ti), (1,x1).
inline Tensor piecewise_ref(const Tensor& x0, const Tensor& x_ti, const Tensor& x1, double t_i,
                            double t, PiecewiseForm form = PiecewiseForm::ContinuityConsistent) {
  check_unit_time(t, "piecewise_ref");
  if (!(t_i > 0.0 && t_i < 1.0))
    throw std::invalid_argument("piecewise_ref: t_i = " + std::to_string(t_i) +
                                " must lie strictly inside (0,1)");
  if (!x0.same_shape(x_ti) || !x0.same_shape(x1))
    throw std::invalid_argument("piecewise_ref: shape mismatch");
  Tensor out(x0.shape);
  if (t <= t_i) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (t * x_ti[i] + (t_i - t) * x0[i]) / t_i;
  } else if (form == PiecewiseForm::ContinuityConsistent) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = ((t - t_i) * x1[i] + (1.0 - t) * x_ti[i]) / (1.0 - t_i);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (t * x1[i] + (1.0 - t) * x_ti[i]) / (1.0 - t_i);
  }
  return out;
}

// Residual network f plus the pinned skeleton. The gate t(1-t) forces exact
// endpoints whatever f does; train-time jitter touches only f's time input.
struct AliGenerator {
  Mlp net;  // (x0 + x1 + t) in R^{2d+1} -> R^d
  double time_noise_std = 0.0;

  std::size_t dim() const { return net.out_width(); }

  void validate() const {
    if (net.in_width() != 2 * net.out_width() + 1)
      throw std::invalid_argument("AliGenerator: net must map 2d+1 -> d, got " +
                                  std::to_string(net.in_width()) + " -> " +
                                  std::to_string(net.out_width()));
    if (time_noise_std < 0.0)
      throw std::invalid_argument("AliGenerator: negative time-noise std");
  }
};

inline AliGenerator make_generator(std::size_t d, std::vector<std::size_t> hidden, Activation act,
                                   Rng& rng, double time_noise_std = 0.0) {
  std::vector<std::size_t> widths;
  widths.push_back(2 * d + 1);
  for (std::size_t h : hidden) widths.push_back(h);
  widths.push_back(d);
  AliGenerator gen{make_mlp(std::move(widths), act, rng), time_noise_std};
  gen.validate();
  return gen;
}

namespace detail {
// [x0 | x1 | t], with optional jitter on the time column only.
inline Tensor gen_input(const Tensor& x0, const Tensor& x1, const Tensor& t_col, bool train,
                        double noise_std, Rng* rng) {
  const std::size_t n = x0.rows(), d = x0.cols();
  Tensor in({n, 2 * d + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      in.at(i, c) = x0.at(i, c);
      in.at(i, d + c) = x1.at(i, c);
    }
    double tv = t_col[i];
    if (train && noise_std > 0.0) {
      if (!rng) throw std::invalid_argument("ali_eval: train-time noise needs an rng");
      tv += rng->normal(0.0, noise_std);
    }
    in.at(i, 2 * d) = tv;
  }
  return in;
}

inline void check_pair(const Tensor& x0, const Tensor& x1, std::size_t d, const char* who) {
  if (!x0.same_shape(x1) || x0.cols() != d)
    throw std::invalid_argument(std::string(who) + ": batch shape mismatch, x0 " +
                                x0.shape_str() + " x1 " + x1.shape_str() + " vs dim " +
                                std::to_string(d));
}
}  // namespace detail

// G(x0,x1,t) row-wise with a per-row time column.
inline Tensor ali_eval_rows(const AliGenerator& gen, const Tensor& x0, const Tensor& x1,
                            const Tensor& t_col, bool train = false, Rng* rng = nullptr) {
  gen.validate();
  const std::size_t d = gen.dim();
  detail::check_pair(x0, x1, d, "ali_eval");
  const std::size_t n = x0.rows();
  if (t_col.size() != n) throw std::invalid_argument("ali_eval: time column size mismatch");
  for (std::size_t i = 0; i < n; ++i) check_unit_time(t_col[i], "ali_eval");
  const Tensor f =
      forward_plain(gen.net, detail::gen_input(x0, x1, t_col, train, gen.time_noise_std, rng));
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t_col[i];
    const double gate = t * (1.0 - t);
    for (std::size_t c = 0; c < d; ++c)
      out.at(i, c) = (1.0 - t) * x0.at(i, c) + t * x1.at(i, c) + gate * f.at(i, c);
  }
  return out;
}

inline Tensor ali_eval(const AliGenerator& gen, const Tensor& x0, const Tensor& x1, double t,
                       bool train = false, Rng* rng = nullptr) {
  return ali_eval_rows(gen, x0, x1, Tensor({x0.rows(), 1}, t), train, rng);
}

// dG/dt at noiseless t: x1 - x0 + t(1-t) df/dt + (1-2t) f. The time partial
// comes from one seeded reverse pass per output dimension; each batch row's
// derivative lands in that row's slot of the time column gradient.
inline Tensor ali_dt_rows(const AliGenerator& gen, const Tensor& x0, const Tensor& x1,
                          const Tensor& t_col) {
  gen.validate();
  const std::size_t d = gen.dim();
  detail::check_pair(x0, x1, d, "ali_dt");
  const std::size_t n = x0.rows();
  if (t_col.size() != n) throw std::invalid_argument("ali_dt: time column size mismatch");
  for (std::size_t i = 0; i < n; ++i) check_unit_time(t_col[i], "ali_dt");

  Tape tape;
  Var in = tape.leaf(detail::gen_input(x0, x1, t_col, false, 0.0, nullptr));
  TapedMlp staged = stage(gen.net, tape);
  Var f = forward(staged, in);
  const Tensor& fval = tape.value(f);

  Tensor dfdt({n, d});
  Tensor seed({n, d});
  for (std::size_t j = 0; j < d; ++j) {
    std::fill(seed.data.begin(), seed.data.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) seed.at(i, j) = 1.0;
    tape.backward_seeded(f, seed);
    const Tensor& gin = tape.grad(in);
    for (std::size_t i = 0; i < n; ++i) dfdt.at(i, j) = gin.at(i, 2 * d);
  }

  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t_col[i];
    const double gate = t * (1.0 - t);
    const double dgate = 1.0 - 2.0 * t;
    for (std::size_t c = 0; c < d; ++c)
      out.at(i, c) =
          x1.at(i, c) - x0.at(i, c) + gate * dfdt.at(i, c) + dgate * fval.at(i, c);
  }
  return out;
}

inline Tensor ali_dt(const AliGenerator& gen, const Tensor& x0, const Tensor& x1, double t) {
  return ali_dt_rows(gen, x0, x1, Tensor({x0.rows(), 1}, t));
}

// G on a tape with the residual net staged: skeleton and gate come from the
// clean times, f sees its own (possibly jittered) time column. Gradients flow
// into the staged net only.
inline Var ali_forward_taped(Tape& tape, const TapedMlp& fnet, const Tensor& x0,
                             const Tensor& x1, const Tensor& t_clean, const Tensor& t_for_f) {
  const std::size_t n = x0.rows(), d = x0.cols();
  if (t_clean.size() != n || t_for_f.size() != n)
    throw std::invalid_argument("ali_forward_taped: time column size mismatch");
  Tensor in({n, 2 * d + 1});
  Tensor skel({n, d});
  Tensor gate({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double t = t_clean[i];
    check_unit_time(t, "ali_forward_taped");
    for (std::size_t c = 0; c < d; ++c) {
      in.at(i, c) = x0.at(i, c);
      in.at(i, d + c) = x1.at(i, c);
      skel.at(i, c) = (1.0 - t) * x0.at(i, c) + t * x1.at(i, c);
    }
    in.at(i, 2 * d) = t_for_f[i];
    gate[i] = t * (1.0 - t);
  }
  Var f = forward(fnet, tape.leaf(in));
  return add(tape.leaf(skel), mul_colvec(f, tape.leaf(gate)));
}

// Natural cubic spline through K knots, fitted per dimension. Stores the
// second derivatives at the knots; evaluation picks the bracketing segment.
struct SplineInterpolant {
  std::vector<double> times;  // strictly increasing, size K
  Tensor knots;               // K x d
  Tensor m2;                  // K x d, second derivatives; zero in rows 0 and K-1

  std::size_t knot_count() const { return times.size(); }
  std::size_t dim() const { return knots.cols(); }
};

inline SplineInterpolant spline_fit(const Tensor& knots, const std::vector<double>& times) {
  const std::size_t k = times.size();
  if (k < 2) throw std::invalid_argument("spline_fit: need at least 2 knots");
  if (knots.rows() != k)
    throw std::invalid_argument("spline_fit: knot rows " + std::to_string(knots.rows()) +
                                " != times " + std::to_string(k));
  for (std::size_t i = 0; i + 1 < k; ++i)
    if (!(times[i] < times[i + 1]))
      throw std::invalid_argument("spline_fit: times must be strictly increasing");

  SplineInterpolant s;
  s.times = times;
  s.knots = knots;
  s.m2 = Tensor({k, knots.cols()});
  if (k == 2) return s;  // no interior knots: straight line

  // Thomas solve of the interior tridiagonal system, one pass shared by all
  // dimensions since the matrix depends only on the time grid.
  const std::size_t m = k - 2;
  std::vector<double> diag(m), lower(m), upper(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double h0 = times[i + 1] - times[i];
    const double h1 = times[i + 2] - times[i + 1];
    lower[i] = h0 / 6.0;
    diag[i] = (h0 + h1) / 3.0;
    upper[i] = h1 / 6.0;
  }
  std::vector<double> cp(m);
  const std::size_t d = knots.cols();
  std::vector<double> rhs(m), sol(m);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < m; ++i) {
      const double h0 = times[i + 1] - times[i];
      const double h1 = times[i + 2] - times[i + 1];
      rhs[i] = (knots.at(i + 2, c) - knots.at(i + 1, c)) / h1 -
               (knots.at(i + 1, c) - knots.at(i, c)) / h0;
    }
    cp[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for (std::size_t i = 1; i < m; ++i) {
      const double w = diag[i] - lower[i] * cp[i - 1];
      cp[i] = upper[i] / w;
      rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / w;
    }
    sol[m - 1] = rhs[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) sol[i] = rhs[i] - cp[i] * sol[i + 1];
    for (std::size_t i = 0; i < m; ++i) s.m2.at(i + 1, c) = sol[i];
  }
  return s;
}

namespace detail {
inline std::size_t spline_segment(const SplineInterpolant& s, double t) {
  // first segment whose right end is >= t; ends extrapolate their cubic
  std::size_t j = 0;
  while (j + 2 < s.times.size() && t > s.times[j + 1]) ++j;
  return j;
}
}  // namespace detail

inline Tensor spline_eval(const SplineInterpolant& s, double t) {
  const std::size_t j = detail::spline_segment(s, t);
  const double h = s.times[j + 1] - s.times[j];
  const double a = (s.times[j + 1] - t) / h;
  const double b = (t - s.times[j]) / h;
  Tensor out({1, s.dim()});
  for (std::size_t c = 0; c < s.dim(); ++c) {
    const double y0 = s.knots.at(j, c), y1 = s.knots.at(j + 1, c);
    const double m0 = s.m2.at(j, c), m1 = s.m2.at(j + 1, c);
    out.at(0, c) = a * y0 + b * y1 +
                   ((a * a * a - a) * m0 + (b * b * b - b) * m1) * (h * h) / 6.0;
  }
  return out;
}

inline Tensor spline_deriv(const SplineInterpolant& s, double t) {
  const std::size_t j = detail::spline_segment(s, t);
  const double h = s.times[j + 1] - s.times[j];
  const double a = (s.times[j + 1] - t) / h;
  const double b = (t - s.times[j]) / h;
  Tensor out({1, s.dim()});
  for (std::size_t c = 0; c < s.dim(); ++c) {
    const double y0 = s.knots.at(j, c), y1 = s.knots.at(j + 1, c);
    const double m0 = s.m2.at(j, c), m1 = s.m2.at(j + 1, c);
    out.at(0, c) = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 +
                   (3.0 * b * b - 1.0) * h * m1 / 6.0;
  }
  return out;
}

}  // namespace ali
