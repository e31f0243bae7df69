#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ali/coupling.hpp"
#include "ali/rng.hpp"
#include "ali/tensor.hpp"

namespace ali {

// Per-dimension affine map x -> (x - shift) / scale used for min-max scaling.
// An empty record means the coordinates are raw.
struct NormRecord {
  std::vector<double> shift;
  std::vector<double> scale;

  bool empty() const { return shift.empty(); }
};

// Ordered time-stamped marginals q_{t_1}, ..., q_{t_K} with times in [0, 1].
struct MarginalDataset {
  std::vector<double> times;
  std::vector<Batch> batches;
  NormRecord norm;  // set while coordinates are normalised

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return batches.empty() ? 0 : batches.front().dim(); }
};

// Full datasets pin t_1 = 0 and t_K = 1; evaluation slices over a subset of
// times pass require_endpoints = false.
inline void validate_dataset(const MarginalDataset& ds, const char* who,
                             bool require_endpoints = true) {
  if (ds.times.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
  if (ds.times.size() != ds.batches.size())
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(ds.times.size()) +
                                " times vs " + std::to_string(ds.batches.size()) + " batches");
  const std::size_t d = ds.batches.front().dim();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    validate_batch(ds.batches[i], who);
    if (ds.batches[i].dim() != d)
      throw std::invalid_argument(std::string(who) + ": inconsistent dimension at slice " +
                                  std::to_string(i));
    if (!(ds.times[i] >= 0.0 && ds.times[i] <= 1.0))
      throw std::invalid_argument(std::string(who) + ": time " + std::to_string(ds.times[i]) +
                                  " outside [0,1]");
    if (i > 0 && !(ds.times[i - 1] < ds.times[i]))
      throw std::invalid_argument(std::string(who) + ": times not strictly increasing");
  }
  if (require_endpoints && ds.size() >= 2 &&
      (ds.times.front() != 0.0 || ds.times.back() != 1.0))
    throw std::invalid_argument(std::string(who) + ": times must start at 0 and end at 1");
  if (!ds.norm.empty() && (ds.norm.shift.size() != d || ds.norm.scale.size() != d))
    throw std::invalid_argument(std::string(who) + ": normalisation record has wrong dimension");
}

// 2D knot benchmark: K Gaussian marginals whose means trace two tanh ramps
// joined by a full loop over the middle third of the time range.
struct KnotSpec {
  std::size_t marginals = 1200;  // K, must be a multiple of 3
  std::size_t samples = 10;      // per marginal
  double sigma = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (marginals == 0 || marginals % 3 != 0)
      throw std::invalid_argument("KnotSpec: marginal count " + std::to_string(marginals) +
                                  " must be a positive multiple of 3");
    if (samples == 0) throw std::invalid_argument("KnotSpec: need at least one sample");
    if (!(sigma > 0.0)) throw std::invalid_argument("KnotSpec: sigma must be > 0");
  }
};

// Mean of the knot curve at shifted time u = t - 1.5 (raw time t in [0, 3]),
// on segment 1, 2 or 3. Segment membership goes by marginal index thirds, not
// by u, and the curve jumps where the loop attaches; both are intentional.
inline std::pair<double, double> knot_mean(double u, int segment) {
  switch (segment) {
    case 1:
      return {3.0 * (u + 0.5), -0.5 * std::tanh(5.0 * (u + 1.0)) + 0.5};
    case 2: {
      const double a = 2.0 * std::numbers::pi * (u - 0.75);
      return {std::cos(a), std::sin(a)};
    }
    case 3:
      return {3.0 * (u - 0.5), 0.5 * std::tanh(5.0 * (u - 1.0)) + 0.5};
    default:
      throw std::invalid_argument("knot_mean: segment must be 1, 2 or 3");
  }
}

inline MarginalDataset gen_knot(const KnotSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t k = spec.marginals;
  const std::size_t third = k / 3;
  MarginalDataset ds;
  ds.times.reserve(k);
  ds.batches.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double t_raw = 3.0 * static_cast<double>(j) / static_cast<double>(k - 1);
    const int segment = j < third ? 1 : (j < 2 * third ? 2 : 3);
    const auto [mx, my] = knot_mean(t_raw - 1.5, segment);
    Batch b;
    b.time = t_raw / 3.0;
    b.points = Tensor({spec.samples, 2});
    for (std::size_t s = 0; s < spec.samples; ++s) {
      b.points.at(s, 0) = rng.normal(mx, spec.sigma);
      b.points.at(s, 1) = rng.normal(my, spec.sigma);
    }
    ds.times.push_back(t_raw / 3.0);
    ds.batches.push_back(std::move(b));
  }
  validate_dataset(ds, "gen_knot");
  return ds;
}

// Isotropic Gaussian marginals at equally spaced times, one mean per slice.
// sigma = 0 gives deterministic atoms, handy for solver sanity checks.
inline MarginalDataset gen_gaussian_sequence(const std::vector<std::vector<double>>& means,
                                             double sigma, std::size_t samples,
                                             std::uint64_t seed) {
  if (means.empty()) throw std::invalid_argument("gen_gaussian_sequence: no means");
  if (samples == 0) throw std::invalid_argument("gen_gaussian_sequence: need at least one sample");
  if (!(sigma >= 0.0)) throw std::invalid_argument("gen_gaussian_sequence: sigma must be >= 0");
  const std::size_t d = means.front().size();
  if (d == 0) throw std::invalid_argument("gen_gaussian_sequence: zero-dimensional mean");
  for (const auto& m : means)
    if (m.size() != d)
      throw std::invalid_argument("gen_gaussian_sequence: inconsistent mean dimensions");
  const std::size_t k = means.size();
  Rng rng(seed);
  MarginalDataset ds;
  ds.times.reserve(k);
  ds.batches.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double t = k == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(k - 1);
    Batch b;
    b.time = t;
    b.points = Tensor({samples, d});
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t c = 0; c < d; ++c) b.points.at(s, c) = rng.normal(means[j][c], sigma);
    ds.times.push_back(t);
    ds.batches.push_back(std::move(b));
  }
  validate_dataset(ds, "gen_gaussian_sequence");
  return ds;
}

enum class EmdCost { Euclidean, SqEuclidean };

inline const char* emd_cost_name(EmdCost c) {
  return c == EmdCost::Euclidean ? "euclidean" : "sqeuclidean";
}

inline EmdCost emd_cost_from_name(const std::string& s) {
  if (s == "euclidean") return EmdCost::Euclidean;
  if (s == "sqeuclidean") return EmdCost::SqEuclidean;
  throw std::invalid_argument("unknown emd cost '" + s + "'");
}

namespace detail {

inline Tensor emd_cost_matrix(const Batch& a, const Batch& b, EmdCost cost) {
  if (cost == EmdCost::SqEuclidean) return sq_cost_matrix(a, b);
  Tensor c({a.size(), b.size()});
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c.at(i, j) = dist_rows(a.points, i, b.points, j);
  return c;
}

// Strict ordering on batches (size, then dim, then coordinates) used to pick
// a canonical argument order, so emd(a, b) and emd(b, a) run the identical
// arithmetic and agree bit for bit.
inline bool batch_precedes(const Batch& a, const Batch& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  if (a.dim() != b.dim()) return a.dim() < b.dim();
  return std::lexicographical_compare(a.points.data.begin(), a.points.data.end(),
                                      b.points.data.begin(), b.points.data.end());
}

// Balanced transport between uniform weights 1/n0 and 1/n1 as a min-cost flow
// with integer supplies L/n0 and demands L/n1, L = lcm(n0, n1), solved by
// successive shortest augmenting paths with node potentials. Returns the cost
// per unit mass.
inline double transport_lp(const Tensor& c, std::size_t n0, std::size_t n1) {
  for (double v : c.data)
    if (!std::isfinite(v)) throw std::invalid_argument("emd: non-finite cost entry");
  const long long big = static_cast<long long>(std::lcm(n0, n1));
  std::vector<long long> sup(n0, big / static_cast<long long>(n0));
  std::vector<long long> dem(n1, big / static_cast<long long>(n1));
  std::vector<long long> flow(n0 * n1, 0);
  const std::size_t nv = n0 + n1;  // sources 0..n0-1, sinks n0..n0+n1-1
  std::vector<double> pot(nv, 0.0), dist(nv);
  std::vector<std::size_t> parent(nv);
  std::vector<char> done(nv);
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t none = std::numeric_limits<std::size_t>::max();

  long long shipped = 0;
  while (shipped < big) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), none);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n0; ++i)
      if (sup[i] > 0) dist[i] = 0.0;
    // dense Dijkstra on the bipartite residual graph, reduced costs kept
    // nonnegative by the potentials
    for (;;) {
      std::size_t u = none;
      double best = inf;
      for (std::size_t v = 0; v < nv; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u == none) break;
      done[u] = 1;
      // never relax into settled nodes: flow-carrying arcs are tight, and
      // roundoff in the reduced costs could otherwise re-parent a settled
      // node and knot the path tree into a cycle
      if (u < n0) {
        for (std::size_t j = 0; j < n1; ++j) {
          if (done[n0 + j]) continue;
          const double nd = dist[u] + c.at(u, j) + pot[u] - pot[n0 + j];
          if (nd < dist[n0 + j]) {
            dist[n0 + j] = nd;
            parent[n0 + j] = u;
          }
        }
      } else {
        const std::size_t j = u - n0;
        for (std::size_t i = 0; i < n0; ++i) {
          if (done[i] || flow[i * n1 + j] <= 0) continue;
          const double nd = dist[u] - c.at(i, j) + pot[u] - pot[i];
          if (nd < dist[i]) {
            dist[i] = nd;
            parent[i] = u;
          }
        }
      }
    }
    std::size_t jt = none;
    double bestd = inf;
    for (std::size_t j = 0; j < n1; ++j)
      if (dem[j] > 0 && dist[n0 + j] < bestd) {
        bestd = dist[n0 + j];
        jt = j;
      }
    if (jt == none) throw std::runtime_error("emd: transport solver failed to route all mass");
    for (std::size_t v = 0; v < nv; ++v)
      if (dist[v] < inf) pot[v] += std::min(dist[v], bestd);
    // the augmenting path alternates sink <- source <- sink ... up to a
    // source with spare supply; bottleneck, then apply
    long long delta = dem[jt];
    for (std::size_t j = jt;;) {
      const std::size_t i = parent[n0 + j];
      if (parent[i] == none) {
        delta = std::min(delta, sup[i]);
        break;
      }
      const std::size_t j2 = parent[i] - n0;
      delta = std::min(delta, flow[i * n1 + j2]);
      j = j2;
    }
    for (std::size_t j = jt;;) {
      const std::size_t i = parent[n0 + j];
      flow[i * n1 + j] += delta;
      if (parent[i] == none) {
        sup[i] -= delta;
        break;
      }
      const std::size_t j2 = parent[i] - n0;
      flow[i * n1 + j2] -= delta;
      j = j2;
    }
    dem[jt] -= delta;
    shipped += delta;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      if (flow[i * n1 + j] > 0) total += static_cast<double>(flow[i * n1 + j]) * c.at(i, j);
  return total / static_cast<double>(big);
}

}  // namespace detail

// Exact optimal transport cost between uniform empirical measures. Equal
// sizes reduce to an assignment; unequal sizes solve the balanced LP.
inline double emd(const Batch& a, const Batch& b, EmdCost cost = EmdCost::Euclidean) {
  validate_batch(a, "emd");
  validate_batch(b, "emd");
  if (a.dim() != b.dim())
    throw std::invalid_argument("emd: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                                std::to_string(b.dim()));
  if (a.size() > kAssignmentCap || b.size() > kAssignmentCap)
    throw std::invalid_argument("emd: batch exceeds exact-solver cap " +
                                std::to_string(kAssignmentCap) + " (use sinkhorn)");
  if (detail::batch_precedes(b, a)) return emd(b, a, cost);
  const Tensor c = detail::emd_cost_matrix(a, b, cost);
  if (a.size() == b.size()) {
    const std::vector<std::size_t> perm = hungarian(c);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += c.at(i, perm[i]);
    return s / static_cast<double>(a.size());
  }
  return detail::transport_lp(c, a.size(), b.size());
}

inline void apply_norm(Tensor& pts, const NormRecord& rec) {
  for (std::size_t i = 0; i < pts.rows(); ++i)
    for (std::size_t c = 0; c < pts.cols(); ++c)
      pts.at(i, c) = (pts.at(i, c) - rec.shift[c]) / rec.scale[c];
}

inline void apply_denorm(Tensor& pts, const NormRecord& rec) {
  for (std::size_t i = 0; i < pts.rows(); ++i)
    for (std::size_t c = 0; c < pts.cols(); ++c)
      pts.at(i, c) = pts.at(i, c) * rec.scale[c] + rec.shift[c];
}

// Min-max scale every dimension to [0, 1] across all slices. Degenerate
// dimensions (max == min) shift only.
inline MarginalDataset normalise(const MarginalDataset& ds) {
  validate_dataset(ds, "normalise", false);
  if (!ds.norm.empty())
    throw std::invalid_argument("normalise: dataset already carries a normalisation record");
  const std::size_t d = ds.dim();
  NormRecord rec;
  rec.shift.assign(d, std::numeric_limits<double>::infinity());
  rec.scale.assign(d, -std::numeric_limits<double>::infinity());
  for (const Batch& b : ds.batches)
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        rec.shift[c] = std::min(rec.shift[c], b.points.at(i, c));
        rec.scale[c] = std::max(rec.scale[c], b.points.at(i, c));
      }
  for (std::size_t c = 0; c < d; ++c) {
    rec.scale[c] -= rec.shift[c];
    if (!(rec.scale[c] > 0.0)) rec.scale[c] = 1.0;
  }
  MarginalDataset out = ds;
  for (Batch& b : out.batches) apply_norm(b.points, rec);
  out.norm = rec;
  return out;
}

inline MarginalDataset denormalise(const MarginalDataset& ds) {
  if (ds.norm.empty()) return ds;
  validate_dataset(ds, "denormalise", false);
  MarginalDataset out = ds;
  for (Batch& b : out.batches) apply_denorm(b.points, ds.norm);
  out.norm = NormRecord{};
  return out;
}

struct EmdTable {
  std::vector<double> times;
  std::vector<double> values;
  double mean = 0.0;
};

// Per-time EMD of pushed batches against the reference marginals. Both sides
// are denormalised first, so the table reports original-coordinate costs.
inline EmdTable evaluate_marginals(const MarginalDataset& pushed, const MarginalDataset& reference,
                                   EmdCost cost = EmdCost::Euclidean) {
  validate_dataset(pushed, "evaluate_marginals", false);
  validate_dataset(reference, "evaluate_marginals", false);
  const MarginalDataset p = denormalise(pushed);
  const MarginalDataset r = denormalise(reference);
  EmdTable table;
  table.times = p.times;
  table.values.reserve(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::size_t at = r.size();
    for (std::size_t j = 0; j < r.size(); ++j)
      if (std::abs(r.times[j] - p.times[i]) <= 1e-12) {
        at = j;
        break;
      }
    if (at == r.size())
      throw std::invalid_argument("evaluate_marginals: time " + std::to_string(p.times[i]) +
                                  " has no reference marginal");
    const double v = emd(p.batches[i], r.batches[at], cost);
    table.values.push_back(v);
    sum += v;
  }
  table.mean = sum / static_cast<double>(p.size());
  return table;
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Dataset file format: header "t,x_1,..,x_d", one row per sample, 17
// significant digits so doubles round-trip bit-faithfully.
inline void write_dataset_csv(const MarginalDataset& ds, const std::string& path) {
  validate_dataset(ds, "write_dataset_csv", false);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out << "t";
  for (std::size_t c = 0; c < ds.dim(); ++c) out << ",x_" << c + 1;
  out << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string t = detail::format_g17(ds.times[i]);
    const Batch& b = ds.batches[i];
    for (std::size_t s = 0; s < b.size(); ++s) {
      out << t;
      for (std::size_t c = 0; c < b.dim(); ++c)
        out << ',' << detail::format_g17(b.points.at(s, c));
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("write_dataset_csv: write failed for " + path);
}

inline MarginalDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
  std::size_t d = 0;
  for (char ch : line)
    if (ch == ',') ++d;
  if (d == 0 || line.rfind("t,", 0) != 0)
    throw std::runtime_error("read_dataset_csv: bad header '" + line + "' in " + path);

  MarginalDataset ds;
  std::vector<std::vector<double>> rows;  // rows of the current slice
  double cur_t = 0.0;
  auto flush = [&]() {
    if (rows.empty()) return;
    Batch b;
    b.time = cur_t;
    b.points = Tensor({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) b.points.at(i, c) = rows[i][c];
    ds.times.push_back(cur_t);
    ds.batches.push_back(std::move(b));
    rows.clear();
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    vals.reserve(d + 1);
    const char* p = line.c_str();
    for (;;) {
      char* end = nullptr;
      vals.push_back(std::strtod(p, &end));
      if (end == p)
        throw std::runtime_error("read_dataset_csv: parse error at " + path + ":" +
                                 std::to_string(lineno));
      p = end;
      if (*p == ',') {
        ++p;
      } else if (*p == '\0' || *p == '\r') {
        break;
      } else {
        throw std::runtime_error("read_dataset_csv: parse error at " + path + ":" +
                                 std::to_string(lineno));
      }
    }
    if (vals.size() != d + 1)
      throw std::runtime_error("read_dataset_csv: expected " + std::to_string(d + 1) +
                               " columns at " + path + ":" + std::to_string(lineno));
    if (rows.empty()) {
      cur_t = vals[0];
    } else if (vals[0] != cur_t) {
      flush();
      cur_t = vals[0];
    }
    rows.push_back(std::vector<double>(vals.begin() + 1, vals.end()));
  }
  flush();
  if (ds.times.empty()) throw std::runtime_error("read_dataset_csv: no data rows in " + path);
  validate_dataset(ds, "read_dataset_csv", false);
  return ds;
}

}  // namespace ali
