#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ali/rng.hpp"
#include "ali/tensor.hpp"

namespace ali {

// A weighted point cloud at one time slice.
struct Batch {
  Tensor points;  // n x d
  std::optional<double> time;

  std::size_t size() const { return points.rows(); }
  std::size_t dim() const { return points.cols(); }
};

inline void validate_batch(const Batch& b, const char* who) {
  if (b.points.rows() == 0)
    throw std::invalid_argument(std::string(who) + ": empty batch");
  if (!b.points.all_finite())
    throw std::invalid_argument(std::string(who) + ": non-finite coordinates");
}

struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;
};

// Discrete coupling: index pairs with weights summing to 1. Permutation plans
// have n pairs of weight 1/n; dense plans (sinkhorn) enumerate all cells.
struct Pairing {
  std::vector<IndexPair> pairs;
  std::vector<double> weights;

  std::size_t size() const { return pairs.size(); }
};

struct ChainedTriple {
  std::size_t i0 = 0;
  std::size_t it = 0;
  std::size_t i1 = 0;
  double weight = 0.0;
};

inline constexpr std::size_t kAssignmentCap = 4096;

// Exact min-cost assignment on a square cost matrix, O(n^3) with potentials.
// Returns row -> column. Deterministic: scans ascending so equal candidates
// resolve to the lowest index.
inline std::vector<std::size_t> hungarian(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (n == 0 || cost.cols() != n)
    throw std::invalid_argument("hungarian: cost matrix must be square and nonempty, got " +
                                cost.shape_str());
  if (n > kAssignmentCap)
    throw std::invalid_argument("hungarian: size " + std::to_string(n) + " exceeds cap " +
                                std::to_string(kAssignmentCap));
  // an infinite entry poisons the potentials and the search never terminates
  for (double v : cost.data)
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian: non-finite cost entry");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] = row assigned to column j
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

inline Tensor sq_cost_matrix(const Batch& a, const Batch& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("cost matrix: dimension mismatch " + a.points.shape_str() +
                                " vs " + b.points.shape_str());
  Tensor c({a.size(), b.size()});
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      c.at(i, j) = sq_dist_rows(a.points, i, b.points, j);
  return c;
}

inline double pairing_cost(const Batch& b0, const Batch& b1, const Pairing& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    s += p.weights[k] * sq_dist_rows(b0.points, p.pairs[k].i, b1.points, p.pairs[k].j);
  return s;
}

// Pairs drawn uniformly and independently, as if from q0 x q1.
inline Pairing independent_coupling(const Batch& b0, const Batch& b1, std::size_t m, Rng& rng) {
  validate_batch(b0, "independent_coupling");
  validate_batch(b1, "independent_coupling");
  if (m == 0 || m > b0.size() * b1.size())
    throw std::invalid_argument("independent_coupling: batch size " + std::to_string(m) +
                                " out of range for " + std::to_string(b0.size()) + "x" +
                                std::to_string(b1.size()) + " pairs");
  Pairing p;
  p.pairs.reserve(m);
  p.weights.assign(m, 1.0 / static_cast<double>(m));
  for (std::size_t k = 0; k < m; ++k)
    p.pairs.push_back({rng.uniform_index(b0.size()), rng.uniform_index(b1.size())});
  return p;
}

// Exact squared-Euclidean assignment between equal-sized batches.
inline Pairing minibatch_ot(const Batch& b0, const Batch& b1) {
  validate_batch(b0, "minibatch_ot");
  validate_batch(b1, "minibatch_ot");
  if (b0.size() != b1.size())
    throw std::invalid_argument("minibatch_ot: unequal sizes " + std::to_string(b0.size()) +
                                " vs " + std::to_string(b1.size()) + " (use sinkhorn)");
  const std::vector<std::size_t> perm = hungarian(sq_cost_matrix(b0, b1));
  Pairing p;
  const std::size_t n = b0.size();
  p.pairs.reserve(n);
  p.weights.assign(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) p.pairs.push_back({i, perm[i]});
  return p;
}

struct SinkhornResult {
  Pairing plan;
  bool converged = false;
  std::size_t iters_used = 0;
};

// Entropic OT in the log domain; handles small epsilon without overflow.
// Uniform marginals 1/n0 and 1/n1.
inline SinkhornResult sinkhorn(const Batch& b0, const Batch& b1, double epsilon,
                               std::size_t iters = 10000, double tol = 1e-9) {
  validate_batch(b0, "sinkhorn");
  validate_batch(b1, "sinkhorn");
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  const std::size_t n0 = b0.size(), n1 = b1.size();
  const Tensor c = sq_cost_matrix(b0, b1);
  const double la = std::log(1.0 / static_cast<double>(n0));
  const double lb = std::log(1.0 / static_cast<double>(n1));
  std::vector<double> f(n0, 0.0), g(n1, 0.0);

  auto lse_row = [&](std::size_t i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n1; ++j) mx = std::max(mx, (g[j] - c.at(i, j)) / epsilon);
    double s = 0.0;
    for (std::size_t j = 0; j < n1; ++j) s += std::exp((g[j] - c.at(i, j)) / epsilon - mx);
    return mx + std::log(s);
  };
  auto lse_col = [&](std::size_t j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n0; ++i) mx = std::max(mx, (f[i] - c.at(i, j)) / epsilon);
    double s = 0.0;
    for (std::size_t i = 0; i < n0; ++i) s += std::exp((f[i] - c.at(i, j)) / epsilon - mx);
    return mx + std::log(s);
  };

  SinkhornResult res;
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n0; ++i) f[i] = epsilon * (la - lse_row(i));
    for (std::size_t j = 0; j < n1; ++j) g[j] = epsilon * (lb - lse_col(j));
    res.iters_used = it + 1;
    // after a column update the column marginals are exact; check rows
    double viol = 0.0;
    for (std::size_t i = 0; i < n0; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n1; ++j)
        row += std::exp((f[i] + g[j] - c.at(i, j)) / epsilon);
      viol = std::max(viol, std::abs(row - 1.0 / static_cast<double>(n0)));
    }
    if (viol <= tol) {
      res.converged = true;
      break;
    }
  }
  res.plan.pairs.reserve(n0 * n1);
  res.plan.weights.reserve(n0 * n1);
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j) {
      res.plan.pairs.push_back({i, j});
      res.plan.weights.push_back(std::exp((f[i] + g[j] - c.at(i, j)) / epsilon));
    }
  return res;
}

namespace detail {
// Uniform subsample without replacement, returned sorted for reproducibility.
inline Batch subsample(const Batch& b, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t r = k + rng.uniform_index(idx.size() - k);
    std::swap(idx[k], idx[r]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  Batch out;
  out.time = b.time;
  out.points = Tensor({m, b.dim()});
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t c = 0; c < b.dim(); ++c) out.points.at(k, c) = b.points.at(idx[k], c);
  return out;
}
}  // namespace detail

// Triples (x0, x_t, x1) from composing the OT permutations of the two legs.
// Unequal sizes are subsampled down to the smallest batch, which needs an rng.
inline std::vector<ChainedTriple> markov_chain_coupling(const Batch& b0, const Batch& bt,
                                                        const Batch& b1, Rng* rng = nullptr) {
  validate_batch(b0, "markov_chain_coupling");
  validate_batch(bt, "markov_chain_coupling");
  validate_batch(b1, "markov_chain_coupling");
  const std::size_t n = std::min({b0.size(), bt.size(), b1.size()});
  Batch s0 = b0, st = bt, s1 = b1;
  if (b0.size() != n || bt.size() != n || b1.size() != n) {
    if (!rng)
      throw std::invalid_argument("markov_chain_coupling: unequal sizes need an rng to subsample");
    if (b0.size() != n) s0 = detail::subsample(b0, n, *rng);
    if (bt.size() != n) st = detail::subsample(bt, n, *rng);
    if (b1.size() != n) s1 = detail::subsample(b1, n, *rng);
  }
  const Pairing leg0 = minibatch_ot(s0, st);
  const Pairing leg1 = minibatch_ot(st, s1);
  std::vector<std::size_t> sigma1(n);
  for (const IndexPair& pr : leg1.pairs) sigma1[pr.i] = pr.j;
  std::vector<ChainedTriple> out;
  out.reserve(n);
  for (const IndexPair& pr : leg0.pairs)
    out.push_back({pr.i, pr.j, sigma1[pr.j], 1.0 / static_cast<double>(n)});
  return out;
}

// K-tuples by composing consecutive pairwise OT permutations along the chain.
inline std::vector<std::vector<std::size_t>> multi_marginal_chain(const std::vector<Batch>& batches,
                                                                 Rng* rng = nullptr) {
  if (batches.size() < 2)
    throw std::invalid_argument("multi_marginal_chain: need at least 2 batches");
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const Batch& b : batches) {
    validate_batch(b, "multi_marginal_chain");
    n = std::min(n, b.size());
  }
  std::vector<Batch> subs;
  subs.reserve(batches.size());
  for (const Batch& b : batches) {
    if (b.size() == n) {
      subs.push_back(b);
    } else {
      if (!rng)
        throw std::invalid_argument("multi_marginal_chain: unequal sizes need an rng to subsample");
      subs.push_back(detail::subsample(b, n, *rng));
    }
  }
  std::vector<std::vector<std::size_t>> tuples(n, std::vector<std::size_t>(batches.size()));
  for (std::size_t i = 0; i < n; ++i) tuples[i][0] = i;
  for (std::size_t k = 0; k + 1 < subs.size(); ++k) {
    const Pairing leg = minibatch_ot(subs[k], subs[k + 1]);
    std::vector<std::size_t> sigma(n);
    for (const IndexPair& pr : leg.pairs) sigma[pr.i] = pr.j;
    for (std::size_t i = 0; i < n; ++i) tuples[i][k + 1] = sigma[tuples[i][k]];
  }
  return tuples;
}

// For each coupled pair, the q_t atom its straight-line point maps to under
// the optimal joint assignment: exact OT between the line cloud and q_t.
inline Pairing discrete_constrained_projection(const Pairing& pairs, const Batch& b0,
                                               const Batch& b1, double t,
                                               const Batch& qt_atoms) {
  validate_batch(b0, "discrete_constrained_projection");
  validate_batch(b1, "discrete_constrained_projection");
  validate_batch(qt_atoms, "discrete_constrained_projection");
  if (!(t > 0.0 && t < 1.0))
    throw std::invalid_argument("discrete_constrained_projection: t must lie in (0,1)");
  if (pairs.size() != qt_atoms.size())
    throw std::invalid_argument("discrete_constrained_projection: atom count mismatch " +
                                std::to_string(pairs.size()) + " vs " +
                                std::to_string(qt_atoms.size()));
  const std::size_t d = b0.dim();
  Batch line;
  line.points = Tensor({pairs.size(), d});
  for (std::size_t k = 0; k < pairs.size(); ++k)
    for (std::size_t c = 0; c < d; ++c)
      line.points.at(k, c) = (1.0 - t) * b0.points.at(pairs.pairs[k].i, c) +
                             t * b1.points.at(pairs.pairs[k].j, c);
  return minibatch_ot(line, qt_atoms);
}

}  // namespace ali
