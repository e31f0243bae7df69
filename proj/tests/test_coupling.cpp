#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ali/coupling.hpp"
#include "ali/rng.hpp"

using namespace ali;

namespace {

Batch make_batch(std::vector<double> flat, std::size_t d) {
  Batch b;
  const std::size_t n = flat.size() / d;
  b.points = Tensor({n, d}, std::move(flat));
  return b;
}

Batch random_batch(Rng& rng, std::size_t n, std::size_t d, double spread = 1.0) {
  Batch b;
  b.points = Tensor({n, d});
  for (double& v : b.points.data) v = rng.normal(0.0, spread);
  return b;
}

// exhaustive assignment search; returns (best cost, best permutation)
std::pair<double, std::vector<std::size_t>> brute_force_assignment(const Tensor& cost) {
  const std::size_t n = cost.rows();
  std::vector<std::size_t> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost.at(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_cost, best};
}

double perm_cost(const Tensor& cost, const std::vector<std::size_t>& perm) {
  double c = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) c += cost.at(i, perm[i]);
  return c;
}

}  // namespace

TEST_CASE("hungarian solves the 2x2 example") {
  Tensor cost({2, 2}, {1, 2, 2, 1});
  const auto perm = hungarian(cost);
  REQUIRE(perm[0] == 0);
  REQUIRE(perm[1] == 1);
  REQUIRE(perm_cost(cost, perm) == 2.0);
}

TEST_CASE("hungarian matches brute force on random instances") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(5);  // up to 6
    Tensor cost({n, n});
    for (double& v : cost.data) v = rng.uniform(0.0, 10.0);
    const auto perm = hungarian(cost);
    const auto [bc, bp] = brute_force_assignment(cost);
    REQUIRE(perm_cost(cost, perm) == Catch::Approx(bc).epsilon(1e-12));
  }
}

TEST_CASE("hungarian rejects bad input") {
  REQUIRE_THROWS_AS(hungarian(Tensor({2, 3})), std::invalid_argument);
}

TEST_CASE("independent coupling basics") {
  Batch a = make_batch({1.0}, 1), b = make_batch({2.0}, 1);
  Rng rng(1);
  Pairing p = independent_coupling(a, b, 1, rng);
  REQUIRE(p.size() == 1);
  REQUIRE(p.pairs[0].i == 0);
  REQUIRE(p.pairs[0].j == 0);
  REQUIRE(p.weights[0] == 1.0);

  REQUIRE_THROWS_AS(independent_coupling(a, b, 2, rng), std::invalid_argument);
}

TEST_CASE("independent coupling is seed-reproducible") {
  Rng r1(77), r2(77), rother(78);
  Batch a = make_batch({0, 1, 2, 3}, 1), b = make_batch({5, 6, 7}, 1);
  Pairing p1 = independent_coupling(a, b, 10, r1);
  Pairing p2 = independent_coupling(a, b, 10, r2);
  for (std::size_t k = 0; k < p1.size(); ++k) {
    REQUIRE(p1.pairs[k].i == p2.pairs[k].i);
    REQUIRE(p1.pairs[k].j == p2.pairs[k].j);
  }
  Pairing p3 = independent_coupling(a, b, 10, rother);
  bool differs = false;
  for (std::size_t k = 0; k < p1.size(); ++k)
    differs = differs || p1.pairs[k].i != p3.pairs[k].i || p1.pairs[k].j != p3.pairs[k].j;
  REQUIRE(differs);
}

TEST_CASE("independent coupling pair frequencies are uniform") {
  Rng rng(2025);
  Batch a = make_batch({0, 1, 2}, 1), b = make_batch({0, 1, 2, 3}, 1);
  const std::size_t cells = 12, draws = 100000;
  std::vector<std::size_t> count(cells, 0);
  for (std::size_t rep = 0; rep < draws / 4; ++rep) {
    Pairing p = independent_coupling(a, b, 4, rng);
    for (const IndexPair& pr : p.pairs) count[pr.i * 4 + pr.j]++;
  }
  const double expect = static_cast<double>(draws) / cells;
  const double sigma = std::sqrt(draws * (1.0 / cells) * (1.0 - 1.0 / cells));
  for (std::size_t c = 0; c < cells; ++c)
    REQUIRE(std::abs(static_cast<double>(count[c]) - expect) <= 3.0 * sigma);
}

TEST_CASE("minibatch ot identity on equal batches") {
  Batch b = make_batch({0, 0, 1, 0, 0, 1, 2, 2}, 2);
  Pairing p = minibatch_ot(b, b);
  for (std::size_t k = 0; k < p.size(); ++k) REQUIRE(p.pairs[k].i == p.pairs[k].j);
  REQUIRE(pairing_cost(b, b, p) == 0.0);
}

TEST_CASE("minibatch ot matches brute force on 6 points") {
  Rng rng(404);
  Batch b0 = random_batch(rng, 6, 2), b1 = random_batch(rng, 6, 2);
  Pairing p = minibatch_ot(b0, b1);
  const Tensor cost = sq_cost_matrix(b0, b1);
  const auto [bc, bp] = brute_force_assignment(cost);
  double got = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) got += cost.at(p.pairs[k].i, p.pairs[k].j);
  REQUIRE(got == Catch::Approx(bc).epsilon(1e-12));
  for (std::size_t k = 0; k < p.size(); ++k) REQUIRE(p.pairs[k].j == bp[p.pairs[k].i]);
}

TEST_CASE("minibatch ot rejects unequal sizes") {
  Batch a = make_batch({0, 1, 2}, 1), b = make_batch({0, 1}, 1);
  REQUIRE_THROWS_AS(minibatch_ot(a, b), std::invalid_argument);
}

TEST_CASE("minibatch ot cost is symmetric") {
  Rng rng(405);
  for (int trial = 0; trial < 10; ++trial) {
    Batch b0 = random_batch(rng, 8, 3), b1 = random_batch(rng, 8, 3);
    const double c01 = pairing_cost(b0, b1, minibatch_ot(b0, b1));
    const double c10 = pairing_cost(b1, b0, minibatch_ot(b1, b0));
    REQUIRE(c01 == Catch::Approx(c10).epsilon(1e-12));
  }
}

TEST_CASE("sinkhorn concentrates on the diagonal at small epsilon") {
  Batch b = make_batch({0, 5, 10}, 1);
  SinkhornResult res = sinkhorn(b, b, 1e-3, 20000);
  REQUIRE(res.converged);
  for (std::size_t k = 0; k < res.plan.size(); ++k) {
    const auto& pr = res.plan.pairs[k];
    if (pr.i == pr.j)
      REQUIRE(res.plan.weights[k] == Catch::Approx(1.0 / 3.0).margin(1e-3));
    else
      REQUIRE(res.plan.weights[k] <= 1e-3);
  }
}

TEST_CASE("sinkhorn gives the symmetric mix at large epsilon") {
  Batch a = make_batch({-1, 1}, 1), b = make_batch({-1, 1}, 1);
  SinkhornResult res = sinkhorn(a, b, 1e3, 1000);
  REQUIRE(res.converged);
  for (double w : res.plan.weights) REQUIRE(w == Catch::Approx(0.25).margin(1e-3));
}

TEST_CASE("sinkhorn marginals are uniform after convergence") {
  Rng rng(7);
  Batch b0 = random_batch(rng, 5, 2), b1 = random_batch(rng, 7, 2);
  SinkhornResult res = sinkhorn(b0, b1, 0.1, 10000);
  REQUIRE(res.converged);
  std::vector<double> row(5, 0.0), col(7, 0.0);
  for (std::size_t k = 0; k < res.plan.size(); ++k) {
    row[res.plan.pairs[k].i] += res.plan.weights[k];
    col[res.plan.pairs[k].j] += res.plan.weights[k];
  }
  for (double r : row) REQUIRE(std::abs(r - 1.0 / 5.0) <= 1e-6);
  for (double c : col) REQUIRE(std::abs(c - 1.0 / 7.0) <= 1e-6);
}

TEST_CASE("sinkhorn cost dominates exact ot and shrinks with epsilon") {
  Batch b0 = make_batch({0, 0, 1, 0, 0, 1, 1, 1}, 2);
  Batch b1 = make_batch({0.2, 0.1, 1.3, -0.1, 0.1, 1.2, 0.9, 1.1}, 2);
  const double exact = pairing_cost(b0, b1, minibatch_ot(b0, b1));
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {1.0, 0.1, 0.01}) {
    SinkhornResult res = sinkhorn(b0, b1, eps, 50000);
    const double c = pairing_cost(b0, b1, res.plan);
    REQUIRE(c >= exact - 1e-9);
    REQUIRE(c <= prev + 1e-9);
    prev = c;
  }
  REQUIRE(prev - exact <= 0.05 * std::max(1.0, exact));
}

TEST_CASE("markov chain coupling on identical batches is the identity") {
  Batch b = make_batch({0, 0, 3, 0, 0, 3}, 2);
  auto triples = markov_chain_coupling(b, b, b);
  REQUIRE(triples.size() == 3);
  for (const auto& tr : triples) {
    REQUIRE(tr.i0 == tr.it);
    REQUIRE(tr.it == tr.i1);
    REQUIRE(tr.weight == Catch::Approx(1.0 / 3.0));
  }
}

TEST_CASE("markov chain coupling composes the two brute-force legs") {
  Rng rng(11);
  Batch b0 = random_batch(rng, 3, 2), bt = random_batch(rng, 3, 2), b1 = random_batch(rng, 3, 2);
  auto triples = markov_chain_coupling(b0, bt, b1);
  const auto [c0, leg0] = brute_force_assignment(sq_cost_matrix(b0, bt));
  const auto [c1, leg1] = brute_force_assignment(sq_cost_matrix(bt, b1));
  for (const auto& tr : triples) {
    REQUIRE(tr.it == leg0[tr.i0]);
    REQUIRE(tr.i1 == leg1[tr.it]);
  }
}

TEST_CASE("markov chain coupling is order preserving on a line") {
  Batch b0 = make_batch({0, 1, 2, 3}, 1);
  Batch bt = make_batch({10, 11, 12, 13}, 1);
  Batch b1 = make_batch({20, 21, 22, 23}, 1);
  auto triples = markov_chain_coupling(b0, bt, b1);
  for (const auto& tr : triples) {
    REQUIRE(tr.it == tr.i0);
    REQUIRE(tr.i1 == tr.i0);
  }
}

TEST_CASE("chained triples project onto the two leg pairings") {
  Rng rng(12);
  Batch b0 = random_batch(rng, 7, 2), bt = random_batch(rng, 7, 2), b1 = random_batch(rng, 7, 2);
  auto triples = markov_chain_coupling(b0, bt, b1);
  Pairing leg0 = minibatch_ot(b0, bt), leg1 = minibatch_ot(bt, b1);
  std::vector<std::size_t> s0(7), s1(7);
  for (const IndexPair& pr : leg0.pairs) s0[pr.i] = pr.j;
  for (const IndexPair& pr : leg1.pairs) s1[pr.i] = pr.j;
  for (const auto& tr : triples) {
    REQUIRE(tr.it == s0[tr.i0]);
    REQUIRE(tr.i1 == s1[tr.it]);
  }
}

TEST_CASE("markov chain coupling subsamples unequal batches") {
  Rng rng(13);
  Batch b0 = random_batch(rng, 9, 2), bt = random_batch(rng, 5, 2), b1 = random_batch(rng, 7, 2);
  REQUIRE_THROWS_AS(markov_chain_coupling(b0, bt, b1), std::invalid_argument);
  Rng sub(14);
  auto triples = markov_chain_coupling(b0, bt, b1, &sub);
  REQUIRE(triples.size() == 5);
  for (const auto& tr : triples) {
    REQUIRE(tr.i0 < 5);
    REQUIRE(tr.it < 5);
    REQUIRE(tr.i1 < 5);
    REQUIRE(tr.weight == Catch::Approx(0.2));
  }
}

TEST_CASE("multi marginal chain on identical batches is the identity") {
  Batch b = make_batch({0, 1, 2, 3}, 1);
  auto tuples = multi_marginal_chain({b, b, b, b});
  for (std::size_t i = 0; i < tuples.size(); ++i)
    for (std::size_t k = 0; k < 4; ++k) REQUIRE(tuples[i][k] == i);
}

TEST_CASE("multi marginal chain with two batches reduces to minibatch ot") {
  Rng rng(15);
  Batch b0 = random_batch(rng, 6, 2), b1 = random_batch(rng, 6, 2);
  auto tuples = multi_marginal_chain({b0, b1});
  Pairing p = minibatch_ot(b0, b1);
  std::vector<std::size_t> sigma(6);
  for (const IndexPair& pr : p.pairs) sigma[pr.i] = pr.j;
  for (const auto& tup : tuples) REQUIRE(tup[1] == sigma[tup[0]]);
}

TEST_CASE("multi marginal chain composes brute-force legs on 3 marginals") {
  Rng rng(16);
  Batch a = random_batch(rng, 3, 2), b = random_batch(rng, 3, 2), c = random_batch(rng, 3, 2);
  auto tuples = multi_marginal_chain({a, b, c});
  const auto [ca, leg0] = brute_force_assignment(sq_cost_matrix(a, b));
  const auto [cb, leg1] = brute_force_assignment(sq_cost_matrix(b, c));
  for (const auto& tup : tuples) {
    REQUIRE(tup[1] == leg0[tup[0]]);
    REQUIRE(tup[2] == leg1[tup[1]]);
  }
}

TEST_CASE("constrained projection is the identity on its own line cloud") {
  Rng rng(17);
  Batch b0 = random_batch(rng, 5, 2), b1 = random_batch(rng, 5, 2);
  Pairing pairs = minibatch_ot(b0, b1);
  const double t = 0.4;
  Batch line;
  line.points = Tensor({5, 2});
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t c = 0; c < 2; ++c)
      line.points.at(k, c) =
          (1 - t) * b0.points.at(pairs.pairs[k].i, c) + t * b1.points.at(pairs.pairs[k].j, c);
  Pairing proj = discrete_constrained_projection(pairs, b0, b1, t, line);
  double cost = 0.0;
  for (std::size_t k = 0; k < proj.size(); ++k) {
    REQUIRE(proj.pairs[k].i == proj.pairs[k].j);
    cost += sq_dist_rows(line.points, proj.pairs[k].i, line.points, proj.pairs[k].j);
  }
  REQUIRE(cost == 0.0);
}

TEST_CASE("constrained projection beats every enumerated assignment") {
  Rng rng(18);
  Batch b0 = random_batch(rng, 4, 2), b1 = random_batch(rng, 4, 2);
  Batch qt = random_batch(rng, 4, 2);
  Pairing pairs = minibatch_ot(b0, b1);
  const double t = 0.3;
  Batch line;
  line.points = Tensor({4, 2});
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 2; ++c)
      line.points.at(k, c) =
          (1 - t) * b0.points.at(pairs.pairs[k].i, c) + t * b1.points.at(pairs.pairs[k].j, c);

  Pairing proj = discrete_constrained_projection(pairs, b0, b1, t, qt);
  double proj_cost = 0.0;
  for (std::size_t k = 0; k < proj.size(); ++k)
    proj_cost += sq_dist_rows(line.points, proj.pairs[k].i, qt.points, proj.pairs[k].j);

  const Tensor cost = sq_cost_matrix(line, qt);
  std::vector<std::size_t> perm(4);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    REQUIRE(proj_cost <= perm_cost(cost, perm) + 1e-12);
  } while (std::next_permutation(perm.begin(), perm.end()));
  const auto [bc, bp] = brute_force_assignment(cost);
  REQUIRE(proj_cost == Catch::Approx(bc).epsilon(1e-12));
}

TEST_CASE("constrained projection cost equals the assignment solver cost") {
  Rng rng(19);
  Batch b0 = random_batch(rng, 5, 3), b1 = random_batch(rng, 5, 3), qt = random_batch(rng, 5, 3);
  Pairing pairs = minibatch_ot(b0, b1);
  const double t = 0.7;
  Batch line;
  line.points = Tensor({5, 3});
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      line.points.at(k, c) =
          (1 - t) * b0.points.at(pairs.pairs[k].i, c) + t * b1.points.at(pairs.pairs[k].j, c);
  Pairing proj = discrete_constrained_projection(pairs, b0, b1, t, qt);
  double proj_cost = 0.0;
  for (std::size_t k = 0; k < proj.size(); ++k)
    proj_cost += sq_dist_rows(line.points, proj.pairs[k].i, qt.points, proj.pairs[k].j);
  const auto [bc, bp] = brute_force_assignment(sq_cost_matrix(line, qt));
  REQUIRE(proj_cost == Catch::Approx(bc).epsilon(1e-12));
}

TEST_CASE("constrained projection validates t") {
  Batch b = make_batch({0, 1}, 1);
  Pairing p = minibatch_ot(b, b);
  REQUIRE_THROWS_AS(discrete_constrained_projection(p, b, b, 0.0, b), std::invalid_argument);
  REQUIRE_THROWS_AS(discrete_constrained_projection(p, b, b, 1.0, b), std::invalid_argument);
}
