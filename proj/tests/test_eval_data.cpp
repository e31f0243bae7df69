#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "ali/eval_data.hpp"
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

// optimal matching cost by enumerating all n! assignments
double brute_force_emd(const Batch& a, const Batch& b, EmdCost cost) {
  const std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sq = sq_dist_rows(a.points, i, b.points, perm[i]);
      c += cost == EmdCost::Euclidean ? std::sqrt(sq) : sq;
    }
    best = std::min(best, c / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Batch replicate_rows(const Batch& b, std::size_t times) {
  Batch out;
  out.points = Tensor({b.size() * times, b.dim()});
  std::size_t r = 0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t k = 0; k < times; ++k, ++r)
      for (std::size_t c = 0; c < b.dim(); ++c) out.points.at(r, c) = b.points.at(i, c);
  return out;
}

MarginalDataset tiny_dataset(Rng& rng, std::size_t k, std::size_t n, std::size_t d) {
  MarginalDataset ds;
  for (std::size_t j = 0; j < k; ++j) {
    ds.times.push_back(static_cast<double>(j) / static_cast<double>(k - 1));
    Batch b = random_batch(rng, n, d, 2.0);
    b.time = ds.times.back();
    ds.batches.push_back(std::move(b));
  }
  return ds;
}

}  // namespace

TEST_CASE("knot spec validation") {
  KnotSpec ok;
  REQUIRE_NOTHROW(ok.validate());

  KnotSpec bad = ok;
  bad.marginals = 10;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.marginals = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = ok;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.sigma = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = ok;
  bad.samples = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("knot mean hand values") {
  // loop segment at shifted time 0.25: cos/sin of -pi
  const auto [lx, ly] = knot_mean(0.25, 2);
  CHECK(lx == Catch::Approx(-1.0).margin(1e-12));
  CHECK(ly == Catch::Approx(0.0).margin(1e-12));

  // start of the first ramp
  const auto [rx, ry] = knot_mean(-1.5, 1);
  CHECK(rx == -3.0);
  CHECK(ry == Catch::Approx(-0.5 * std::tanh(-2.5) + 0.5));

  // end of the last ramp mirrors it
  const auto [ex, ey] = knot_mean(1.5, 3);
  CHECK(ex == 3.0);
  CHECK(ey == Catch::Approx(0.5 * std::tanh(2.5) + 0.5));

  // top of the loop
  const auto [tx, ty] = knot_mean(0.0, 2);
  CHECK(tx == Catch::Approx(0.0).margin(1e-12));
  CHECK(ty == Catch::Approx(1.0).margin(1e-12));

  CHECK_THROWS_AS(knot_mean(0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(knot_mean(0.0, 4), std::invalid_argument);
}

TEST_CASE("gen_knot structure") {
  KnotSpec spec;
  spec.marginals = 6;
  spec.samples = 3;
  spec.sigma = 0.1;
  spec.seed = 7;
  const MarginalDataset ds = gen_knot(spec);

  REQUIRE(ds.size() == 6);
  CHECK(ds.dim() == 2);
  CHECK(ds.times.front() == 0.0);
  CHECK(ds.times.back() == 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.batches[i].size() == 3);
    CHECK(ds.batches[i].dim() == 2);
    REQUIRE(ds.batches[i].time.has_value());
    CHECK(*ds.batches[i].time == ds.times[i]);
    if (i > 0) CHECK(ds.times[i - 1] < ds.times[i]);
  }
  CHECK(ds.norm.empty());
}

TEST_CASE("gen_knot vanishing noise sits on the mean curve") {
  KnotSpec spec;
  spec.marginals = 6;
  spec.samples = 5;
  spec.sigma = 1e-15;
  spec.seed = 3;
  const MarginalDataset ds = gen_knot(spec);

  for (std::size_t j = 0; j < 6; ++j) {
    const double u = 3.0 * static_cast<double>(j) / 5.0 - 1.5;
    const int segment = j < 2 ? 1 : (j < 4 ? 2 : 3);
    const auto [mx, my] = knot_mean(u, segment);
    for (std::size_t s = 0; s < 5; ++s) {
      CHECK(ds.batches[j].points.at(s, 0) == Catch::Approx(mx).margin(1e-12));
      CHECK(ds.batches[j].points.at(s, 1) == Catch::Approx(my).margin(1e-12));
    }
  }
}

TEST_CASE("gen_knot empirical moments match the formulas") {
  KnotSpec spec;
  spec.marginals = 3;
  spec.samples = 4000;
  spec.sigma = 0.1;
  spec.seed = 11;
  const MarginalDataset ds = gen_knot(spec);

  // 4 sigma / sqrt(n) bound on the sample mean
  const double mean_tol = 4.0 * spec.sigma / std::sqrt(4000.0);
  const double want_x[3] = {3.0 * (-1.5 + 0.5), std::cos(2.0 * std::numbers::pi * (-0.75)),
                            3.0 * (1.5 - 0.5)};
  const double want_y[3] = {-0.5 * std::tanh(5.0 * (-1.5 + 1.0)) + 0.5,
                            std::sin(2.0 * std::numbers::pi * (-0.75)),
                            0.5 * std::tanh(5.0 * (1.5 - 1.0)) + 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    double sx = 0.0, sy = 0.0, sxx = 0.0;
    for (std::size_t s = 0; s < 4000; ++s) {
      sx += ds.batches[j].points.at(s, 0);
      sy += ds.batches[j].points.at(s, 1);
    }
    sx /= 4000.0;
    sy /= 4000.0;
    CHECK(sx == Catch::Approx(want_x[j]).margin(mean_tol));
    CHECK(sy == Catch::Approx(want_y[j]).margin(mean_tol));
    for (std::size_t s = 0; s < 4000; ++s) {
      const double dvx = ds.batches[j].points.at(s, 0) - sx;
      sxx += dvx * dvx;
    }
    CHECK(std::sqrt(sxx / 3999.0) == Catch::Approx(0.1).margin(0.01));
  }
}

TEST_CASE("gen_knot is seed-deterministic") {
  KnotSpec spec;
  spec.marginals = 9;
  spec.samples = 4;
  spec.seed = 42;
  const MarginalDataset a = gen_knot(spec);
  const MarginalDataset b = gen_knot(spec);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.times[i] == b.times[i]);
    CHECK(a.batches[i].points.data == b.batches[i].points.data);
  }

  spec.seed = 43;
  const MarginalDataset c = gen_knot(spec);
  CHECK(a.batches[0].points.data != c.batches[0].points.data);
}

TEST_CASE("gen_gaussian_sequence basics") {
  SECTION("single mean at the origin, CLT bound on the sample mean") {
    const MarginalDataset ds = gen_gaussian_sequence({{0.0, 0.0, 0.0}}, 1.0, 10000, 5);
    REQUIRE(ds.size() == 1);
    CHECK(ds.times[0] == 0.0);
    const double tol = 4.0 / std::sqrt(10000.0);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t s = 0; s < 10000; ++s) m += ds.batches[0].points.at(s, c);
      CHECK(m / 10000.0 == Catch::Approx(0.0).margin(tol));
    }
  }

  SECTION("n=1 determinism") {
    const MarginalDataset a = gen_gaussian_sequence({{1.0}, {2.0}}, 0.5, 1, 9);
    const MarginalDataset b = gen_gaussian_sequence({{1.0}, {2.0}}, 0.5, 1, 9);
    CHECK(a.batches[0].points.data == b.batches[0].points.data);
    CHECK(a.batches[1].points.data == b.batches[1].points.data);
    CHECK(a.times == std::vector<double>{0.0, 1.0});
  }

  SECTION("two identical marginals are close in EMD") {
    const MarginalDataset ds = gen_gaussian_sequence({{0.0, 0.0}, {0.0, 0.0}}, 0.1, 256, 17);
    CHECK(emd(ds.batches[0], ds.batches[1]) < 0.1);
  }

  SECTION("sigma = 0 gives atoms exactly at the means") {
    const MarginalDataset ds = gen_gaussian_sequence({{1.0, -2.0}, {3.0, 4.0}}, 0.0, 3, 0);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(ds.batches[0].points.at(s, 0) == 1.0);
      CHECK(ds.batches[0].points.at(s, 1) == -2.0);
      CHECK(ds.batches[1].points.at(s, 0) == 3.0);
      CHECK(ds.batches[1].points.at(s, 1) == 4.0);
    }
  }

  SECTION("rejects bad arguments") {
    CHECK_THROWS_AS(gen_gaussian_sequence({}, 1.0, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_gaussian_sequence({{0.0}}, 1.0, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_gaussian_sequence({{0.0}}, -1.0, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_gaussian_sequence({{0.0}, {0.0, 1.0}}, 1.0, 4, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("emd trivial values") {
  const Batch z = make_batch({0.0}, 1);
  const Batch three = make_batch({3.0}, 1);
  CHECK(emd(z, three) == 3.0);
  CHECK(emd(z, three, EmdCost::SqEuclidean) == 9.0);

  Rng rng(2);
  const Batch a = random_batch(rng, 5, 3);
  CHECK(emd(a, a) == 0.0);
  CHECK(emd(a, a, EmdCost::SqEuclidean) == 0.0);
}

TEST_CASE("emd equals brute force on 4-vs-4") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Batch a = random_batch(rng, 4, 3, 2.0);
    const Batch b = random_batch(rng, 4, 3, 2.0);
    CHECK(emd(a, b) == Catch::Approx(brute_force_emd(a, b, EmdCost::Euclidean)).margin(1e-9));
    CHECK(emd(a, b, EmdCost::SqEuclidean) ==
          Catch::Approx(brute_force_emd(a, b, EmdCost::SqEuclidean)).margin(1e-9));
  }
}

TEST_CASE("emd symmetry is exact") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n0 = 2 + rng.uniform_index(5);
    const std::size_t n1 = 2 + rng.uniform_index(5);
    const Batch a = random_batch(rng, n0, 2, 3.0);
    const Batch b = random_batch(rng, n1, 2, 3.0);
    CHECK(emd(a, b) == emd(b, a));
    CHECK(emd(a, b, EmdCost::SqEuclidean) == emd(b, a, EmdCost::SqEuclidean));
  }
}

TEST_CASE("emd triangle inequality") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Batch a = random_batch(rng, 6, 2, 2.0);
    const Batch b = random_batch(rng, 6, 2, 2.0);
    const Batch c = random_batch(rng, 6, 2, 2.0);
    CHECK(emd(a, c) <= emd(a, b) + emd(b, c) + 1e-9);
  }
}

TEST_CASE("emd on unequal sizes matches the replicated assignment") {
  // replicating each batch up to lcm(n0, n1) rows turns the LP into an
  // equal-size assignment with the same per-unit cost
  Rng rng(23);
  const std::size_t sizes[][2] = {{2, 3}, {3, 5}, {4, 6}, {1, 4}};
  for (const auto& s : sizes) {
    const Batch a = random_batch(rng, s[0], 2, 2.0);
    const Batch b = random_batch(rng, s[1], 2, 2.0);
    const std::size_t l = std::lcm(s[0], s[1]);
    const Batch ar = replicate_rows(a, l / s[0]);
    const Batch br = replicate_rows(b, l / s[1]);
    CHECK(emd(a, b) == Catch::Approx(emd(ar, br)).margin(1e-9));
    CHECK(emd(a, b, EmdCost::SqEuclidean) ==
          Catch::Approx(emd(ar, br, EmdCost::SqEuclidean)).margin(1e-9));
  }
}

TEST_CASE("emd rejects bad inputs") {
  const Batch a = make_batch({0.0, 1.0}, 1);
  Batch empty;
  empty.points = Tensor({0, 1});
  CHECK_THROWS_AS(emd(a, empty), std::invalid_argument);
  CHECK_THROWS_AS(emd(a, make_batch({0.0, 1.0}, 2)), std::invalid_argument);

  Batch huge;
  huge.points = Tensor({kAssignmentCap + 1, 1});
  CHECK_THROWS_AS(emd(a, huge), std::invalid_argument);
}

TEST_CASE("emd cost names round trip") {
  CHECK(emd_cost_from_name(emd_cost_name(EmdCost::Euclidean)) == EmdCost::Euclidean);
  CHECK(emd_cost_from_name(emd_cost_name(EmdCost::SqEuclidean)) == EmdCost::SqEuclidean);
  CHECK_THROWS_AS(emd_cost_from_name("manhattan"), std::invalid_argument);
}

TEST_CASE("normalise maps to the unit box and round-trips") {
  SECTION("hand-scaled two-point set") {
    MarginalDataset ds;
    ds.times = {0.0, 1.0};
    ds.batches = {make_batch({0.0, 10.0}, 2), make_batch({2.0, 30.0}, 2)};
    const MarginalDataset n = normalise(ds);
    CHECK(n.norm.shift == std::vector<double>{0.0, 10.0});
    CHECK(n.norm.scale == std::vector<double>{2.0, 20.0});
    CHECK(n.batches[0].points.data == std::vector<double>{0.0, 0.0});
    CHECK(n.batches[1].points.data == std::vector<double>{1.0, 1.0});
  }

  SECTION("already unit box data is unchanged") {
    MarginalDataset ds;
    ds.times = {0.0, 1.0};
    ds.batches = {make_batch({0.0, 1.0, 1.0, 0.0}, 2), make_batch({0.25, 0.75, 0.5, 0.5}, 2)};
    const MarginalDataset n = normalise(ds);
    CHECK(n.norm.shift == std::vector<double>{0.0, 0.0});
    CHECK(n.norm.scale == std::vector<double>{1.0, 1.0});
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(n.batches[i].points.data == ds.batches[i].points.data);
  }

  SECTION("random data lands in [0,1] and round-trips") {
    Rng rng(3);
    const MarginalDataset ds = tiny_dataset(rng, 4, 8, 3);
    const MarginalDataset n = normalise(ds);
    for (const Batch& b : n.batches)
      for (double v : b.points.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    const MarginalDataset back = denormalise(n);
    CHECK(back.norm.empty());
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t k = 0; k < ds.batches[i].points.size(); ++k)
        CHECK(back.batches[i].points[k] ==
              Catch::Approx(ds.batches[i].points[k]).margin(1e-12));
  }

  SECTION("degenerate dimension shifts only") {
    MarginalDataset ds;
    ds.times = {0.0, 1.0};
    ds.batches = {make_batch({5.0, 1.0}, 2), make_batch({5.0, 3.0}, 2)};
    const MarginalDataset n = normalise(ds);
    CHECK(n.norm.scale == std::vector<double>{1.0, 2.0});
    CHECK(n.batches[0].points.at(0, 0) == 0.0);
    CHECK(n.batches[1].points.at(0, 0) == 0.0);
    const MarginalDataset back = denormalise(n);
    CHECK(back.batches[0].points.at(0, 0) == 5.0);
  }

  SECTION("double normalise is rejected, bare denormalise is a no-op") {
    Rng rng(4);
    const MarginalDataset ds = tiny_dataset(rng, 3, 4, 2);
    const MarginalDataset n = normalise(ds);
    CHECK_THROWS_AS(normalise(n), std::invalid_argument);
    const MarginalDataset same = denormalise(ds);
    for (std::size_t i = 0; i < ds.size(); ++i)
      CHECK(same.batches[i].points.data == ds.batches[i].points.data);
  }
}

TEST_CASE("evaluate_marginals") {
  Rng rng(19);
  const MarginalDataset ds = tiny_dataset(rng, 5, 6, 2);

  SECTION("reference against itself is all zeros") {
    const EmdTable t = evaluate_marginals(ds, ds);
    REQUIRE(t.values.size() == 5);
    for (double v : t.values) CHECK(v == 0.0);
    CHECK(t.mean == 0.0);
  }

  SECTION("mean is the arithmetic mean of the rows") {
    MarginalDataset pushed = ds;
    for (Batch& b : pushed.batches)
      for (double& v : b.points.data) v += 0.5 * rng.normal();
    const EmdTable t = evaluate_marginals(pushed, ds);
    double s = 0.0;
    for (double v : t.values) s += v;
    CHECK(t.mean == Catch::Approx(s / 5.0).margin(1e-15));
    CHECK(t.times == ds.times);
  }

  SECTION("single-time table equals a direct emd call") {
    MarginalDataset one;
    one.times = {ds.times[2]};
    one.batches = {random_batch(rng, 6, 2)};
    const EmdTable t = evaluate_marginals(one, ds);
    REQUIRE(t.values.size() == 1);
    CHECK(t.values[0] == emd(one.batches[0], ds.batches[2]));
    CHECK(t.mean == t.values[0]);
  }

  SECTION("missing reference time is rejected") {
    MarginalDataset one;
    one.times = {0.123456};
    one.batches = {random_batch(rng, 6, 2)};
    CHECK_THROWS_AS(evaluate_marginals(one, ds), std::invalid_argument);
  }

  SECTION("normalised pushed batches are compared in raw coordinates") {
    const MarginalDataset n = normalise(ds);
    // same data, one side normalised: zero once denormalisation is applied
    const EmdTable t = evaluate_marginals(n, ds);
    for (double v : t.values) CHECK(v == Catch::Approx(0.0).margin(1e-12));
    // and both sides normalised also agree
    const EmdTable t2 = evaluate_marginals(n, n);
    for (double v : t2.values) CHECK(v == 0.0);
  }
}

TEST_CASE("dataset csv round trip is bit-faithful") {
  KnotSpec spec;
  spec.marginals = 6;
  spec.samples = 3;
  spec.seed = 123;
  const MarginalDataset ds = gen_knot(spec);
  const std::string path = "test_eval_data_roundtrip.csv";
  write_dataset_csv(ds, path);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x_1,x_2");
  in.close();

  const MarginalDataset back = read_dataset_csv(path);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.times[i] == ds.times[i]);
    REQUIRE(back.batches[i].size() == ds.batches[i].size());
    CHECK(back.batches[i].points.data == ds.batches[i].points.data);
  }
  std::remove(path.c_str());
}

TEST_CASE("dataset csv handles extreme values and minimal files") {
  MarginalDataset ds;
  ds.times = {0.0, 1.0};
  ds.batches = {make_batch({0.1 + 0.2, 1e300, -1e-300, 0.0}, 2),
                make_batch({-12345.678901234567, 1.0 / 3.0}, 2)};
  const std::string path = "test_eval_data_extreme.csv";
  write_dataset_csv(ds, path);
  const MarginalDataset back = read_dataset_csv(path);
  CHECK(back.batches[0].points.data == ds.batches[0].points.data);
  CHECK(back.batches[1].points.data == ds.batches[1].points.data);
  std::remove(path.c_str());

  KnotSpec spec;
  spec.marginals = 3;
  spec.samples = 3;
  const std::string mini = "test_eval_data_minimal.csv";
  write_dataset_csv(gen_knot(spec), mini);
  std::ifstream in(mini);
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 10);  // header + 3 slices x 3 samples
  in.close();
  std::remove(mini.c_str());
}

TEST_CASE("dataset csv rejects malformed input") {
  CHECK_THROWS_AS(read_dataset_csv("no_such_file_anywhere.csv"), std::runtime_error);

  const std::string path = "test_eval_data_bad.csv";
  {
    std::ofstream out(path);
    out << "t,x_1\n0,abc\n";
  }
  CHECK_THROWS_AS(read_dataset_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "foo,bar\n0,1\n";
  }
  CHECK_THROWS_AS(read_dataset_csv(path), std::runtime_error);
  {
    std::ofstream out(path);
    out << "t,x_1\n";
  }
  CHECK_THROWS_AS(read_dataset_csv(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("dataset validation") {
  Rng rng(1);
  MarginalDataset ds = tiny_dataset(rng, 3, 4, 2);
  REQUIRE_NOTHROW(validate_dataset(ds, "test"));

  MarginalDataset bad = ds;
  bad.times[1] = bad.times[0];
  CHECK_THROWS_AS(validate_dataset(bad, "test"), std::invalid_argument);

  bad = ds;
  bad.times.back() = 0.9;
  CHECK_THROWS_AS(validate_dataset(bad, "test"), std::invalid_argument);
  REQUIRE_NOTHROW(validate_dataset(bad, "test", false));

  bad = ds;
  bad.times[1] = 1.5;
  CHECK_THROWS_AS(validate_dataset(bad, "test", false), std::invalid_argument);

  bad = ds;
  bad.batches[1].points = Tensor({4, 3});
  CHECK_THROWS_AS(validate_dataset(bad, "test"), std::invalid_argument);

  bad = ds;
  bad.batches.pop_back();
  CHECK_THROWS_AS(validate_dataset(bad, "test"), std::invalid_argument);
}
