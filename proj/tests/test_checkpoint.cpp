#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "catch2/catch_amalgamated.hpp"

#include "ali/checkpoint.hpp"
#include "ali/eval_data.hpp"

using namespace ali;

namespace {

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0;
}

bool same_bits(const Mlp& a, const Mlp& b) {
  if (a.widths != b.widths || a.act != b.act || a.output_act != b.output_act) return false;
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (!same_bits(a.weights[l], b.weights[l]) || !same_bits(a.biases[l], b.biases[l]))
      return false;
  return true;
}

bool same_bits(const AdamState& a, const AdamState& b) {
  if (a.lr != b.lr || a.beta1 != b.beta1 || a.beta2 != b.beta2 || a.eps != b.eps ||
      a.step != b.step || a.m.size() != b.m.size() || a.v.size() != b.v.size())
    return false;
  for (std::size_t i = 0; i < a.m.size(); ++i)
    if (!same_bits(a.m[i], b.m[i]) || !same_bits(a.v[i], b.v[i])) return false;
  return true;
}

MarginalDataset tiny_dataset() {
  return gen_gaussian_sequence({{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}}, 0.2, 12, 5);
}

}  // namespace

TEST_CASE("mlp checkpoint round trips bitwise") {
  Rng rng(3);
  Mlp net = make_mlp({3, 7, 2}, Activation::ELU, rng, Activation::Tanh);

  // awkward values the decimal route would mangle
  net.weights[0].at(0, 0) = -0.0;
  net.weights[0].at(0, 1) = 5e-324;
  net.weights[1].at(0, 0) = 1.7976931348623157e308;
  net.weights[1].at(1, 1) = std::bit_cast<double>(0x7ff8000000dead01ull);

  FileGuard f{"test_checkpoint_mlp.bin"};
  save_mlp(f.path, net);
  const Mlp back = load_mlp(f.path);

  CHECK(back.widths == net.widths);
  CHECK(back.act == Activation::ELU);
  REQUIRE(back.output_act.has_value());
  CHECK(*back.output_act == Activation::Tanh);
  CHECK(same_bits(net, back));
  CHECK(std::bit_cast<std::uint64_t>(back.weights[1].at(1, 1)) == 0x7ff8000000dead01ull);
}

TEST_CASE("mlp checkpoint keeps an unset output head unset") {
  Rng rng(4);
  const Mlp net = make_mlp({2, 5, 5, 1}, Activation::SELU, rng);
  FileGuard f{"test_checkpoint_head.bin"};
  save_mlp(f.path, net);
  const Mlp back = load_mlp(f.path);
  CHECK_FALSE(back.output_act.has_value());
  CHECK(same_bits(net, back));
}

TEST_CASE("ali checkpoint stores the full training state bitwise") {
  const MarginalDataset ds = tiny_dataset();
  AliTrainConfig cfg;
  cfg.iterations = 25;
  cfg.batch = 16;
  cfg.gen_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.reg.lambda = 1.0;
  Rng rng(17);
  const AliTrainResult run = train_ali(cfg, ds, rng);
  REQUIRE_FALSE(run.diverged);

  AliCheckpoint c;
  c.gen = run.gen;
  c.disc = run.disc;
  c.opt_gen = run.opt_gen;
  c.opt_disc = run.opt_disc;
  c.rng = rng;
  c.iteration = run.iterations_done;

  FileGuard f{"test_checkpoint_ali.bin"};
  save_ali_checkpoint(f.path, c);
  const AliCheckpoint back = load_ali_checkpoint(f.path);

  CHECK(same_bits(c.gen.net, back.gen.net));
  CHECK(back.gen.time_noise_std == c.gen.time_noise_std);
  CHECK(same_bits(c.disc.net, back.disc.net));
  CHECK(same_bits(c.opt_gen, back.opt_gen));
  CHECK(same_bits(c.opt_disc, back.opt_disc));
  CHECK(back.iteration == run.iterations_done);

  // the restored stream continues exactly where the saved one stood
  Rng live = rng;
  Rng restored = back.rng;
  for (int i = 0; i < 8; ++i) CHECK(restored.next_u64() == live.next_u64());
}

TEST_CASE("resumed adversarial run reproduces the uninterrupted trace") {
  const MarginalDataset ds = tiny_dataset();
  AliTrainConfig cfg;
  cfg.batch = 16;
  cfg.gen_hidden = {8};
  cfg.disc_hidden = {8};
  cfg.reg.lambda = 1.0;
  const std::size_t total = 30, split = 14;

  auto fresh = [&](Rng& rng) {
    AliCheckpoint s;
    s.gen = make_generator(ds.dim(), cfg.gen_hidden, Activation::ELU, rng, cfg.time_noise_std);
    s.disc = make_discriminator(ds.dim(), cfg.disc_hidden, Activation::ELU, rng);
    s.opt_gen.lr = cfg.lr_gen;
    s.opt_disc.lr = cfg.lr_disc;
    return s;
  };
  const CouplingSource src =
      make_coupling_source(ds.batches.front(), ds.batches.back(), CouplingKind::Ot);

  Rng rng_a(33);
  AliCheckpoint a = fresh(rng_a);
  std::vector<AliStepRecord> trace_a;
  for (std::size_t i = 0; i < total; ++i)
    trace_a.push_back(ali_train_step(a.gen, a.disc, ds, src, cfg, a.opt_gen, a.opt_disc, rng_a));

  Rng rng_b(33);
  AliCheckpoint b = fresh(rng_b);
  for (std::size_t i = 0; i < split; ++i)
    ali_train_step(b.gen, b.disc, ds, src, cfg, b.opt_gen, b.opt_disc, rng_b);
  b.rng = rng_b;
  b.iteration = split;

  FileGuard f{"test_checkpoint_resume.bin"};
  save_ali_checkpoint(f.path, b);
  AliCheckpoint r = load_ali_checkpoint(f.path);
  Rng rng_r = r.rng;
  std::vector<AliStepRecord> tail;
  for (std::size_t i = split; i < total; ++i)
    tail.push_back(ali_train_step(r.gen, r.disc, ds, src, cfg, r.opt_gen, r.opt_disc, rng_r));

  CHECK(same_bits(a.gen.net, r.gen.net));
  CHECK(same_bits(a.disc.net, r.disc.net));
  CHECK(same_bits(a.opt_gen, r.opt_gen));
  CHECK(same_bits(a.opt_disc, r.opt_disc));
  for (std::size_t i = 0; i < tail.size(); ++i) {
    CHECK(tail[i].loss_disc == trace_a[split + i].loss_disc);
    CHECK(tail[i].loss_gen == trace_a[split + i].loss_gen);
    CHECK(tail[i].loss_reg == trace_a[split + i].loss_reg);
  }
}

TEST_CASE("resumed regression run reproduces the uninterrupted trace") {
  const MarginalDataset ds = tiny_dataset();
  const CouplingSource src =
      make_coupling_source(ds.batches.front(), ds.batches.back(), CouplingKind::Ot);
  Rng gen_rng(6);
  const AliGenerator gen = make_generator(2, {8}, Activation::ELU, gen_rng);
  const PathSampler sample = ali_path_sampler(gen, src);
  const std::size_t total = 30, split = 11;

  Rng rng_a(9);
  CfmCheckpoint a;
  a.field = make_field(2, {8}, Activation::ELU, rng_a);
  a.opt.lr = 1e-3;
  std::vector<double> losses_a;
  for (std::size_t i = 0; i < total; ++i)
    losses_a.push_back(cfm_train_step(a.field, sample, 16, a.opt, rng_a).loss);

  Rng rng_b(9);
  CfmCheckpoint b;
  b.field = make_field(2, {8}, Activation::ELU, rng_b);
  b.opt.lr = 1e-3;
  for (std::size_t i = 0; i < split; ++i) cfm_train_step(b.field, sample, 16, b.opt, rng_b);
  b.rng = rng_b;
  b.iteration = split;

  FileGuard f{"test_checkpoint_cfm.bin"};
  save_cfm_checkpoint(f.path, b);
  CfmCheckpoint r = load_cfm_checkpoint(f.path);
  CHECK(r.iteration == split);
  Rng rng_r = r.rng;
  for (std::size_t i = split; i < total; ++i)
    CHECK(cfm_train_step(r.field, sample, 16, r.opt, rng_r).loss == losses_a[i]);
  CHECK(same_bits(a.field.net, r.field.net));
  CHECK(same_bits(a.opt, r.opt));
}

TEST_CASE("checkpoint loader rejects damaged or mismatched files") {
  Rng rng(12);
  const Mlp net = make_mlp({2, 4, 2}, Activation::ELU, rng);

  SECTION("wrong kind") {
    FileGuard f{"test_checkpoint_kind.bin"};
    save_mlp(f.path, net);
    CHECK_THROWS_WITH(load_ali_checkpoint(f.path),
                      Catch::Matchers::ContainsSubstring("holds a 'mlp' checkpoint"));
  }

  SECTION("bad magic") {
    FileGuard f{"test_checkpoint_magic.bin"};
    std::ofstream(f.path, std::ios::binary) << "not a checkpoint at all";
    CHECK_THROWS_WITH(load_mlp(f.path), Catch::Matchers::ContainsSubstring("not a checkpoint"));
  }

  SECTION("truncated") {
    FileGuard f{"test_checkpoint_trunc.bin"};
    save_mlp(f.path, net);
    std::ifstream in(f.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream(f.path, std::ios::binary).write(bytes.data(), bytes.size() - 9);
    CHECK_THROWS_WITH(load_mlp(f.path), Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("trailing data") {
    FileGuard f{"test_checkpoint_trail.bin"};
    save_mlp(f.path, net);
    std::ofstream(f.path, std::ios::binary | std::ios::app) << "junk";
    CHECK_THROWS_WITH(load_mlp(f.path), Catch::Matchers::ContainsSubstring("trailing"));
  }

  SECTION("missing file") {
    CHECK_THROWS_WITH(load_mlp("test_checkpoint_nowhere.bin"),
                      Catch::Matchers::ContainsSubstring("cannot open"));
  }
}
