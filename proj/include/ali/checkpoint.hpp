#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ali/cfm.hpp"

// Checkpoint container. Little-endian binary, doubles stored as their raw
// IEEE-754 bits so round trips are exact down to NaN payloads and -0.0.
//
//   magic "ALICKPT1", then tagged blocks: 4-byte tag, u64 payload size, payload.
//
//   KIND  file kind string: "mlp", "ali" or "cfm"
//   MLP   u64 width count + widths; hidden activation name; u8 head flag and
//         head activation name if set; parameters as raw doubles in the
//         canonical W0, b0, W1, b1, ... order (shapes follow from the widths)
//   ADAM  lr, beta1, beta2, eps; u64 step; u64 buffer count; the m tensors
//         then the v tensors, each as u64 rank + dims + raw doubles
//   F64   one double
//   RNG   the Rng stream serialisation, as written by its operator<<
//   CNTR  one u64
//
// Strings are u64 length + bytes. Block order per kind is fixed:
//   mlp:  MLP
//   ali:  MLP (generator), F64 (time-noise std), MLP (discriminator),
//         ADAM (generator), ADAM (discriminator), RNG, CNTR (iteration)
//   cfm:  MLP (field), ADAM, RNG, CNTR (iteration)

namespace ali {

inline constexpr char kCheckpointMagic[8] = {'A', 'L', 'I', 'C', 'K', 'P', 'T', '1'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& os, double x) { put_u64(os, std::bit_cast<std::uint64_t>(x)); }

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_str(std::ostream& os, const std::string& s) {
  put_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is) {
  const std::uint64_t n = get_u64(is);
  if (n > 1u << 20) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

inline void put_tensor(std::ostream& os, const Tensor& t) {
  put_u64(os, t.shape.size());
  for (std::size_t s : t.shape) put_u64(os, s);
  for (double v : t.data) put_f64(os, v);
}

inline Tensor get_tensor(std::istream& is) {
  const std::uint64_t rank = get_u64(is);
  if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (std::uint64_t i = 0; i < rank; ++i) {
    const std::uint64_t s = get_u64(is);
    if (s > 1u << 30) throw std::runtime_error("checkpoint: implausible tensor dimension");
    shape[i] = s;
  }
  Tensor t(shape);
  for (double& v : t.data) v = get_f64(is);
  return t;
}

inline void put_block(std::ostream& os, const char (&tag)[5], const std::string& payload) {
  os.write(tag, 4);
  put_u64(os, payload.size());
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

// Reads the header of the next block and checks its tag; payload follows on
// the same stream. The size is returned for completeness, readers consume
// fields directly.
inline std::uint64_t open_block(std::istream& is, const char (&tag)[5]) {
  char got[4];
  is.read(got, 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  if (std::memcmp(got, tag, 4) != 0)
    throw std::runtime_error(std::string("checkpoint: expected block '") + tag + "', found '" +
                             std::string(got, 4) + "'");
  return get_u64(is);
}

inline void put_mlp_body(std::ostream& os, const Mlp& net) {
  put_u64(os, net.widths.size());
  for (std::size_t w : net.widths) put_u64(os, w);
  put_str(os, activation_name(net.act));
  os.put(net.output_act ? 1 : 0);
  if (net.output_act) put_str(os, activation_name(*net.output_act));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (double v : net.weights[l].data) put_f64(os, v);
    for (double v : net.biases[l].data) put_f64(os, v);
  }
}

inline Mlp get_mlp_body(std::istream& is) {
  const std::uint64_t nw = get_u64(is);
  if (nw < 2 || nw > 1024) throw std::runtime_error("checkpoint: implausible layer count");
  Mlp net;
  net.widths.resize(nw);
  for (std::uint64_t i = 0; i < nw; ++i) {
    const std::uint64_t w = get_u64(is);
    if (w == 0 || w > 1u << 24) throw std::runtime_error("checkpoint: implausible layer width");
    net.widths[i] = w;
  }
  net.act = activation_from_name(get_str(is));
  if (is.get() != 0) net.output_act = activation_from_name(get_str(is));
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    Tensor w({net.widths[l], net.widths[l + 1]});
    for (double& v : w.data) v = get_f64(is);
    Tensor b({net.widths[l + 1]});
    for (double& v : b.data) v = get_f64(is);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return net;
}

inline void put_mlp_block(std::ostream& os, const Mlp& net) {
  std::ostringstream body;
  put_mlp_body(body, net);
  put_block(os, "MLP ", body.str());
}

inline Mlp get_mlp_block(std::istream& is) {
  open_block(is, "MLP ");
  return get_mlp_body(is);
}

inline void put_adam_block(std::ostream& os, const AdamState& a) {
  std::ostringstream body;
  put_f64(body, a.lr);
  put_f64(body, a.beta1);
  put_f64(body, a.beta2);
  put_f64(body, a.eps);
  put_u64(body, a.step);
  put_u64(body, a.m.size());
  for (const Tensor& t : a.m) put_tensor(body, t);
  for (const Tensor& t : a.v) put_tensor(body, t);
  put_block(os, "ADAM", body.str());
}

inline AdamState get_adam_block(std::istream& is) {
  open_block(is, "ADAM");
  AdamState a;
  a.lr = get_f64(is);
  a.beta1 = get_f64(is);
  a.beta2 = get_f64(is);
  a.eps = get_f64(is);
  a.step = get_u64(is);
  const std::uint64_t n = get_u64(is);
  if (n > 4096) throw std::runtime_error("checkpoint: implausible optimizer buffer count");
  a.m.reserve(n);
  a.v.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) a.m.push_back(get_tensor(is));
  for (std::uint64_t i = 0; i < n; ++i) a.v.push_back(get_tensor(is));
  return a;
}

inline void put_rng_block(std::ostream& os, const Rng& rng) {
  std::ostringstream body;
  body << rng;
  put_block(os, "RNG ", body.str());
}

inline Rng get_rng_block(std::istream& is) {
  const std::uint64_t n = open_block(is, "RNG ");
  if (n > 256) throw std::runtime_error("checkpoint: implausible rng state length");
  std::string body(n, '\0');
  is.read(body.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::istringstream ss(body);
  Rng rng;
  ss >> rng;
  return rng;
}

inline void put_f64_block(std::ostream& os, double v) {
  std::ostringstream body;
  put_f64(body, v);
  put_block(os, "F64 ", body.str());
}

inline double get_f64_block(std::istream& is) {
  open_block(is, "F64 ");
  return get_f64(is);
}

inline void put_cntr_block(std::ostream& os, std::uint64_t v) {
  std::ostringstream body;
  put_u64(body, v);
  put_block(os, "CNTR", body.str());
}

inline std::uint64_t get_cntr_block(std::istream& is) {
  open_block(is, "CNTR");
  return get_u64(is);
}

inline void put_magic_and_kind(std::ostream& os, const std::string& kind) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_block(os, "KIND", kind);
}

inline void check_magic_and_kind(std::istream& is, const std::string& kind,
                                 const std::string& path) {
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  const std::uint64_t n = open_block(is, "KIND");
  std::string got(n, '\0');
  is.read(got.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  if (got != kind)
    throw std::runtime_error("checkpoint: " + path + " holds a '" + got + "' checkpoint, expected '" +
                             kind + "'");
}

inline void finish_read(std::istream& is, const std::string& path) {
  if (is.peek() != std::istream::traits_type::eof())
    throw std::runtime_error("checkpoint: trailing data in " + path);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return in;
}

// The moment buffers are lazily allocated, so empty is as valid as fully
// shaped; anything else means the file pairs an optimizer with the wrong net.
inline void check_adam_shapes(const AdamState& a, const Mlp& net, const std::string& path) {
  if (a.m.empty() && a.v.empty()) return;
  const std::vector<const Tensor*> params = net.params();
  if (a.m.size() != params.size() || a.v.size() != params.size())
    throw std::runtime_error("checkpoint: optimizer state in " + path + " does not match its net");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!a.m[i].same_shape(*params[i]) || !a.v[i].same_shape(*params[i]))
      throw std::runtime_error("checkpoint: optimizer state in " + path + " does not match its net");
}

}  // namespace detail

inline void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out = detail::open_out(path);
  detail::put_magic_and_kind(out, "mlp");
  detail::put_mlp_block(out, net);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline Mlp load_mlp(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  detail::check_magic_and_kind(in, "mlp", path);
  Mlp net = detail::get_mlp_block(in);
  detail::finish_read(in, path);
  return net;
}

// Everything the adversarial training loop mutates. The coupling plan is not
// stored: the driver rebuilds it from the dataset with a seed-derived rng, so
// fresh and resumed runs construct the identical plan.
struct AliCheckpoint {
  AliGenerator gen;
  Discriminator disc;
  AdamState opt_gen, opt_disc;
  Rng rng;
  std::uint64_t iteration = 0;
};

inline void save_ali_checkpoint(const std::string& path, const AliCheckpoint& c) {
  std::ofstream out = detail::open_out(path);
  detail::put_magic_and_kind(out, "ali");
  detail::put_mlp_block(out, c.gen.net);
  detail::put_f64_block(out, c.gen.time_noise_std);
  detail::put_mlp_block(out, c.disc.net);
  detail::put_adam_block(out, c.opt_gen);
  detail::put_adam_block(out, c.opt_disc);
  detail::put_rng_block(out, c.rng);
  detail::put_cntr_block(out, c.iteration);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline AliCheckpoint load_ali_checkpoint(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  detail::check_magic_and_kind(in, "ali", path);
  AliCheckpoint c;
  c.gen.net = detail::get_mlp_block(in);
  c.gen.time_noise_std = detail::get_f64_block(in);
  c.disc.net = detail::get_mlp_block(in);
  c.opt_gen = detail::get_adam_block(in);
  c.opt_disc = detail::get_adam_block(in);
  c.rng = detail::get_rng_block(in);
  c.iteration = detail::get_cntr_block(in);
  detail::finish_read(in, path);
  c.gen.validate();
  c.disc.validate();
  detail::check_adam_shapes(c.opt_gen, c.gen.net, path);
  detail::check_adam_shapes(c.opt_disc, c.disc.net, path);
  return c;
}

struct CfmCheckpoint {
  VectorField field;
  AdamState opt;
  Rng rng;
  std::uint64_t iteration = 0;
};

inline void save_cfm_checkpoint(const std::string& path, const CfmCheckpoint& c) {
  std::ofstream out = detail::open_out(path);
  detail::put_magic_and_kind(out, "cfm");
  detail::put_mlp_block(out, c.field.net);
  detail::put_adam_block(out, c.opt);
  detail::put_rng_block(out, c.rng);
  detail::put_cntr_block(out, c.iteration);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline CfmCheckpoint load_cfm_checkpoint(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  detail::check_magic_and_kind(in, "cfm", path);
  CfmCheckpoint c;
  c.field.net = detail::get_mlp_block(in);
  c.opt = detail::get_adam_block(in);
  c.rng = detail::get_rng_block(in);
  c.iteration = detail::get_cntr_block(in);
  detail::finish_read(in, path);
  c.field.validate();
  detail::check_adam_shapes(c.opt, c.field.net, path);
  return c;
}

}  // namespace ali
