#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "daso/optim.hpp"
#include "daso/params.hpp"

namespace daso {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { IoError, BadMagic, BadVersion, Truncated };

  CheckpointError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace ckpt {

constexpr char kMagic[4] = {'D', 'A', 'S', 'O'};
constexpr std::uint32_t kVersion = 1;

// Explicit little-endian encoding, independent of host order.
class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw CheckpointError(CheckpointError::Kind::IoError, "cannot open " + path);
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void finish(const std::string& path) {
    out_.flush();
    if (!out_) throw CheckpointError(CheckpointError::Kind::IoError, "write failed: " + path);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError(CheckpointError::Kind::IoError, "cannot open " + path);
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError(CheckpointError::Kind::Truncated, "truncated checkpoint: " + path_);
    }
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool at_end() {
    in_.peek();
    return in_.eof();
  }

 private:
  std::ifstream in_;
  std::string path_;
};

template <typename Real>
inline void write_floats(Writer& w, const std::vector<Real>& v) {
  for (Real x : v) w.f32(static_cast<float>(x));
}

template <typename Real>
inline void read_floats(Reader& r, std::vector<Real>& v) {
  for (Real& x : v) x = static_cast<Real>(r.f32());
}

/// Fixed serialization order over one ModelParams-shaped container.
template <typename Real, typename Fn>
inline void for_each_group(ModelParams<Real>& m, Fn&& fn) {
  fn(m.p_item.data);
  fn(m.q_item.data);
  fn(m.x_item.data);
  fn(m.y_item.data);
  fn(m.p_soc.data);
  fn(m.x_soc.data);
  fn(m.a_item);
  fn(m.b_item);
  fn(m.a_soc);
  fn(m.b_soc);
  for (MappingNet<Real>* net : {&m.map_si, &m.map_is}) {
    for (int l = 0; l < net->num_layers(); ++l) {
      fn(net->weights[l].data);
      fn(net->biases[l]);
    }
  }
}

inline std::size_t header_bytes(std::size_t num_hidden) {
  // magic + version + N,M,d + hidden count/widths + 9 hyperparameters
  return 4 + 4 + 12 + 4 + 4 * num_hidden + (8 + 8 + 8 + 4 + 8 + 4 + 4 + 4 + 8);
}

}  // namespace ckpt

/// Expected on-disk size: header plus 4 bytes per parameter and per
/// accumulator entry.
template <typename Real>
inline std::size_t checkpoint_bytes(const ModelParams<Real>& params) {
  return ckpt::header_bytes(params.map_si.dims.size() - 2) + 4 * 2 * params.param_count();
}

template <typename Real>
inline void save_checkpoint(const ModelParams<Real>& params, const OptimState<Real>& optim,
                            const std::string& path) {
  ckpt::Writer w(path);
  w.bytes(ckpt::kMagic, 4);
  w.u32(ckpt::kVersion);
  w.u32(static_cast<std::uint32_t>(params.num_users));
  w.u32(static_cast<std::uint32_t>(params.num_items));
  w.u32(static_cast<std::uint32_t>(params.dim));
  const auto hidden = hidden_widths_of(params.map_si);
  w.u32(static_cast<std::uint32_t>(hidden.size()));
  for (int h : hidden) w.u32(static_cast<std::uint32_t>(h));
  const HyperParams& hp = optim.hp;
  w.f64(hp.learning_rate);
  w.f64(hp.rho);
  w.f64(hp.eps);
  w.u32(static_cast<std::uint32_t>(hp.batch_size));
  w.f64(hp.lambda);
  w.u32(static_cast<std::uint32_t>(hp.samples_per_user));
  w.u32(static_cast<std::uint32_t>(hp.steps_per_epoch));
  w.u32(static_cast<std::uint32_t>(hp.epochs));
  w.u64(hp.seed);
  ckpt::for_each_group(const_cast<ModelParams<Real>&>(params),
                       [&](auto& v) { ckpt::write_floats(w, v); });
  ckpt::for_each_group(const_cast<ModelParams<Real>&>(optim.sq),
                       [&](auto& v) { ckpt::write_floats(w, v); });
  w.finish(path);
}

template <typename Real>
inline std::pair<ModelParams<Real>, OptimState<Real>> load_checkpoint(const std::string& path) {
  ckpt::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, ckpt::kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "bad checkpoint magic: " + path);
  }
  const std::uint32_t version = r.u32();
  if (version != ckpt::kVersion) {
    throw CheckpointError(CheckpointError::Kind::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  const int num_users = static_cast<int>(r.u32());
  const int num_items = static_cast<int>(r.u32());
  const int dim = static_cast<int>(r.u32());
  const std::uint32_t num_hidden = r.u32();
  if (num_hidden > 64) {
    throw CheckpointError(CheckpointError::Kind::Truncated, "implausible header: " + path);
  }
  std::vector<int> hidden(num_hidden);
  for (auto& h : hidden) h = static_cast<int>(r.u32());

  HyperParams hp;
  hp.learning_rate = r.f64();
  hp.rho = r.f64();
  hp.eps = r.f64();
  hp.batch_size = static_cast<int>(r.u32());
  hp.lambda = r.f64();
  hp.samples_per_user = static_cast<int>(r.u32());
  hp.steps_per_epoch = static_cast<int>(r.u32());
  hp.epochs = static_cast<int>(r.u32());
  hp.seed = r.u64();

  ModelParams<Real> params = make_model<Real>(num_users, num_items, dim, hidden);
  OptimState<Real> optim;
  optim.hp = hp;
  optim.sq = make_model<Real>(num_users, num_items, dim, hidden);
  ckpt::for_each_group(params, [&](auto& v) { ckpt::read_floats(r, v); });
  ckpt::for_each_group(optim.sq, [&](auto& v) { ckpt::read_floats(r, v); });
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "checkpoint has trailing bytes: " + path);
  }
  return {std::move(params), std::move(optim)};
}

}  // namespace daso
