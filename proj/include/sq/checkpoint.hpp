#ifndef SQ_CHECKPOINT_HPP_
#define SQ_CHECKPOINT_HPP_

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/layers.hpp"
#include "sq/nets.hpp"
#include "sq/quantizer.hpp"
#include "sq/rng.hpp"
#include "sq/tensor.hpp"
#include "sq/trainer.hpp"

namespace sq {

namespace detail {

// Little-endian binary encoding, independent of host byte order.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot write " + path);
  }

  void magic(const char tag[4]) { out_.write(tag, 4); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(static_cast<char>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void i8_block(const std::int8_t* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p),
               static_cast<std::streamsize>(n));
  }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) u64(e);
    for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
  }
  void close() {
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }

  std::array<char, 4> magic() {
    std::array<char, 4> tag{};
    read(tag.data(), 4);
    return tag;
  }
  std::uint8_t u8() {
    char c;
    read(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    unsigned char b[4];
    read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
  }
  std::uint64_t u64() {
    unsigned char b[8];
    read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw CorruptionError(path_ + ": absurd string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void i8_block(std::int8_t* p, std::size_t n) {
    read(reinterpret_cast<char*>(p), n);
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw CorruptionError(path_ + ": absurd tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = u64();
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
    return t;
  }
  const std::string& path() const { return path_; }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CorruptionError(path_ + ": truncated file");
  }

  std::ifstream in_;
  std::string path_;
};

}  // namespace detail

// ---- training checkpoint (SQCK) --------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kSchemeFullPrecision = 255;

struct CheckpointMeta {
  std::uint64_t config_digest = 0;
  std::uint8_t scheme_kind = kSchemeFullPrecision;
  std::uint8_t granularity = 0;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string arch;
  Rng::State rng_state{};
};

/// SQCK v1: magic, version, config digest, scheme/granularity tags,
/// iteration, seed, architecture tag, per-layer records (name, each
/// parameter as value + momentum tensors, then named buffers), stage-fixed
/// partitions, and the RNG state blob. All payloads little-endian, floats
/// 64-bit.
inline void save_checkpoint(const std::string& path, Network& net,
                            const CheckpointMeta& meta,
                            const std::vector<FixedPartitionState>& fixed = {}) {
  detail::BinWriter w(path);
  w.magic("SQCK");
  w.u32(kCheckpointVersion);
  w.u64(meta.config_digest);
  w.u8(meta.scheme_kind);
  w.u8(meta.granularity);
  w.u8(0);
  w.u8(0);
  w.u64(meta.iteration);
  w.u64(meta.seed);
  w.str(meta.arch);

  w.u32(static_cast<std::uint32_t>(net.size()));
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    w.str(net.name(i));
    const auto params = layer.params();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const ParamRef& p : params) {
      w.tensor(*p.value);
      w.tensor(*p.momentum);
    }
    const auto buffers = layer.buffers();
    w.u32(static_cast<std::uint32_t>(buffers.size()));
    for (const auto& [name, tensor] : buffers) {
      w.str(name);
      w.tensor(*tensor);
    }
  }

  w.u32(static_cast<std::uint32_t>(fixed.size()));
  for (const auto& fs : fixed) {
    w.u64(fs.stage);
    w.u64(fs.partition.quantized.size() + fs.partition.real.size());
    w.f64(fs.partition.ratio_used);
    w.u32(static_cast<std::uint32_t>(fs.partition.quantized.size()));
    for (std::size_t idx : fs.partition.quantized) w.u64(idx);
  }

  w.u32(32);
  for (std::uint64_t s : meta.rng_state) w.u64(s);
  w.close();
}

struct LoadedCheckpoint {
  CheckpointMeta meta;
  Network net;
  std::vector<FixedPartitionState> fixed;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  detail::BinReader r(path);
  const auto tag = r.magic();
  if (std::memcmp(tag.data(), "SQCK", 4) != 0)
    throw FormatError(path + ": not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version));

  LoadedCheckpoint out;
  out.meta.config_digest = r.u64();
  out.meta.scheme_kind = r.u8();
  out.meta.granularity = r.u8();
  r.u8();
  r.u8();
  out.meta.iteration = r.u64();
  out.meta.seed = r.u64();
  out.meta.arch = r.str();
  out.net = make_network(out.meta.arch);

  const std::uint32_t n_layers = r.u32();
  if (n_layers != out.net.size())
    throw CorruptionError(path + ": layer count mismatch for arch '" +
                          out.meta.arch + "'");
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string name = r.str();
    if (name != out.net.name(i))
      throw CorruptionError(path + ": layer name '" + name +
                            "' does not match architecture");
    Layer& layer = out.net.layer(i);
    const auto params = layer.params();
    const std::uint32_t n_params = r.u32();
    if (n_params != params.size())
      throw CorruptionError(path + ": parameter count mismatch in " + name);
    for (const ParamRef& p : params) {
      Tensor value = r.tensor();
      Tensor momentum = r.tensor();
      if (!value.same_shape(*p.value))
        throw CorruptionError(path + ": parameter shape mismatch in " + name);
      *p.value = std::move(value);
      *p.momentum = std::move(momentum);
    }
    const std::uint32_t n_buffers = r.u32();
    auto buffers = layer.buffers();
    if (n_buffers != buffers.size())
      throw CorruptionError(path + ": buffer count mismatch in " + name);
    for (auto& [bname, tensor] : buffers) {
      const std::string got = r.str();
      if (got != bname)
        throw CorruptionError(path + ": buffer '" + got + "' unexpected");
      *tensor = r.tensor();
    }
  }

  const std::uint32_t n_fixed = r.u32();
  out.fixed.resize(n_fixed);
  for (auto& fs : out.fixed) {
    fs.stage = r.u64();
    const std::uint64_t units = r.u64();
    fs.partition.ratio_used = r.f64();
    const std::uint32_t n_q = r.u32();
    fs.partition.quantized.resize(n_q);
    for (auto& idx : fs.partition.quantized) idx = r.u64();
    fs.partition.real.clear();
    std::size_t next = 0;
    for (std::size_t u = 0; u < units; ++u) {
      if (next < fs.partition.quantized.size() &&
          fs.partition.quantized[next] == u)
        ++next;
      else
        fs.partition.real.push_back(u);
    }
  }

  const std::uint32_t blob = r.u32();
  if (blob != 32) throw CorruptionError(path + ": bad RNG state blob size");
  for (auto& s : out.meta.rng_state) s = r.u64();
  return out;
}

// ---- quantized export (SQQX) -----------------------------------------------

inline constexpr std::uint32_t kExportVersion = 1;

/// SQQX v1: magic, version, architecture tag, scheme tag, then one record
/// per layer. Quantizable weight matrices are stored as per-row 32-bit
/// float alpha plus int8 codes; biases and normalization state are stored
/// as raw 64-bit tensors so a loaded export evaluates bit-identically to
/// its source checkpoint at full quantization ratio.
inline void export_quantized(const std::string& path, Network& net,
                             const std::string& arch,
                             const QuantScheme& scheme) {
  detail::BinWriter w(path);
  w.magic("SQQX");
  w.u32(kExportVersion);
  w.str(arch);
  w.u8(static_cast<std::uint8_t>(scheme.kind));

  std::uint32_t records = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    if (layer.quantizable())
      records += 2;  // weight matrix + bias
    else
      records += static_cast<std::uint32_t>(layer.params().size());
    records += static_cast<std::uint32_t>(layer.buffers().size());
  }
  w.u32(records);

  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& layer = net.layer(i);
    const std::string& lname = net.name(i);
    if (auto* wl = dynamic_cast<WeightedLayer*>(&layer)) {
      auto view = reshape_as_matrix(wl->weights());
      w.u8(0);  // quantized matrix record
      w.str(lname + ".weight");
      w.u32(static_cast<std::uint32_t>(view.rows()));
      w.u32(static_cast<std::uint32_t>(view.cols()));
      for (std::size_t row = 0; row < view.rows(); ++row) {
        const auto q = deploy_quantize_row(scheme, view.row(row));
        w.f32(static_cast<float>(q.alpha));
        w.i8_block(q.codes.data(), q.codes.size());
      }
      w.u8(1);  // raw tensor record
      w.str(lname + ".bias");
      w.tensor(wl->bias());
    } else {
      const auto params = layer.params();
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        w.u8(1);
        w.str(lname + ".param" + std::to_string(pi));
        w.tensor(*params[pi].value);
      }
    }
    for (const auto& [bname, tensor] : layer.buffers()) {
      w.u8(1);
      w.str(lname + "." + bname);
      w.tensor(*tensor);
    }
  }
  w.close();
}

struct LoadedExport {
  std::string arch;
  QuantScheme scheme;
  Network net;  // weights hold the low-bit reconstruction
};

inline LoadedExport load_quantized(const std::string& path) {
  detail::BinReader r(path);
  const auto tag = r.magic();
  if (std::memcmp(tag.data(), "SQQX", 4) != 0)
    throw FormatError(path + ": not a quantized export (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kExportVersion)
    throw FormatError(path + ": unsupported export version " +
                      std::to_string(version));

  LoadedExport out;
  out.arch = r.str();
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw CorruptionError(path + ": bad scheme tag");
  out.scheme.kind = static_cast<QuantKind>(kind);
  out.net = make_network(out.arch);

  // Index destinations by record name.
  std::vector<std::pair<std::string, Tensor*>> raw_slots;
  std::vector<std::pair<std::string, Tensor*>> weight_slots;
  for (std::size_t i = 0; i < out.net.size(); ++i) {
    Layer& layer = out.net.layer(i);
    const std::string& lname = out.net.name(i);
    if (auto* wl = dynamic_cast<WeightedLayer*>(&layer)) {
      weight_slots.emplace_back(lname + ".weight", &wl->weights());
      raw_slots.emplace_back(lname + ".bias", &wl->bias());
    } else {
      const auto params = layer.params();
      for (std::size_t pi = 0; pi < params.size(); ++pi)
        raw_slots.emplace_back(lname + ".param" + std::to_string(pi),
                               params[pi].value);
    }
    for (const auto& [bname, tensor] : layer.buffers())
      raw_slots.emplace_back(lname + "." + bname, tensor);
  }
  auto find = [&](auto& slots, const std::string& name) -> Tensor* {
    for (auto& [n, t] : slots)
      if (n == name) return t;
    throw CorruptionError(path + ": unexpected record '" + name + "'");
  };

  const std::uint32_t records = r.u32();
  for (std::uint32_t rec = 0; rec < records; ++rec) {
    const std::uint8_t type = r.u8();
    const std::string name = r.str();
    if (type == 0) {
      Tensor* dst = find(weight_slots, name);
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      auto view = reshape_as_matrix(*dst);
      if (view.rows() != rows || view.cols() != cols)
        throw CorruptionError(path + ": weight shape mismatch for " + name);
      std::vector<std::int8_t> codes(cols);
      for (std::uint32_t row = 0; row < rows; ++row) {
        const double alpha = static_cast<double>(r.f32());
        r.i8_block(codes.data(), codes.size());
        auto dst_row = view.row(row);
        for (std::uint32_t j = 0; j < cols; ++j)
          dst_row[j] = alpha * codes[j];
      }
    } else if (type == 1) {
      Tensor* dst = find(raw_slots, name);
      Tensor t = r.tensor();
      if (!t.same_shape(*dst))
        throw CorruptionError(path + ": tensor shape mismatch for " + name);
      *dst = std::move(t);
    } else {
      throw CorruptionError(path + ": unknown record type");
    }
  }
  return out;
}

}  // namespace sq

#endif  // SQ_CHECKPOINT_HPP_
