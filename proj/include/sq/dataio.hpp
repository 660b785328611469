#ifndef SQ_DATAIO_HPP_
#define SQ_DATAIO_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/rng.hpp"
#include "sq/tensor.hpp"

namespace sq {

/// Labeled image set. Images are N x C x H x W doubles; raw loaders scale
/// pixels to [0,1] and normalization is applied afterwards with statistics
/// from the training split.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 10;
  std::string split;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const {
    return {images.extent(1), images.extent(2), images.extent(3)};
  }
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct DataBundle {
  Dataset train;
  Dataset test;
  NormStats norm;
};

// ---- IDX format (MNIST) ----------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw CorruptionError(path + ": truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24),
                              static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace detail

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> bytes;
};

/// Parse an IDX file of unsigned bytes. The magic is big-endian
/// 0x0000'08'<ndims>; images use 0x00000803, labels 0x00000801.
inline IdxArray read_idx(const std::string& path,
                         std::size_t expected_ndims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::uint32_t magic = detail::read_be32(in, path);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08)
    throw FormatError(path + ": bad IDX magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }());
  const std::size_t ndims = magic & 0xff;
  if (ndims != expected_ndims)
    throw FormatError(path + ": expected " + std::to_string(expected_ndims) +
                      "-D IDX data, file has " + std::to_string(ndims) +
                      " dimensions");

  IdxArray arr;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    arr.dims.push_back(detail::read_be32(in, path));
    total *= arr.dims.back();
  }
  arr.bytes.resize(total);
  in.read(reinterpret_cast<char*>(arr.bytes.data()),
          static_cast<std::streamsize>(total));
  if (static_cast<std::size_t>(in.gcount()) != total)
    throw CorruptionError(path + ": expected " + std::to_string(total) +
                          " payload bytes, file is truncated");
  return arr;
}

/// Load an image/label IDX pair into a dataset with pixels in [0,1].
inline Dataset load_idx_dataset(const std::string& images_path,
                                const std::string& labels_path,
                                std::string split) {
  const IdxArray images = read_idx(images_path, 3);
  const IdxArray labels = read_idx(labels_path, 1);
  const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
  if (labels.dims[0] != n)
    throw CorruptionError(images_path + ": " + std::to_string(n) +
                          " images but " + std::to_string(labels.dims[0]) +
                          " labels");
  Dataset ds;
  ds.split = std::move(split);
  ds.images = Tensor({n, 1, h, w});
  for (std::size_t i = 0; i < images.bytes.size(); ++i)
    ds.images[i] = images.bytes[i] / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels.bytes[i] > 9)
      throw CorruptionError(labels_path + ": label byte " +
                            std::to_string(int(labels.bytes[i])) +
                            " out of range");
    ds.labels[i] = labels.bytes[i];
  }
  return ds;
}

inline void write_idx_images(const std::string& path, std::size_t n,
                             std::size_t h, std::size_t w,
                             const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  detail::write_be32(out, 0x00000803);
  detail::write_be32(out, static_cast<std::uint32_t>(n));
  detail::write_be32(out, static_cast<std::uint32_t>(h));
  detail::write_be32(out, static_cast<std::uint32_t>(w));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  detail::write_be32(out, 0x00000801);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

// ---- normalization ---------------------------------------------------------

/// Per-channel mean/stddev, computed on the training split only.
inline NormStats compute_norm_stats(const Dataset& train) {
  const std::size_t c = train.images.extent(1);
  const std::size_t per = train.images.size() / c;
  NormStats stats;
  stats.mean.assign(c, 0.0);
  stats.stddev.assign(c, 0.0);
  const std::size_t n = train.images.extent(0);
  const std::size_t plane = train.images.extent(2) * train.images.extent(3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = train.images.data() + (i * c + ch) * plane;
      for (std::size_t s = 0; s < plane; ++s) stats.mean[ch] += p[s];
    }
  for (std::size_t ch = 0; ch < c; ++ch) stats.mean[ch] /= double(per);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* p = train.images.data() + (i * c + ch) * plane;
      for (std::size_t s = 0; s < plane; ++s) {
        const double d = p[s] - stats.mean[ch];
        stats.stddev[ch] += d * d;
      }
    }
  for (std::size_t ch = 0; ch < c; ++ch) {
    stats.stddev[ch] = std::sqrt(stats.stddev[ch] / double(per));
    if (stats.stddev[ch] < 1e-8) stats.stddev[ch] = 1.0;
  }
  return stats;
}

inline void normalize(Dataset& ds, const NormStats& stats) {
  const std::size_t c = ds.images.extent(1);
  const std::size_t n = ds.images.extent(0);
  const std::size_t plane = ds.images.extent(2) * ds.images.extent(3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = ds.images.data() + (i * c + ch) * plane;
      for (std::size_t s = 0; s < plane; ++s)
        p[s] = (p[s] - stats.mean[ch]) / stats.stddev[ch];
    }
}

inline DataBundle finish_bundle(Dataset train, Dataset test) {
  DataBundle bundle;
  bundle.norm = compute_norm_stats(train);
  normalize(train, bundle.norm);
  normalize(test, bundle.norm);
  bundle.train = std::move(train);
  bundle.test = std::move(test);
  return bundle;
}

inline std::string pick_existing(const std::string& dir,
                                 std::initializer_list<const char*> names) {
  namespace fs = std::filesystem;
  for (const char* n : names) {
    const auto p = fs::path(dir) / n;
    if (fs::exists(p)) return p.string();
  }
  return (fs::path(dir) / *names.begin()).string();  // loader reports IoError
}

inline DataBundle load_mnist(const std::string& dir) {
  Dataset train = load_idx_dataset(
      pick_existing(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"}),
      pick_existing(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"}),
      "train");
  Dataset test = load_idx_dataset(
      pick_existing(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"}),
      pick_existing(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"}),
      "test");
  return finish_bundle(std::move(train), std::move(test));
}

// ---- CIFAR-10 binary batches -----------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;  // 1 label + 3*1024

/// Append one CIFAR-10 binary batch (3073-byte records) to pixels/labels.
inline std::size_t read_cifar_batch(const std::string& path,
                                    std::vector<double>& pixels,
                                    std::vector<int>& labels) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path);
  const auto file_size = static_cast<std::size_t>(in.tellg());
  if (file_size == 0 || file_size % kCifarRecordBytes != 0)
    throw CorruptionError(path + ": size " + std::to_string(file_size) +
                          " is not a whole number of 3073-byte records");
  in.seekg(0);
  const std::size_t records = file_size / kCifarRecordBytes;
  std::vector<std::uint8_t> buf(kCifarRecordBytes);
  for (std::size_t r = 0; r < records; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()), kCifarRecordBytes);
    if (!in) throw CorruptionError(path + ": truncated record");
    if (buf[0] > 9)
      throw CorruptionError(path + ": label byte " +
                            std::to_string(int(buf[0])) + " out of range");
    labels.push_back(buf[0]);
    for (std::size_t i = 1; i < kCifarRecordBytes; ++i)
      pixels.push_back(buf[i] / 255.0);
  }
  return records;
}

inline Dataset load_cifar10_split(const std::vector<std::string>& paths,
                                  std::string split) {
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& p : paths) read_cifar_batch(p, pixels, labels);
  Dataset ds;
  ds.split = std::move(split);
  ds.images = Tensor({labels.size(), 3, 32, 32}, std::move(pixels));
  ds.labels = std::move(labels);
  return ds;
}

inline DataBundle load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> train_paths;
  for (int i = 1; i <= 5; ++i)
    train_paths.push_back(
        (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"))
            .string());
  Dataset train = load_cifar10_split(train_paths, "train");
  Dataset test = load_cifar10_split(
      {(fs::path(dir) / "test_batch.bin").string()}, "test");
  return finish_bundle(std::move(train), std::move(test));
}

// ---- synthetic digits ------------------------------------------------------

namespace detail {

// 5x7 bitmap font for digits 0-9, one row per byte (low 5 bits used).
inline constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigitFont{{
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
}};

}  // namespace detail

struct SyntheticOptions {
  std::size_t image_size = 28;
  std::size_t glyph_scale = 3;  // 5x7 font rendered at 15x21
  int max_jitter = 4;           // uniform translation in pixels
  double noise_sigma = 0.3;     // additive Gaussian pixel noise
  double min_intensity = 0.6;   // per-image stroke brightness
};

/// Deterministic MNIST-like classification task: scaled bitmap digits with
/// random translation, per-image stroke intensity, and pixel noise. Raw
/// pixels are quantized to bytes so the task round-trips through IDX files
/// unchanged.
inline Dataset make_synthetic_split(std::size_t n, std::uint64_t seed,
                                    std::uint64_t split_tag, std::string split,
                                    const SyntheticOptions& opt = {}) {
  const std::size_t sz = opt.image_size;
  Dataset ds;
  ds.split = std::move(split);
  ds.images = Tensor({n, 1, sz, sz});
  ds.labels.resize(n);
  const std::size_t gw = 5 * opt.glyph_scale, gh = 7 * opt.glyph_scale;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::for_stream(seed, 0x5D1617, split_tag, i);
    const int digit = static_cast<int>(rng.below(10));
    ds.labels[i] = digit;
    const int x0 =
        static_cast<int>((sz - gw) / 2) +
        static_cast<int>(rng.below(2 * opt.max_jitter + 1)) - opt.max_jitter;
    const int y0 =
        static_cast<int>((sz - gh) / 2) +
        static_cast<int>(rng.below(2 * opt.max_jitter + 1)) - opt.max_jitter;
    const double intensity = rng.uniform(opt.min_intensity, 1.0);
    double* img = ds.images.data() + i * sz * sz;
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 5; ++c) {
        if (!((detail::kDigitFont[digit][r] >> (4 - c)) & 1)) continue;
        for (std::size_t dy = 0; dy < opt.glyph_scale; ++dy)
          for (std::size_t dx = 0; dx < opt.glyph_scale; ++dx) {
            const int y = y0 + static_cast<int>(r * opt.glyph_scale + dy);
            const int x = x0 + static_cast<int>(c * opt.glyph_scale + dx);
            if (y >= 0 && y < static_cast<int>(sz) && x >= 0 &&
                x < static_cast<int>(sz))
              img[y * sz + x] = intensity;
          }
      }
    for (std::size_t p = 0; p < sz * sz; ++p) {
      double v = img[p] + opt.noise_sigma * rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      img[p] = std::round(v * 255.0) / 255.0;  // byte-exact for IDX export
    }
  }
  return ds;
}

inline DataBundle make_synthetic_digits(std::size_t n_train,
                                        std::size_t n_test, std::uint64_t seed,
                                        const SyntheticOptions& opt = {}) {
  Dataset train = make_synthetic_split(n_train, seed, 1, "train", opt);
  Dataset test = make_synthetic_split(n_test, seed, 2, "test", opt);
  return finish_bundle(std::move(train), std::move(test));
}

/// Write a synthetic split to IDX files (same layout as the MNIST pair).
inline void write_synthetic_idx(const Dataset& ds, const std::string& images_path,
                                const std::string& labels_path) {
  std::vector<std::uint8_t> pixels(ds.images.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] =
        static_cast<std::uint8_t>(std::lround(ds.images[i] * 255.0));
  write_idx_images(images_path, ds.images.extent(0), ds.images.extent(2),
                   ds.images.extent(3), pixels);
  std::vector<std::uint8_t> labels(ds.labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<std::uint8_t>(ds.labels[i]);
  write_idx_labels(labels_path, labels);
}

// ---- batch iteration -------------------------------------------------------

/// Deterministic minibatch sequence: one Fisher-Yates permutation per
/// (seed, epoch), final partial batch dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                std::size_t epoch)
      : ds_(&ds), batch_(batch_size) {
    const std::size_t n = ds.size();
    if (batch_size == 0 || batch_size > n)
      throw ArgumentError("batch size " + std::to_string(batch_size) +
                          " invalid for dataset of " + std::to_string(n));
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng = Rng::for_stream(seed, 0x5375FF1E, epoch);
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.below(i + 1);
      std::swap(order_[i], order_[j]);
    }
  }

  std::size_t batches() const { return ds_->size() / batch_; }

  void skip(std::size_t k) { cursor_ = k; }

  bool next(Tensor& x, std::vector<int>& y) {
    if (cursor_ >= batches()) return false;
    const auto shape = ds_->sample_shape();
    const std::size_t sample = shape[0] * shape[1] * shape[2];
    x = Tensor({batch_, shape[0], shape[1], shape[2]});
    y.resize(batch_);
    for (std::size_t b = 0; b < batch_; ++b) {
      const std::size_t idx = order_[cursor_ * batch_ + b];
      const double* src = ds_->images.data() + idx * sample;
      std::copy(src, src + sample, x.data() + b * sample);
      y[b] = ds_->labels[idx];
    }
    ++cursor_;
    return true;
  }

 private:
  const Dataset* ds_;
  std::size_t batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace sq

#endif  // SQ_DATAIO_HPP_
