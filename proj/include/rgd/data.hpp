#pragma once

// Datasets for desk-scale experiments: Gaussian blobs, IDX (MNIST-style)
// containers, and seeded train/test splits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/model.hpp"
#include "rgd/rng.hpp"
#include "rgd/tensor.hpp"

namespace rgd {

struct Dataset {
  std::string name;
  std::size_t dim = 0;
  Tensor inputs;                 // [N x dim]; default-constructed when N == 0
  std::vector<int> labels;       // classification
  std::vector<double> targets;   // regression (class_count == 0)
  std::size_t class_count = 0;
  bool image_like = false;

  std::size_t size() const { return class_count > 0 ? labels.size() : targets.size(); }
  bool empty() const { return size() == 0; }
  bool is_classification() const { return class_count > 0; }

  std::span<const double> input(std::size_t i) const { return inputs.row(i); }

  Target target(std::size_t i) const {
    return is_classification() ? Target::label(labels[i]) : Target::value(targets[i]);
  }

  void validate() const {
    const std::size_t n = size();
    if (n > 0 && (inputs.rank() != 2 || inputs.rows() != n || inputs.cols() != dim)) {
      throw DimensionError("dataset '" + name + "': inputs " + shape_str(inputs.shape()) + " for " +
                           std::to_string(n) + " samples of dim " + std::to_string(dim));
    }
    if (is_classification()) {
      for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
          throw DomainError("dataset '" + name + "': label " + std::to_string(y) + " outside [0, " +
                            std::to_string(class_count) + ")");
        }
      }
    }
    if (n > 0 && !inputs.all_finite()) throw DomainError("dataset '" + name + "': non-finite input");
    if (image_like && n > 0) {
      for (double v : inputs.data()) {
        if (v < 0.0 || v > 1.0) throw DomainError("dataset '" + name + "': image entry outside [0,1]");
      }
    }
  }

  /// Rows `idx` in the given order.
  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.name = name;
    out.dim = dim;
    out.class_count = class_count;
    out.image_like = image_like;
    if (idx.empty()) return out;
    std::vector<double> flat;
    flat.reserve(idx.size() * dim);
    for (std::size_t i : idx) {
      const auto r = input(i);
      flat.insert(flat.end(), r.begin(), r.end());
      if (is_classification()) {
        out.labels.push_back(labels[i]);
      } else {
        out.targets.push_back(targets[i]);
      }
    }
    out.inputs = Tensor({idx.size(), dim}, std::move(flat));
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Cluster centres and the affine map applied by synth_blobs, in output
/// coordinates.
struct BlobInfo {
  std::vector<std::vector<double>> centers;
  double scale = 1.0;  // output spread = scale * requested spread
};

/// Gaussian clusters around seeded random centres in [0,1]^dim, labels by
/// cluster (round-robin so classes are balanced), then one global affine map
/// sending the data into [0,1].
inline Dataset synth_blobs(std::size_t n_samples, std::size_t dim, std::size_t classes, double spread,
                           std::uint64_t seed, BlobInfo* info = nullptr) {
  if (classes < 2) throw ConfigError("synth_blobs: need at least two classes");
  if (dim < 1) throw ConfigError("synth_blobs: dim must be positive");
  if (n_samples < classes) throw ConfigError("synth_blobs: fewer samples than classes");
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ConfigError("synth_blobs: spread must be finite and >= 0");

  Rng rng(seed);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    for (double& v : c) v = rng.uniform();
  }
  std::vector<double> flat(n_samples * dim);
  std::vector<int> labels(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::size_t k = i % classes;
    labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < dim; ++j) flat[i * dim + j] = centers[k][j] + spread * rng.normal();
  }
  const auto [lo_it, hi_it] = std::minmax_element(flat.begin(), flat.end());
  const double lo = *lo_it, hi = *hi_it;
  const double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
  for (double& v : flat) v = std::clamp((v - lo) * scale, 0.0, 1.0);
  if (info) {
    info->scale = scale;
    info->centers = centers;
    for (auto& c : info->centers) {
      for (double& v : c) v = (v - lo) * scale;
    }
  }
  Dataset ds;
  ds.name = "blobs";
  ds.dim = dim;
  ds.inputs = Tensor({n_samples, dim}, std::move(flat));
  ds.labels = std::move(labels);
  ds.class_count = classes;
  ds.image_like = true;
  return ds;
}

// ---------------------------------------------------------------------------
// IDX container (big-endian header, unsigned byte payload)

inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw ParseError(ParseError::Kind::Truncated, bytes.size(), "idx: header truncated");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

/// Labels files become a rank-1 tensor of raw byte values; image files a
/// rank-3 [N x rows x cols] tensor scaled by 1/255.
inline Tensor parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic && magic != kIdxImagesMagic) {
    throw ParseError(ParseError::Kind::BadMagic, 0, "idx: unsupported magic number");
  }
  const std::size_t ndims = magic & 0xff;
  Shape shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::size_t offset = 4 + 4 * d;
    const std::uint32_t v = detail::read_be32(bytes, offset);
    if (v == 0) throw ParseError(ParseError::Kind::DimensionOverflow, offset, "idx: zero dimension");
    if (count > std::numeric_limits<std::size_t>::max() / v) {
      throw ParseError(ParseError::Kind::DimensionOverflow, offset, "idx: dimension product overflows");
    }
    count *= v;
    shape.push_back(v);
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() - header < count) {
    throw ParseError(ParseError::Kind::Truncated, bytes.size(),
                     "idx: payload holds " + std::to_string(bytes.size() - header) + " of " +
                         std::to_string(count) + " bytes");
  }
  if (bytes.size() - header > count) {
    throw ParseError(ParseError::Kind::Malformed, header + count, "idx: trailing bytes");
  }
  std::vector<double> data(count);
  const bool images = magic == kIdxImagesMagic;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = bytes[header + i];
    data[i] = images ? v / 255.0 : v;
  }
  return Tensor(std::move(shape), std::move(data));
}

/// Inverse of parse_idx: rank-1 tensors are written as a labels file, rank-3
/// tensors as an images file.
inline std::vector<std::uint8_t> write_idx(const Tensor& t) {
  std::vector<std::uint8_t> out;
  if (t.rank() == 1) {
    detail::write_be32(out, kIdxLabelsMagic);
  } else if (t.rank() == 3) {
    detail::write_be32(out, kIdxImagesMagic);
  } else {
    throw DimensionError("write_idx: only rank-1 labels or rank-3 images, got " + shape_str(t.shape()));
  }
  for (std::size_t d : t.shape()) detail::write_be32(out, static_cast<std::uint32_t>(d));
  const double scale = t.rank() == 3 ? 255.0 : 1.0;
  for (double v : t.data()) {
    const long q = std::lround(v * scale);
    if (q < 0 || q > 255) throw DomainError("write_idx: value does not fit in a byte");
    out.push_back(static_cast<std::uint8_t>(q));
  }
  return out;
}

/// Pairs an images tensor with a labels tensor into a flat classification set.
inline Dataset dataset_from_idx(const Tensor& images, const Tensor& labels, std::string name = "idx") {
  if (images.rank() != 3 || labels.rank() != 1 || images.shape()[0] != labels.size()) {
    throw DimensionError("dataset_from_idx: images " + shape_str(images.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  const std::size_t n = labels.size();
  const std::size_t dim = images.shape()[1] * images.shape()[2];
  Dataset ds;
  ds.name = std::move(name);
  ds.dim = dim;
  ds.inputs = Tensor({n, dim}, images.values());
  int max_label = 0;
  for (double v : labels.data()) {
    ds.labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, static_cast<int>(v));
  }
  ds.class_count = static_cast<std::size_t>(std::max(max_label + 1, 2));
  ds.image_like = true;
  ds.validate();
  return ds;
}

/// Seeded shuffle, then the first round(N * train_fraction) samples go to the
/// training half.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, double test_fraction,
                                         std::uint64_t seed) {
  if (train_fraction < 0.0 || test_fraction < 0.0 || std::abs(train_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(ds.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.size())));
  std::span<const std::size_t> all(perm);
  return {ds.subset(all.first(n_train)), ds.subset(all.subspan(n_train))};
}

}  // namespace rgd
