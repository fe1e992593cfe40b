#pragma once

// Binary containers, all little-endian.
//
// Model checkpoint ("RGDM"):
//   magic "RGDM" | version u16 | flags u8 (bit 0: no bias, scalar head) |
//   layer count u32 | per layer: rows u32, cols u32, rows*cols f64 weights,
//   then rows f64 biases unless flag bit 0 is set.
//   The regression model is stored as two layers: w2 [m x n], then w1 as [1 x m].
//
// Dataset ("RGDD"):
//   magic "RGDD" | version u16 | kind u8 (0 classification, 1 regression) |
//   image_like u8 | samples u32 | dim u32 | class_count u32 |
//   name length u32 + bytes | samples*dim f64 inputs |
//   samples i32 labels (kind 0) or samples f64 targets (kind 1).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rgd/data.hpp"
#include "rgd/errors.hpp"
#include "rgd/model.hpp"
#include "rgd/tensor.hpp"

namespace rgd {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kTheoryFlag = 0x01;

using AnyModel = std::variant<MlpModel, TheoryModel>;

namespace io_detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(b_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw ParseError(ParseError::Kind::BadMagic, pos_, "expected magic \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }
  std::uint8_t u8() {
    need(1, "u8");
    return b_[pos_++];
  }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::vector<double> f64s(std::size_t n) {
    if (n > (b_.size() - pos_) / 8) {
      throw ParseError(ParseError::Kind::Truncated, b_.size(), "payload shorter than declared dimensions");
    }
    std::vector<double> out(n);
    for (double& v : out) v = f64();
    return out;
  }
  std::string str(std::size_t n) {
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw ParseError(ParseError::Kind::Truncated, pos_, std::string("truncated ") + what);
  }
  template <typename U>
  U le() {
    need(sizeof(U), "integer");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline std::size_t checked_product(std::uint32_t a, std::uint32_t b, std::size_t offset) {
  if (a == 0 || b == 0) throw ParseError(ParseError::Kind::DimensionOverflow, offset, "zero dimension");
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(b);
}

}  // namespace io_detail

inline std::vector<std::uint8_t> encode_model(const MlpModel& model) {
  io_detail::Writer w;
  w.bytes("RGDM");
  w.u16(kFormatVersion);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& L : model.layers) {
    w.u32(static_cast<std::uint32_t>(L.out_dim()));
    w.u32(static_cast<std::uint32_t>(L.in_dim()));
    w.f64s(L.weight.data());
    w.f64s(L.bias.data());
  }
  return w.take();
}

inline std::vector<std::uint8_t> encode_model(const TheoryModel& model) {
  io_detail::Writer w;
  w.bytes("RGDM");
  w.u16(kFormatVersion);
  w.u8(kTheoryFlag);
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(model.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(model.input_dim()));
  w.f64s(model.w2.data());
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(model.hidden_dim()));
  w.f64s(model.w1.data());
  return w.take();
}

inline AnyModel decode_model(std::span<const std::uint8_t> bytes) {
  io_detail::Reader r(bytes);
  r.expect_magic("RGDM");
  const std::size_t version_at = r.offset();
  if (r.u16() != kFormatVersion) throw ParseError(ParseError::Kind::BadVersion, version_at, "unsupported RGDM version");
  const std::uint8_t flags = r.u8();
  const bool theory = flags & kTheoryFlag;
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  if (count == 0 || (theory && count != 2)) {
    throw ParseError(ParseError::Kind::Malformed, count_at, "bad layer count");
  }
  std::vector<DenseLayer> layers;
  std::vector<Tensor> weights;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::size_t dims_at = r.offset();
    const std::uint32_t rows = r.u32(), cols = r.u32();
    Tensor W({rows, cols}, r.f64s(io_detail::checked_product(rows, cols, dims_at)));
    if (theory) {
      weights.push_back(std::move(W));
    } else {
      layers.push_back({std::move(W), Tensor({rows}, r.f64s(rows))});
    }
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::Malformed, r.offset(), "trailing bytes after checkpoint");
  if (theory) {
    if (weights[1].rows() != 1) throw ParseError(ParseError::Kind::Malformed, count_at, "theory head is not scalar");
    return TheoryModel(Tensor::vector(weights[1].values()), std::move(weights[0]));
  }
  try {
    return MlpModel(std::move(layers));
  } catch (const DimensionError& e) {
    throw ParseError(ParseError::Kind::Malformed, count_at, e.what());
  }
}

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  io_detail::Writer w;
  w.bytes("RGDD");
  w.u16(kFormatVersion);
  w.u8(ds.is_classification() ? 0 : 1);
  w.u8(ds.image_like ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.dim));
  w.u32(static_cast<std::uint32_t>(ds.class_count));
  w.u32(static_cast<std::uint32_t>(ds.name.size()));
  w.bytes(ds.name);
  if (!ds.empty()) w.f64s(ds.inputs.data());
  if (ds.is_classification()) {
    for (int y : ds.labels) w.i32(y);
  } else {
    w.f64s(ds.targets);
  }
  return w.take();
}

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  io_detail::Reader r(bytes);
  r.expect_magic("RGDD");
  const std::size_t version_at = r.offset();
  if (r.u16() != kFormatVersion) throw ParseError(ParseError::Kind::BadVersion, version_at, "unsupported RGDD version");
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw ParseError(ParseError::Kind::Malformed, kind_at, "unknown dataset kind");
  Dataset ds;
  ds.image_like = r.u8() != 0;
  const std::size_t dims_at = r.offset();
  const std::uint32_t n = r.u32();
  ds.dim = r.u32();
  ds.class_count = r.u32();
  if ((kind == 0) != (ds.class_count > 0)) throw ParseError(ParseError::Kind::Malformed, dims_at, "class count disagrees with kind");
  ds.name = r.str(r.u32());
  if (n > 0) ds.inputs = Tensor({n, ds.dim}, r.f64s(io_detail::checked_product(n, static_cast<std::uint32_t>(ds.dim), dims_at)));
  if (kind == 0) {
    for (std::uint32_t i = 0; i < n; ++i) ds.labels.push_back(r.i32());
  } else {
    ds.targets = r.f64s(n);
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::Malformed, r.offset(), "trailing bytes after dataset");
  ds.validate();
  return ds;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace rgd
