#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rgd/data.hpp"
#include "rgd/io.hpp"
#include "rgd/train.hpp"

namespace rgd {
namespace {

using Bytes = std::vector<std::uint8_t>;

TEST(SynthBlobs, SameSeedSameDataset) {
  EXPECT_EQ(synth_blobs(200, 8, 3, 0.3, 5), synth_blobs(200, 8, 3, 0.3, 5));
  EXPECT_FALSE(synth_blobs(200, 8, 3, 0.3, 5) == synth_blobs(200, 8, 3, 0.3, 6));
}

TEST(SynthBlobs, ImageLikeAndBalanced) {
  const auto ds = synth_blobs(301, 5, 3, 0.5, 2);
  ds.validate();
  EXPECT_TRUE(ds.image_like);
  for (double v : ds.inputs.data()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  std::vector<int> counts(3, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  EXPECT_EQ(counts, (std::vector<int>{101, 100, 100}));
}

TEST(SynthBlobs, ClusterMeansNearCentres) {
  const std::size_t n = 3000, classes = 3, dim = 4;
  const double spread = 0.2;
  BlobInfo info;
  const auto ds = synth_blobs(n, dim, classes, spread, 17, &info);
  const double tol = 3.0 * info.scale * spread / std::sqrt(static_cast<double>(n / classes));
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0;
      std::size_t c = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (ds.labels[i] == static_cast<int>(k)) {
          s += ds.input(i)[j];
          ++c;
        }
      }
      EXPECT_NEAR(s / static_cast<double>(c), info.centers[k][j], tol) << "class " << k << " dim " << j;
    }
  }
}

TEST(SynthBlobs, ZeroSpreadIsSeparableByALinearModel) {
  const auto ds = synth_blobs(100, 6, 2, 0.0, 4);
  for (std::size_t i = 2; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim; ++j) ASSERT_EQ(ds.input(i)[j], ds.input(i % 2)[j]);
  }
  TrainConfig cfg{.epochs = 50, .batch_size = 10, .learning_rate = 0.5, .track_curves = false};
  const auto trained = train_standard(MlpModel::random({6, 2}, 1), ds, cfg);
  EXPECT_EQ(clean_accuracy(trained.model, ds), 1.0);
}

TEST(SynthBlobs, DegenerateParametersRejected) {
  EXPECT_THROW(synth_blobs(10, 2, 1, 0.1, 0), ConfigError);
  EXPECT_THROW(synth_blobs(10, 0, 2, 0.1, 0), ConfigError);
  EXPECT_THROW(synth_blobs(10, 2, 2, -0.1, 0), ConfigError);
  EXPECT_THROW(synth_blobs(1, 2, 2, 0.1, 0), ConfigError);
}

TEST(ParseIdx, LabelsByHand) {
  const Bytes b{0, 0, 8, 1, 0, 0, 0, 2, 7, 2};
  EXPECT_EQ(parse_idx(b), Tensor::vector({7, 2}));
}

TEST(ParseIdx, ImagesByHand) {
  const Bytes b{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 0};
  const auto t = parse_idx(b);
  EXPECT_EQ(t.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(t.values(), (std::vector<double>{0.0, 1.0, 128.0 / 255.0, 0.0}));
}

ParseError::Kind kind_of(const Bytes& b, std::size_t* offset) {
  try {
    parse_idx(b);
  } catch (const ParseError& e) {
    *offset = e.offset();
    return e.kind();
  }
  ADD_FAILURE() << "no parse error";
  return ParseError::Kind::Malformed;
}

TEST(ParseIdx, DistinctErrorsWithOffsets) {
  std::size_t off = 0;
  Bytes truncated{0, 0, 8, 1, 0, 0, 0, 10};
  truncated.resize(8 + 9, 1);
  EXPECT_EQ(kind_of(truncated, &off), ParseError::Kind::Truncated);
  EXPECT_EQ(off, 17u);

  EXPECT_EQ(kind_of(Bytes{0, 0, 8, 2, 0, 0, 0, 1, 5}, &off), ParseError::Kind::BadMagic);
  EXPECT_EQ(off, 0u);

  EXPECT_EQ(kind_of(Bytes{0, 0, 8, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff}, &off),
            ParseError::Kind::DimensionOverflow);
  EXPECT_EQ(off, 12u);

  EXPECT_EQ(kind_of(Bytes{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 1}, &off), ParseError::Kind::DimensionOverflow);
  EXPECT_EQ(off, 8u);

  EXPECT_EQ(kind_of(Bytes{0, 0, 8}, &off), ParseError::Kind::Truncated);
  EXPECT_EQ(off, 3u);
}

TEST(ParseIdx, RoundTripIsByteExact) {
  Rng rng(77);
  for (int k = 0; k < 200; ++k) {
    Bytes b;
    const bool images = rng.below(2) == 0;
    std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(1 + rng.below(6))};
    if (images) {
      dims.push_back(static_cast<std::uint32_t>(1 + rng.below(5)));
      dims.push_back(static_cast<std::uint32_t>(1 + rng.below(5)));
    }
    detail::write_be32(b, images ? kIdxImagesMagic : kIdxLabelsMagic);
    std::size_t count = 1;
    for (auto d : dims) {
      detail::write_be32(b, d);
      count *= d;
    }
    for (std::size_t i = 0; i < count; ++i) b.push_back(static_cast<std::uint8_t>(rng.below(256)));
    ASSERT_EQ(write_idx(parse_idx(b)), b);
  }
}

TEST(DatasetFromIdx, FlattensImages) {
  const Bytes img{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255, 51, 102};
  const Bytes lab{0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
  const auto ds = dataset_from_idx(parse_idx(img), parse_idx(lab));
  EXPECT_EQ(ds.dim, 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(ds.input(1)[0], 51.0 / 255.0);
}

TEST(Split, PartitionAndDeterminism) {
  const auto ds = synth_blobs(101, 3, 2, 0.3, 9);
  const auto [train, test] = split(ds, 0.7, 0.3, 4);
  EXPECT_EQ(train.size() + test.size(), ds.size());
  EXPECT_EQ(train.size(), 71u);
  // Rows are distinct with probability one, so compare them as a multiset.
  std::multiset<std::vector<double>> all, parts;
  for (std::size_t i = 0; i < ds.size(); ++i) all.insert({ds.input(i).begin(), ds.input(i).end()});
  for (const Dataset* p : {&train, &test}) {
    for (std::size_t i = 0; i < p->size(); ++i) parts.insert({p->input(i).begin(), p->input(i).end()});
  }
  EXPECT_EQ(all, parts);
  const auto again = split(ds, 0.7, 0.3, 4);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, test);
}

TEST(Split, AllToTrainAndBadFractions) {
  const auto ds = synth_blobs(20, 3, 2, 0.3, 9);
  const auto [train, test] = split(ds, 1.0, 0.0, 1);
  EXPECT_EQ(train.size(), 20u);
  EXPECT_TRUE(test.empty());
  EXPECT_THROW(split(ds, 0.5, 0.6, 1), ConfigError);
  EXPECT_THROW(split(ds, -0.1, 1.1, 1), ConfigError);
}

TEST(DatasetFile, RoundTripClassificationAndRegression) {
  const auto ds = synth_blobs(50, 4, 3, 0.2, 3);
  EXPECT_EQ(decode_dataset(encode_dataset(ds)), ds);
  Dataset reg;
  reg.name = "reg";
  reg.dim = 2;
  reg.inputs = Tensor::matrix({{0.1, -0.4}, {2.0, 3.0}});
  reg.targets = {0.5, -1.25};
  EXPECT_EQ(decode_dataset(encode_dataset(reg)), reg);
}

TEST(DatasetFile, CorruptionReported) {
  auto bytes = encode_dataset(synth_blobs(10, 2, 2, 0.2, 3));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_dataset(bad), ParseError);
  bytes.pop_back();
  try {
    decode_dataset(bytes);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::Truncated);
  }
}

TEST(ModelFile, RoundTripBothKinds) {
  auto mlp = MlpModel::random({5, 7, 3}, 2);
  mlp.layers[0].bias[3] = -0.125;
  const auto back = std::get<MlpModel>(decode_model(encode_model(mlp)));
  ASSERT_EQ(back.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(back.layers[l].weight, mlp.layers[l].weight);
    EXPECT_EQ(back.layers[l].bias, mlp.layers[l].bias);
  }
  const TheoryModel t(Tensor::vector({1.0, -0.5}), Tensor::matrix({{0.25, 2.0, -1.0}, {3.0, 0.0, 1.5}}));
  const auto bytes = encode_model(t);
  EXPECT_EQ(bytes[6], kTheoryFlag);
  const auto tb = std::get<TheoryModel>(decode_model(bytes));
  EXPECT_EQ(tb.w1, t.w1);
  EXPECT_EQ(tb.w2, t.w2);
}

TEST(ModelFile, HeaderLayoutIsLittleEndian) {
  const MlpModel m({DenseLayer{Tensor::matrix({{1.0, 2.0}}), Tensor::vector({0.5})}});
  const auto b = encode_model(m);
  const Bytes head(b.begin(), b.begin() + 19);
  EXPECT_EQ(head, (Bytes{'R', 'G', 'D', 'M', 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0}));
  EXPECT_EQ(b.size(), 19u + 3 * 8);
}

TEST(ModelFile, BadVersionAndTrailingBytes) {
  auto b = encode_model(MlpModel::random({2, 2}, 1));
  auto v = b;
  v[4] = 9;
  try {
    decode_model(v);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::BadVersion);
    EXPECT_EQ(e.offset(), 4u);
  }
  b.push_back(0);
  EXPECT_THROW(decode_model(b), ParseError);
}

}  // namespace
}  // namespace rgd
