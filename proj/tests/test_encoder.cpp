#include <gtest/gtest.h>

#include "protoset/encoder.hpp"
#include "test_util.hpp"

namespace protoset {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_mat;

EncoderParams random_encoder(std::uint64_t seed, int layers = 2) {
  Rng rng(seed);
  EncoderShape shape{6, 9, 5, layers};
  EncoderParams p = make_encoder(shape, 0.0, rng);
  for (auto& l : p.layers) l.bias = random_mat(l.bias.size(), 1, seed + 1, 0.3);
  return p;
}

TEST(Encoder, ZeroParametersGiveZeroOutput) {
  EncoderParams p = random_encoder(1);
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Mat x = random_mat(4, 6, 2);
  EXPECT_TRUE(encode_set(p, x).isZero(0.0));
}

TEST(Encoder, IdentitySingleLayerPassesInputThrough) {
  EncoderParams p;
  p.layers.push_back({Mat::Identity(4, 4), Vec::Zero(4)});
  Vec x(4);
  x << 0.5, 1.0, 2.0, 0.25;
  EXPECT_EQ(encode(p, x), x);
}

TEST(Encoder, LeakySlopeOnHiddenLayer) {
  EncoderParams p;
  p.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2)});
  p.layers.push_back({Mat::Identity(2, 2), Vec::Zero(2)});
  Vec x(2);
  x << -2.0, 3.0;
  const Vec y = encode(p, x);
  EXPECT_DOUBLE_EQ(y[0], -0.5);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(Encoder, JacobianVectorProductMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EncoderParams p = random_encoder(seed, 3);
    const Vec x = random_mat(6, 1, 10 + seed);
    const Vec v = random_mat(6, 1, 20 + seed);
    const double h = 1e-5;
    const Vec numeric = (encode(p, x + h * v) - encode(p, x - h * v)) / (2.0 * h);
    EXPECT_LE(max_relative_error(encode_jvp(p, x, v), numeric), 1e-4);
  }
}

TEST(Encoder, SingleMediumSetMatchesEncode) {
  const EncoderParams p = random_encoder(3);
  const Mat x = random_mat(1, 6, 4);
  const Mat y = encode_set(p, x);
  ASSERT_EQ(y.rows(), 1);
  EXPECT_EQ(Vec(y.row(0).transpose()), encode(p, Vec(x.row(0).transpose())));
}

TEST(Encoder, DuplicatedAndPermutedMedia) {
  const EncoderParams p = random_encoder(4);
  const Mat x = random_mat(5, 6, 5);
  Mat dup(6, 6);
  dup << x, x.row(2);
  const Mat y = encode_set(p, dup);
  EXPECT_LE((y.row(5) - y.row(2)).cwiseAbs().maxCoeff(), 1e-14);

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
  perm.indices() << 3, 0, 4, 1, 2;
  EXPECT_TRUE((encode_set(p, perm * x) - perm * encode_set(p, x)).isZero(0.0));
}

TEST(Encoder, WeightTyingIsOrderIndependent) {
  const EncoderParams p = random_encoder(5);
  const Mat a = random_mat(3, 6, 6);
  const Mat b = random_mat(4, 6, 7);
  const Mat ya = encode_set(p, a);
  const Mat yb = encode_set(p, b);
  EXPECT_EQ(encode_set(p, b), yb);
  EXPECT_EQ(encode_set(p, a), ya);
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
  const EncoderParams p = random_encoder(6, 3);
  const Mat x = random_mat(4, 6, 8);
  const Mat w = random_mat(4, 5, 9);
  auto loss = [&](const EncoderParams& q, const Mat& in) { return (encode_set(q, in).array() * w.array()).sum(); };

  EncoderTrace trace;
  encode_set(p, x, trace);
  EncoderParams grads = p;
  for (auto& l : grads.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const Mat dx = encode_backward(p, trace, w, grads);

  EXPECT_LE(max_relative_error(dx, numeric_gradient([&](const Mat& in) { return loss(p, in); }, x)), 1e-4);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto weight_loss = [&](const Mat& wl) {
      EncoderParams q = p;
      q.layers[l].weight = wl;
      return loss(q, x);
    };
    auto bias_loss = [&](const Mat& bl) {
      EncoderParams q = p;
      q.layers[l].bias = bl;
      return loss(q, x);
    };
    EXPECT_LE(max_relative_error(grads.layers[l].weight, numeric_gradient(weight_loss, p.layers[l].weight)), 1e-4)
        << "layer " << l;
    EXPECT_LE(max_relative_error(grads.layers[l].bias, numeric_gradient(bias_loss, p.layers[l].bias)), 1e-4)
        << "layer " << l;
  }
}

TEST(Encoder, RejectsWrongInputWidth) {
  const EncoderParams p = random_encoder(7);
  EXPECT_THROW(encode_set(p, random_mat(2, 5, 1)), ShapeError);
}

}  // namespace
}  // namespace protoset
