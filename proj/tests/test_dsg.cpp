#include <gtest/gtest.h>

#include <cmath>

#include "protoset/dsg.hpp"
#include "protoset/oracle.hpp"
#include "test_util.hpp"

namespace protoset {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_distances;
using testing::random_mat;

DsgParams random_dsg(Index d, Index k, std::uint64_t seed) {
  Rng rng(seed);
  return make_dsg(d, k, DsgInit{0.5, 0.0, 0.5}, rng);
}

// Two zero blocks {0,1} and {2,3}, 4 between them.
Mat block_distances() {
  Mat d = Mat::Zero(4, 4);
  for (Index i : {0, 1}) {
    for (Index j : {2, 3}) {
      d(i, j) = 4.0;
      d(j, i) = 4.0;
    }
  }
  return d;
}

Mat random_simplex_rows(Index n, Index k, std::uint64_t seed) {
  Mat z = random_mat(n, k, seed).array().exp().matrix();
  for (Index i = 0; i < n; ++i) z.row(i) /= z.row(i).sum();
  return z;
}

TEST(PredictIndicator, ZeroPredictorGivesHalfAndUniform) {
  DsgParams p = random_dsg(3, 4, 1);
  p.predictor.setZero();
  const auto z = predict_indicator(p, random_mat(5, 3, 2));
  EXPECT_TRUE(z.raw.isApprox(Mat::Constant(5, 4, 0.5)));
  EXPECT_TRUE(z.normalized.isApprox(Mat::Constant(5, 4, 0.25)));
}

TEST(PredictIndicator, SaturatedLogitsGiveOneHot) {
  DsgParams p = random_dsg(2, 3, 1);
  p.predictor << 1000.0, -1000.0, -1000.0,  //
      0.0, 0.0, 0.0;
  Mat f(1, 2);
  f << 1.0, 0.0;
  const auto z = predict_indicator(p, f);
  EXPECT_DOUBLE_EQ(z.normalized(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(z.normalized(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(z.normalized(0, 2), 0.0);
}

TEST(PredictIndicator, RowsLieOnSimplex) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DsgParams p = random_dsg(4, 6, seed);
    const auto z = predict_indicator(p, random_mat(7, 4, seed + 100, 2.0));
    EXPECT_GE(z.normalized.minCoeff(), 0.0);
    for (Index i = 0; i < z.normalized.rows(); ++i) EXPECT_NEAR(z.normalized.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(PredictIndicator, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DsgParams p = random_dsg(4, 5, seed);
    const Mat f = random_mat(6, 4, seed + 50);
    const Mat w = random_mat(6, 5, seed + 80);
    auto loss = [&](const DsgParams& q, const Mat& feats) {
      return (predict_indicator(q, feats).normalized.array() * w.array()).sum();
    };
    DsgParams grads = p;
    grads.predictor.setZero();
    const auto z = predict_indicator(p, f);
    const Mat df = predict_indicator_backward(p, f, z, w, grads);

    auto wrt_w = [&](const Mat& x) {
      DsgParams q = p;
      q.predictor = x;
      return loss(q, f);
    };
    EXPECT_LE(max_relative_error(grads.predictor, numeric_gradient(wrt_w, p.predictor)), 1e-4) << seed;
    EXPECT_LE(max_relative_error(df, numeric_gradient([&](const Mat& x) { return loss(p, x); }, f)), 1e-4)
        << seed;
  }
}

TEST(Reconstruct, TransparentGateNormalizesInput) {
  DsgParams p = random_dsg(3, 2, 1);
  p.transform.setIdentity();
  p.gate_logits.setConstant(1000.0);
  const Mat f = random_mat(4, 3, 2);
  const Mat z = random_simplex_rows(4, 2, 3);
  const auto r = reconstruct(p, f, z);
  for (Index i = 0; i < 4; ++i) EXPECT_TRUE(r.output.row(i).isApprox(f.row(i).normalized(), 1e-12));
}

TEST(Reconstruct, OutputRowsHaveUnitNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const DsgParams p = random_dsg(5, 3, seed);
    const auto r = reconstruct(p, random_mat(8, 5, seed + 1), random_simplex_rows(8, 3, seed + 2));
    for (Index i = 0; i < 8; ++i) EXPECT_NEAR(r.output.row(i).norm(), 1.0, 1e-9);
  }
}

TEST(Reconstruct, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DsgParams p = random_dsg(4, 3, seed);
    const Mat f = random_mat(5, 4, seed + 10);
    const Mat z = random_simplex_rows(5, 3, seed + 20);
    const Mat w = random_mat(5, 4, seed + 30);
    auto loss = [&](const DsgParams& q, const Mat& feats, const Mat& assign) {
      return (reconstruct(q, feats, assign).output.array() * w.array()).sum();
    };
    DsgParams grads = p;
    grads.transform.setZero();
    grads.gate_logits.setZero();
    grads.predictor.setZero();
    const auto r = reconstruct(p, f, z);
    const auto g = reconstruct_backward(p, f, z, r, w, grads);

    auto wrt_u = [&](const Mat& x) {
      DsgParams q = p;
      q.transform = x;
      return loss(q, f, z);
    };
    auto wrt_g = [&](const Mat& x) {
      DsgParams q = p;
      q.gate_logits = x;
      return loss(q, f, z);
    };
    EXPECT_LE(max_relative_error(grads.transform, numeric_gradient(wrt_u, p.transform)), 1e-4) << seed;
    EXPECT_LE(max_relative_error(grads.gate_logits, numeric_gradient(wrt_g, p.gate_logits)), 1e-4) << seed;
    EXPECT_LE(max_relative_error(g.d_features, numeric_gradient([&](const Mat& x) { return loss(p, x, z); }, f)),
              1e-4)
        << seed;
    EXPECT_LE(
        max_relative_error(g.d_assignment, numeric_gradient([&](const Mat& x) { return loss(p, f, x); }, z)),
        1e-4)
        << seed;
  }
}

TEST(PairwiseDistances, Basics) {
  Mat a(2, 3);
  a << 1, 0, 0,  //
      0, 1, 0;
  const Mat d = pairwise_distances(a, a);
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(d(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 2.0);
}

TEST(PairwiseDistances, MatchesScalarLoopAndCounts) {
  const Mat a = random_mat(7, 5, 1);
  const Mat b = random_mat(4, 5, 2);
  std::uint64_t evals = 0;
  const Mat d = pairwise_distances(a, b, &evals);
  EXPECT_EQ(evals, 28u);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 4; ++j) {
      double ref = 0.0;
      for (Index c = 0; c < 5; ++c) ref += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
      EXPECT_NEAR(d(i, j), ref, 1e-10);
    }
  }
  EXPECT_THROW(pairwise_distances(a, random_mat(2, 4, 3)), ShapeError);
}

TEST(PairwiseDistances, SelfDistancesAreValid) {
  const Mat a = random_mat(9, 4, 5);
  const Mat d = pairwise_distances(a, a);
  EXPECT_TRUE(d.isApprox(d.transpose()));
  EXPECT_GE(d.minCoeff(), 0.0);
  for (Index i = 0; i < 9; ++i) EXPECT_EQ(d(i, i), 0.0);
}

TEST(PairwiseDistances, BackwardMatchesFiniteDifferences) {
  const Mat a = random_mat(4, 3, 1);
  const Mat b = random_mat(5, 3, 2);
  const Mat w = random_mat(4, 5, 3);
  const auto g = pairwise_distances_backward(a, b, w);
  auto loss_a = [&](const Mat& x) { return (pairwise_distances(x, b).array() * w.array()).sum(); };
  auto loss_b = [&](const Mat& x) { return (pairwise_distances(a, x).array() * w.array()).sum(); };
  EXPECT_LE(max_relative_error(g.d_a, numeric_gradient(loss_a, a)), 1e-4);
  EXPECT_LE(max_relative_error(g.d_b, numeric_gradient(loss_b, b)), 1e-4);
}

TEST(Affinity, ValuesAndMonotonicity) {
  Mat d(1, 3);
  d << 0.0, 4.0, 9.0;
  const Mat a = affinity(d, 2.0);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
  EXPECT_NEAR(a(0, 1), 0.36787944117144233, 1e-15);
  EXPECT_GT(a(0, 1), a(0, 2));
  EXPECT_GT(a(0, 2), 0.0);
  EXPECT_THROW(affinity(d, 0.0), DomainError);
  EXPECT_THROW(affinity(d, -1.0), DomainError);
}

TEST(Affinity, MedianBandwidth) {
  Mat d = Mat::Zero(3, 3);
  d(0, 1) = d(1, 0) = 1.0;
  d(0, 2) = d(2, 0) = 9.0;
  d(1, 2) = d(2, 1) = 4.0;
  EXPECT_DOUBLE_EQ(median_bandwidth(d), 2.0);
  EXPECT_DOUBLE_EQ(median_bandwidth(Mat::Zero(1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(median_bandwidth(Mat::Zero(4, 4)), 1.0);
}

TEST(DsgLoss, BlockExample) {
  const Mat d = block_distances();
  EXPECT_DOUBLE_EQ(dsg_loss(one_hot({0, 0, 1, 1}, 2), d), 0.0);
  EXPECT_DOUBLE_EQ(dsg_loss(Mat::Constant(4, 2, 0.5), d), 16.0);
  EXPECT_DOUBLE_EQ(dsg_loss(one_hot({0, 1, 0, 1}, 2), d), 16.0);
}

TEST(DsgLoss, BlockExampleByEnumeration) {
  // Every labeling of 4 media into 2 groups, summed entry by entry.
  const Mat d = block_distances();
  double best = 1e300;
  for (int code = 0; code < 16; ++code) {
    std::vector<int> labels{code & 1, (code >> 1) & 1, (code >> 2) & 1, (code >> 3) & 1};
    double value = 0.0;
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) value += d(i, j);
      }
    }
    EXPECT_DOUBLE_EQ(dsg_loss(one_hot(labels, 2), d), value);
    best = std::min(best, value);
  }
  EXPECT_EQ(best, 0.0);
}

TEST(DsgLoss, BackwardTrivialCases) {
  const Mat z = random_simplex_rows(4, 3, 1);
  const auto zero_d = dsg_backward(z, Mat::Zero(4, 4), 1.0);
  EXPECT_TRUE(zero_d.d_assignment.isZero(0.0));
  const auto zero_z = dsg_backward(Mat::Zero(4, 3), random_distances(4, 2, 2), 1.0);
  EXPECT_TRUE(zero_z.d_distances.isZero(0.0));
}

TEST(DsgLoss, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Mat z = random_simplex_rows(5, 3, seed);
    const Mat d = random_distances(5, 3, seed + 40);
    const auto g = dsg_backward(z, d, 0.7);
    auto wrt_z = [&](const Mat& x) { return 0.7 * dsg_loss(x, d); };
    auto wrt_d = [&](const Mat& x) { return 0.7 * dsg_loss(z, x); };
    EXPECT_LE(max_relative_error(g.d_assignment, numeric_gradient(wrt_z, z)), 1e-4) << seed;
    EXPECT_LE(max_relative_error(g.d_distances, numeric_gradient(wrt_d, d)), 1e-4) << seed;
  }
}

TEST(Harden, Rules) {
  EXPECT_EQ(harden(one_hot({2, 0, 1}, 3)), (std::vector<int>{2, 0, 1}));
  EXPECT_EQ(harden(Mat::Constant(1, 4, 0.25)), std::vector<int>{0});
  Mat row(1, 3);
  row << 0.2, 0.5, 0.3;
  EXPECT_EQ(harden(row), std::vector<int>{1});
  EXPECT_THROW(one_hot({0, 3}, 3), DomainError);
}

TEST(ProjectToSimplex, MatchesBisectionReference) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Vec v = random_mat(6, 1, seed, 2.0);
    // Reference: find theta with sum(max(v - theta, 0)) = 1 by bisection.
    double lo = v.minCoeff() - 1.0;
    double hi = v.maxCoeff();
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((v.array() - mid).max(0.0).sum() > 1.0 ? lo : hi) = mid;
    }
    const Vec ref = (v.array() - 0.5 * (lo + hi)).max(0.0).matrix();
    const Vec p = project_to_simplex(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE((p - ref).cwiseAbs().maxCoeff(), 1e-10) << seed;
  }
}

TEST(RelaxedPartition, FindsBlocks) {
  const auto r = relaxed_partition(block_distances(), 2);
  EXPECT_DOUBLE_EQ(r.hard_value, 0.0);
  EXPECT_EQ(r.labels[0], r.labels[1]);
  EXPECT_EQ(r.labels[2], r.labels[3]);
  EXPECT_NE(r.labels[0], r.labels[2]);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(r.assignment.row(i).sum(), 1.0, 1e-12);
}

TEST(RelaxedPartition, SameSeedSameResult) {
  const Mat d = random_distances(7, 2, 3);
  RelaxedPartitionOptions opts;
  opts.seed = 9;
  const auto a = relaxed_partition(d, 3, opts);
  const auto b = relaxed_partition(d, 3, opts);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.assignment, b.assignment);
}

}  // namespace
}  // namespace protoset
