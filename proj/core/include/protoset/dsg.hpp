#pragma once

#include <cstdint>
#include <vector>

#include "protoset/dataset.hpp"
#include "protoset/linalg.hpp"

namespace protoset {

inline constexpr double kRowSumFloor = 1e-8;
inline constexpr double kNormFloor = 1e-12;

/// Parameters of the dense-subgraph sub-net.
///   predictor:   d x K, membership logits are F * predictor
///   transform:   d x d, shared linear map of the second layer (u_i = U f_i)
///   gate_logits: K x d, one gate vector per prototype
struct DsgParams {
  Mat predictor;
  Mat transform;
  Mat gate_logits;

  Index prototypes() const { return predictor.cols(); }
  Index dim() const { return predictor.rows(); }
};

struct DsgInit {
  double predictor_std = 0.001;
  double transform_std = 0.0;  // <= 0: 1/sqrt(d)
  double gate_std = 0.0;       // 0: all gates start at sigmoid(0) = 0.5
};

DsgParams make_dsg(Index d, Index prototypes, const DsgInit& init, Rng& rng);
void validate(const DsgParams& p);

struct PrototypeAssignment {
  Mat raw;         // n x K, sigmoid memberships in [0, 1]
  Mat normalized;  // n x K, rows sum to one
  Vec row_sums;    // unfloored row sums of `raw`
};

PrototypeAssignment predict_indicator(const DsgParams& p, const Mat& features);

/// Backward through predict_indicator. Accumulates into grads.predictor and
/// returns d(loss)/d(features).
Mat predict_indicator_backward(const DsgParams& p, const Mat& features,
                               const PrototypeAssignment& z, const Mat& d_normalized,
                               DsgParams& grads);

struct Reconstruction {
  Mat output;       // n x d, unit rows
  Mat gate;         // n x d, mixed gates in (0, 1)
  Mat transformed;  // n x d, U f_i
  Vec norms;        // unfloored norms of gate .* transformed
};

Reconstruction reconstruct(const DsgParams& p, const Mat& features, const Mat& assignment);

struct ReconstructGrad {
  Mat d_features;
  Mat d_assignment;
};

ReconstructGrad reconstruct_backward(const DsgParams& p, const Mat& features,
                                     const Mat& assignment, const Reconstruction& r,
                                     const Mat& d_output, DsgParams& grads);

/// Squared Euclidean distances between the rows of `a` and `b`. When
/// `evaluations` is given it is incremented by rows(a) * rows(b).
Mat pairwise_distances(const Mat& a, const Mat& b, std::uint64_t* evaluations = nullptr);

struct DistanceGrad {
  Mat d_a;
  Mat d_b;
};

DistanceGrad pairwise_distances_backward(const Mat& a, const Mat& b, const Mat& d_dist);

// a_ij = exp(-d_ij / delta^2).
Mat affinity(const Mat& distances, double delta);

/// Default affinity bandwidth: delta with delta^2 the median of the strictly
/// upper-triangular entries. Returns 1 for fewer than two media or a zero median.
double median_bandwidth(const Mat& distances);

/// tr(Z^T D Z).
double dsg_loss(const Mat& assignment, const Mat& distances);

struct DsgLossGrad {
  Mat d_assignment;  // scale * (D + D^T) Z
  Mat d_distances;   // scale * Z Z^T
};

DsgLossGrad dsg_backward(const Mat& assignment, const Mat& distances, double scale);

/// argmax per row, ties to the smallest column.
std::vector<int> harden(const Mat& assignment);

// Hard labels -> one-hot n x K matrix.
Mat one_hot(const std::vector<int>& labels, Index prototypes);

struct RelaxedPartitionOptions {
  int restarts = 8;
  int max_iterations = 500;
  double tolerance = 1e-12;
  std::uint64_t seed = 0;
};

struct RelaxedPartition {
  Mat assignment;           // relaxed minimizer (rows on the simplex)
  std::vector<int> labels;  // harden(assignment)
  double relaxed_value = 0.0;
  double hard_value = 0.0;  // dsg_loss of the hardened labels
};

/// Projected-gradient descent of tr(Z^T D Z) over row-stochastic Z, from
/// several random starts; keeps the restart with the best hardened value.
RelaxedPartition relaxed_partition(const Mat& distances, Index prototypes,
                                   const RelaxedPartitionOptions& opts = {});

// Euclidean projection of v onto the probability simplex.
Vec project_to_simplex(const Vec& v);

}  // namespace protoset
