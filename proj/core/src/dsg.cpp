#include "protoset/dsg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace protoset {

DsgParams make_dsg(Index d, Index prototypes, const DsgInit& init, Rng& rng) {
  if (d < 1 || prototypes < 1) throw ConfigError("DSG sub-net needs d >= 1 and K >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double t_std = init.transform_std > 0.0 ? init.transform_std : 1.0 / std::sqrt(static_cast<double>(d));
  DsgParams p;
  p.predictor = Mat::NullaryExpr(d, prototypes, [&] { return init.predictor_std * normal(rng); });
  p.transform = Mat::NullaryExpr(d, d, [&] { return t_std * normal(rng); });
  if (init.gate_std > 0.0) {
    p.gate_logits = Mat::NullaryExpr(prototypes, d, [&] { return init.gate_std * normal(rng); });
  } else {
    p.gate_logits = Mat::Zero(prototypes, d);
  }
  return p;
}

void validate(const DsgParams& p) {
  const Index d = p.predictor.rows();
  const Index k = p.predictor.cols();
  if (k < 1 || d < 1) throw ShapeError("DSG predictor must be d x K with d, K >= 1");
  if (p.transform.rows() != d || p.transform.cols() != d) throw ShapeError("DSG transform must be d x d");
  if (p.gate_logits.rows() != k || p.gate_logits.cols() != d) throw ShapeError("DSG gate logits must be K x d");
  if (!p.predictor.allFinite() || !p.transform.allFinite() || !p.gate_logits.allFinite()) {
    throw ShapeError("DSG parameters must be finite");
  }
}

PrototypeAssignment predict_indicator(const DsgParams& p, const Mat& features) {
  require_shape(features.cols() == p.dim(), "predict_indicator: feature dimension " +
                                                std::to_string(features.cols()) + " != " +
                                                std::to_string(p.dim()));
  PrototypeAssignment z;
  z.raw = sigmoid(Mat(features * p.predictor));
  z.row_sums = z.raw.rowwise().sum();
  z.normalized = z.raw;
  for (Index i = 0; i < z.raw.rows(); ++i) {
    z.normalized.row(i) /= std::max(z.row_sums[i], kRowSumFloor);
  }
  return z;
}

Mat predict_indicator_backward(const DsgParams& p, const Mat& features,
                               const PrototypeAssignment& z, const Mat& d_normalized,
                               DsgParams& grads) {
  const Index n = z.raw.rows();
  Mat d_raw(n, z.raw.cols());
  for (Index i = 0; i < n; ++i) {
    if (z.row_sums[i] > kRowSumFloor) {
      const double dot = d_normalized.row(i).dot(z.normalized.row(i));
      d_raw.row(i) = (d_normalized.row(i).array() - dot) / z.row_sums[i];
    } else {
      d_raw.row(i) = d_normalized.row(i) / kRowSumFloor;
    }
  }
  const Mat d_logits = d_raw.cwiseProduct(z.raw.cwiseProduct((1.0 - z.raw.array()).matrix()));
  grads.predictor.noalias() += features.transpose() * d_logits;
  return d_logits * p.predictor.transpose();
}

Reconstruction reconstruct(const DsgParams& p, const Mat& features, const Mat& assignment) {
  require_shape(features.cols() == p.dim(), "reconstruct: feature dimension mismatch");
  require_shape(assignment.rows() == features.rows() && assignment.cols() == p.prototypes(),
                "reconstruct: assignment must be n x K");
  Reconstruction r;
  r.gate = assignment * sigmoid(p.gate_logits);
  r.transformed = features * p.transform.transpose();
  r.output = r.gate.cwiseProduct(r.transformed);
  r.norms = r.output.rowwise().norm();
  for (Index i = 0; i < r.output.rows(); ++i) {
    r.output.row(i) /= std::max(r.norms[i], kNormFloor);
  }
  return r;
}

ReconstructGrad reconstruct_backward(const DsgParams& p, const Mat& features,
                                     const Mat& assignment, const Reconstruction& r,
                                     const Mat& d_output, DsgParams& grads) {
  const Index n = r.output.rows();
  Mat d_prod(n, r.output.cols());
  for (Index i = 0; i < n; ++i) {
    if (r.norms[i] > kNormFloor) {
      const double dot = r.output.row(i).dot(d_output.row(i));
      d_prod.row(i) = (d_output.row(i) - dot * r.output.row(i)) / r.norms[i];
    } else {
      d_prod.row(i) = d_output.row(i) / kNormFloor;
    }
  }
  const Mat d_gate = d_prod.cwiseProduct(r.transformed);
  const Mat d_transformed = d_prod.cwiseProduct(r.gate);

  const Mat gates = sigmoid(p.gate_logits);
  grads.transform.noalias() += d_transformed.transpose() * features;
  const Mat d_gates = assignment.transpose() * d_gate;
  grads.gate_logits += d_gates.cwiseProduct(gates.cwiseProduct((1.0 - gates.array()).matrix()));

  ReconstructGrad g;
  g.d_features = d_transformed * p.transform;
  g.d_assignment = d_gate * gates.transpose();
  return g;
}

Mat pairwise_distances(const Mat& a, const Mat& b, std::uint64_t* evaluations) {
  require_shape(a.cols() == b.cols(), "pairwise_distances: dimension mismatch (" +
                                          std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  // Column-major copies make each medium contiguous.
  const Mat at = a.transpose();
  const Mat bt = b.transpose();
  Mat d(a.rows(), b.rows());
  for (Index j = 0; j < bt.cols(); ++j) {
    for (Index i = 0; i < at.cols(); ++i) {
      d(i, j) = (at.col(i) - bt.col(j)).squaredNorm();
    }
  }
  if (evaluations != nullptr) *evaluations += static_cast<std::uint64_t>(a.rows() * b.rows());
  return d;
}

DistanceGrad pairwise_distances_backward(const Mat& a, const Mat& b, const Mat& d_dist) {
  DistanceGrad g;
  const Vec row_sums = d_dist.rowwise().sum();
  const Vec col_sums = d_dist.colwise().sum().transpose();
  g.d_a = 2.0 * (row_sums.asDiagonal() * a - d_dist * b);
  g.d_b = 2.0 * (col_sums.asDiagonal() * b - d_dist.transpose() * a);
  return g;
}

Mat affinity(const Mat& distances, double delta) {
  if (!(delta > 0.0)) throw DomainError("affinity: bandwidth must be > 0");
  const double inv = 1.0 / (delta * delta);
  return distances.unaryExpr([inv](double v) { return std::exp(-v * inv); });
}

double median_bandwidth(const Mat& distances) {
  std::vector<double> upper;
  for (Index j = 1; j < distances.cols(); ++j) {
    for (Index i = 0; i < std::min(j, distances.rows()); ++i) upper.push_back(distances(i, j));
  }
  if (upper.empty()) return 1.0;
  const auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
  std::nth_element(upper.begin(), mid, upper.end());
  double median = *mid;
  if (upper.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(upper.begin(), mid));
  }
  return median > 0.0 ? std::sqrt(median) : 1.0;
}

double dsg_loss(const Mat& assignment, const Mat& distances) {
  require_shape(distances.rows() == distances.cols() && distances.rows() == assignment.rows(),
                "dsg_loss: distances must be n x n for an n x K assignment");
  return (distances * assignment).cwiseProduct(assignment).sum();
}

DsgLossGrad dsg_backward(const Mat& assignment, const Mat& distances, double scale) {
  require_shape(distances.rows() == distances.cols() && distances.rows() == assignment.rows(),
                "dsg_backward: distances must be n x n for an n x K assignment");
  DsgLossGrad g;
  g.d_assignment = scale * ((distances + distances.transpose()) * assignment);
  g.d_distances = scale * (assignment * assignment.transpose());
  return g;
}

std::vector<int> harden(const Mat& assignment) {
  std::vector<int> labels(static_cast<std::size_t>(assignment.rows()), 0);
  for (Index i = 0; i < assignment.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < assignment.cols(); ++k) {
      if (assignment(i, k) > assignment(i, best)) best = k;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

Mat one_hot(const std::vector<int>& labels, Index prototypes) {
  Mat z = Mat::Zero(static_cast<Index>(labels.size()), prototypes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= prototypes) throw DomainError("one_hot: label out of range");
    z(static_cast<Index>(i), k) = 1.0;
  }
  return z;
}

Vec project_to_simplex(const Vec& v) {
  Vec u = v;
  std::sort(u.data(), u.data() + u.size(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Index j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

RelaxedPartition relaxed_partition(const Mat& distances, Index prototypes,
                                   const RelaxedPartitionOptions& opts) {
  require_shape(distances.rows() == distances.cols(), "relaxed_partition: distances must be square");
  if (prototypes < 1) throw DomainError("relaxed_partition: K must be >= 1");
  const Index n = distances.rows();
  const Mat sym = distances + distances.transpose();
  // Step 1/L with L >= spectral norm of the gradient map keeps every step a descent step.
  const double lipschitz = sym.norm();
  const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

  Rng rng(opts.seed);
  std::exponential_distribution<double> expo(1.0);

  RelaxedPartition best;
  best.hard_value = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    // Flat Dirichlet starting rows.
    Mat z(n, prototypes);
    for (Index i = 0; i < n; ++i) {
      for (Index k = 0; k < prototypes; ++k) z(i, k) = expo(rng);
      z.row(i) /= z.row(i).sum();
    }
    for (int it = 0; it < opts.max_iterations; ++it) {
      const Mat grad = sym * z;
      Mat next(n, prototypes);
      for (Index i = 0; i < n; ++i) {
        next.row(i) = project_to_simplex((z.row(i) - step * grad.row(i)).transpose()).transpose();
      }
      const double change = (next - z).squaredNorm();
      z = std::move(next);
      if (change < opts.tolerance) break;
    }
    const auto labels = harden(z);
    const double hard = dsg_loss(one_hot(labels, prototypes), distances);
    if (hard < best.hard_value) {
      best.assignment = z;
      best.labels = labels;
      best.hard_value = hard;
      best.relaxed_value = dsg_loss(z, distances);
    }
  }
  return best;
}

}  // namespace protoset
