#pragma once

#include <cstdint>
#include <vector>

#include "protoset/linalg.hpp"

namespace protoset {

struct HardPartition {
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  friend bool operator==(const HardPartition&, const HardPartition&) = default;
};

// Sum over same-label pairs (i, j), both orders, of d_ij. Equals tr(Z^T D Z)
// for the one-hot Z of `p`.
double partition_value(const Mat& distances, const HardPartition& p);

struct BruteForceResult {
  HardPartition partition;
  double value = 0.0;
  std::uint64_t assignments_visited = 0;
};

inline constexpr int kBruteForceMaxMedia = 12;
inline constexpr std::uint64_t kBruteForceMaxAssignments = 50'000'000;

/// Exhaustive minimum of the hard DSG objective over all K^(n-1) labelings
/// with medium 0 fixed to label 0. Ties go to the lexicographically smallest
/// labeling. Throws CapacityError past the caps above.
BruteForceResult brute_force_dsg(const Mat& distances, int prototypes);

struct KMeansResult {
  HardPartition partition;
  Mat centroids;
  std::vector<double> objective_history;  // one entry per Lloyd iteration
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 100;

/// Lloyd's algorithm with k-means++ seeding.
KMeansResult kmeans(const Mat& points, int k, std::uint64_t seed);

/// Adjusted Rand index (contingency-table form). Two partitions that are both
/// a single cluster, or both all-singletons, score 1.
double ari(const HardPartition& p, const HardPartition& q);

}  // namespace protoset
