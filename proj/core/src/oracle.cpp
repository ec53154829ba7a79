#include "protoset/oracle.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <string>

namespace protoset {

double partition_value(const Mat& distances, const HardPartition& p) {
  const auto n = static_cast<Index>(p.size());
  require_shape(distances.rows() == n && distances.cols() == n,
                "partition_value: distance matrix does not match partition size");
  double value = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (p.labels[static_cast<std::size_t>(i)] == p.labels[static_cast<std::size_t>(j)]) value += distances(i, j);
    }
  }
  return value;
}

namespace {

struct Search {
  const Mat& d;
  int k;
  Index n;
  std::vector<int> labels;
  std::vector<int> best_labels;
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t visited = 0;

  // Depth-first in lexicographic order, so the first minimum found is the
  // lexicographically smallest one.
  void run(Index i, double partial) {
    if (i == n) {
      ++visited;
      if (partial < best) {
        best = partial;
        best_labels = labels;
      }
      return;
    }
    for (int c = 0; c < k; ++c) {
      double add = d(i, i);
      for (Index j = 0; j < i; ++j) {
        if (labels[static_cast<std::size_t>(j)] == c) add += d(i, j) + d(j, i);
      }
      labels[static_cast<std::size_t>(i)] = c;
      run(i + 1, partial + add);
    }
  }
};

}  // namespace

BruteForceResult brute_force_dsg(const Mat& distances, int prototypes) {
  require_shape(distances.rows() == distances.cols(), "brute_force_dsg: distance matrix must be square");
  if (prototypes < 1) throw DomainError("brute_force_dsg: K must be >= 1");
  const Index n = distances.rows();
  if (n > kBruteForceMaxMedia) {
    throw CapacityError("brute_force_dsg: " + std::to_string(n) + " media exceeds the limit of " +
                        std::to_string(kBruteForceMaxMedia));
  }
  BruteForceResult out;
  if (n == 0) return out;

  std::uint64_t space = 1;
  for (Index i = 1; i < n; ++i) {
    space *= static_cast<std::uint64_t>(prototypes);
    if (space > kBruteForceMaxAssignments) {
      throw CapacityError("brute_force_dsg: K^(n-1) exceeds " + std::to_string(kBruteForceMaxAssignments) +
                          " assignments");
    }
  }

  Search s{distances, prototypes, n, std::vector<int>(static_cast<std::size_t>(n), 0), {}};
  // Medium 0 is pinned to label 0.
  s.run(1, distances(0, 0));
  out.partition.labels = std::move(s.best_labels);
  out.value = s.best;
  out.assignments_visited = s.visited;
  return out;
}

KMeansResult kmeans(const Mat& points, int k, std::uint64_t seed) {
  const Index n = points.rows();
  if (k < 1) throw DomainError("kmeans: K must be >= 1");
  if (n < k) {
    throw DomainError("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Mat centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vec nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Index pick = 0;
    const double total = nearest.sum();
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centroids.row(c) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  KMeansResult out;
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < kKMeansMaxIterations; ++it) {
    bool changed = false;
    double objective = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double dist = (points.row(i) - centroids.row(c)).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      objective += best_d;
      auto& slot = labels[static_cast<std::size_t>(i)];
      if (slot != best) changed = true;
      slot = best;
    }
    out.objective_history.push_back(objective);
    out.iterations = it + 1;
    if (!changed) break;

    // Empty clusters keep their previous centroid.
    Mat sums = Mat::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = labels[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
  }
  out.partition.labels = std::move(labels);
  out.centroids = std::move(centroids);
  return out;
}

double ari(const HardPartition& p, const HardPartition& q) {
  require_shape(p.size() == q.size(), "ari: partitions have different lengths (" + std::to_string(p.size()) +
                                          " vs " + std::to_string(q.size()) + ")");
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cells[{p.labels[i], q.labels[i]}] += 1.0;
    rows[p.labels[i]] += 1.0;
    cols[q.labels[i]] += 1.0;
  }
  double index = 0.0;
  for (const auto& [key, c] : cells) index += choose2(c);
  double sum_a = 0.0;
  for (const auto& [key, c] : rows) sum_a += choose2(c);
  double sum_b = 0.0;
  for (const auto& [key, c] : cols) sum_b += choose2(c);
  const double total = choose2(static_cast<double>(p.size()));
  if (total == 0.0) return 1.0;
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace protoset
