#pragma once

#include <cstdint>
#include <vector>

#include "protoset/dataset.hpp"
#include "protoset/linalg.hpp"
#include "protoset/model.hpp"

namespace protoset {

enum class MatchMode { media_level, prototype_level };

struct MatchEnergy {
  double value = 0.0;
  double beta = 0.0;
  MatchMode mode = MatchMode::media_level;
};

/// Softmax-weighted mean of every entry of `distances` with weights
/// proportional to exp(beta * d). Throws DomainError on an empty matrix.
MatchEnergy energy(const Mat& distances, double beta,
                   MatchMode mode = MatchMode::media_level);

/// dE/dd_ij = w_ij (1 + beta (d_ij - E)), scaled by `upstream`.
Mat energy_backward(const Mat& distances, double beta, double upstream = 1.0);

/// (1 - y) E + y max(0, margin - E); y = 0 genuine, 1 imposter.
double ranking_loss(double energy, int label, double margin);

// dLoss/dE. Zero for an imposter whose energy already clears the margin.
double ranking_loss_grad(double energy, int label, double margin);

struct PrototypeSummary {
  Mat representatives;  // K' x d, unit rows
  Vec masses;           // K'
  std::vector<int> prototype_ids;  // column of the assignment each row came from
};

/// Mass-weighted mean of the reconstructed features per prototype,
/// renormalized. Prototypes lighter than `min_mass` are dropped, except that
/// the heaviest one always survives.
PrototypeSummary prototype_pool(const Mat& features, const Mat& assignment, double min_mass);

struct MatchOptions {
  double beta = 10.0;
  double min_mass = 0.5;
  MatchMode mode = MatchMode::prototype_level;
};

struct MatchStats {
  std::uint64_t distance_evaluations = 0;
};

/// DSG forward output for one set; what a gallery would store per template.
struct SetEmbedding {
  Mat features;    // reconstructed, unit rows
  Mat assignment;  // normalized memberships
  PrototypeSummary prototypes;
};

SetEmbedding embed_set(const Model& model, const MediaSet& s, double min_mass);
SetEmbedding embed_set(const Model& model, const Mat& media, double min_mass);

/// Similarity (-E) between two embedded sets.
double match_embeddings(const SetEmbedding& a, const SetEmbedding& b, const MatchOptions& opts,
                        MatchStats* stats = nullptr);

/// Encodes and embeds both sets, then scores them. Higher = more similar.
double match_sets(const MediaSet& a, const MediaSet& b, const Model& model,
                  const MatchOptions& opts, MatchStats* stats = nullptr);

}  // namespace protoset
