#include "protoset/matching.hpp"

#include <algorithm>
#include <cmath>

namespace protoset {

namespace {

// Softmax weights exp(beta d) / sum, shifted by the largest exponent.
Mat softmax_weights(const Mat& distances, double beta) {
  const Mat scaled = beta * distances;
  const double shift = scaled.maxCoeff();
  Mat w = (scaled.array() - shift).exp().matrix();
  w /= w.sum();
  return w;
}

}  // namespace

MatchEnergy energy(const Mat& distances, double beta, MatchMode mode) {
  if (distances.size() == 0) throw DomainError("energy: empty distance matrix");
  if (!std::isfinite(beta)) throw DomainError("energy: beta must be finite");
  const Mat w = softmax_weights(distances, beta);
  return {w.cwiseProduct(distances).sum(), beta, mode};
}

Mat energy_backward(const Mat& distances, double beta, double upstream) {
  if (distances.size() == 0) throw DomainError("energy_backward: empty distance matrix");
  const Mat w = softmax_weights(distances, beta);
  const double e = w.cwiseProduct(distances).sum();
  return upstream * w.cwiseProduct(((distances.array() - e) * beta + 1.0).matrix());
}

double ranking_loss(double energy, int label, double margin) {
  return label == 0 ? energy : std::max(0.0, margin - energy);
}

double ranking_loss_grad(double energy, int label, double margin) {
  if (label == 0) return 1.0;
  return energy < margin ? -1.0 : 0.0;
}

PrototypeSummary prototype_pool(const Mat& features, const Mat& assignment, double min_mass) {
  require_shape(features.rows() == assignment.rows(), "prototype_pool: features and assignment row counts differ");
  if (features.rows() == 0) throw DomainError("prototype_pool: empty set");
  if (!(min_mass > 0.0)) throw DomainError("prototype_pool: min_mass must be > 0");

  const Vec masses = assignment.colwise().sum().transpose();
  Index heaviest = 0;
  for (Index k = 1; k < masses.size(); ++k) {
    if (masses[k] > masses[heaviest]) heaviest = k;
  }

  std::vector<int> keep;
  for (Index k = 0; k < masses.size(); ++k) {
    if (masses[k] >= min_mass || k == heaviest) keep.push_back(static_cast<int>(k));
  }

  PrototypeSummary out;
  out.representatives.resize(static_cast<Index>(keep.size()), features.cols());
  out.masses.resize(static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const Index k = keep[r];
    const auto row = static_cast<Index>(r);
    Vec mean = features.transpose() * assignment.col(k) / masses[k];
    out.representatives.row(row) = mean.transpose() / std::max(mean.norm(), kNormFloor);
    out.masses[row] = masses[k];
  }
  out.prototype_ids = std::move(keep);
  return out;
}

SetEmbedding embed_set(const Model& model, const Mat& media, double min_mass) {
  if (media.rows() == 0) throw DomainError("embed_set: empty set");
  const Mat f = encode_set(model.encoder, media);
  auto z = predict_indicator(model.dsg, f);
  auto r = reconstruct(model.dsg, f, z.normalized);
  SetEmbedding e;
  e.prototypes = prototype_pool(r.output, z.normalized, min_mass);
  e.features = std::move(r.output);
  e.assignment = std::move(z.normalized);
  return e;
}

SetEmbedding embed_set(const Model& model, const MediaSet& s, double min_mass) {
  if (s.media.empty()) throw DomainError("embed_set: set " + std::to_string(s.set_id) + " is empty");
  return embed_set(model, s.matrix(), min_mass);
}

double match_embeddings(const SetEmbedding& a, const SetEmbedding& b, const MatchOptions& opts,
                        MatchStats* stats) {
  std::uint64_t* counter = stats != nullptr ? &stats->distance_evaluations : nullptr;
  const Mat d = opts.mode == MatchMode::media_level
                    ? pairwise_distances(a.features, b.features, counter)
                    : pairwise_distances(a.prototypes.representatives, b.prototypes.representatives, counter);
  return -energy(d, opts.beta, opts.mode).value;
}

double match_sets(const MediaSet& a, const MediaSet& b, const Model& model, const MatchOptions& opts,
                  MatchStats* stats) {
  const auto ea = embed_set(model, a, opts.min_mass);
  const auto eb = embed_set(model, b, opts.min_mass);
  return match_embeddings(ea, eb, opts, stats);
}

}  // namespace protoset
