#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "protoset/linalg.hpp"

namespace protoset {

using Rng = std::mt19937_64;

enum class Modality : int { image = 0, video_frame = 1 };

struct MediaFeature {
  std::int64_t media_id = 0;
  Modality modality = Modality::image;
  Vec vector;

  friend bool operator==(const MediaFeature&, const MediaFeature&) = default;
};

/// A subject-labelled collection of media. `planted_mode` is only filled by
/// the synthetic generator and then holds one label per medium.
struct MediaSet {
  std::int64_t set_id = 0;
  std::int64_t subject_id = 0;
  std::vector<MediaFeature> media;
  std::optional<std::vector<int>> planted_mode;

  std::size_t size() const noexcept { return media.size(); }
  Index dim() const { return media.empty() ? 0 : media.front().vector.size(); }

  // Media vectors stacked as rows (size() x dim()).
  Mat matrix() const;

  friend bool operator==(const MediaSet&, const MediaSet&) = default;
};

struct Dataset {
  Index dim = 0;
  std::vector<MediaSet> sets;

  std::vector<std::int64_t> subjects() const;
  const MediaSet& find_set(std::int64_t set_id) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// label 0 = genuine (same subject), 1 = imposter.
struct SetPair {
  MediaSet a;
  MediaSet b;
  int label = 1;
};

// Checks the MediaSet/Dataset invariants; throws FormatError/DomainError.
void validate(const MediaSet& s, Index expected_dim);
void validate(const Dataset& ds);

struct SynthConfig {
  int n_subjects = 20;
  int modes_per_subject = 3;
  int sets_per_subject = 4;
  int min_media = 6;
  int max_media = 24;
  int d_in = 32;
  double mode_noise = 0.05;   // per-coordinate std of media around their mode
  double mode_offset = 0.5;   // norm of the offset from class center to mode
  // Fraction of offset variance drawn from condition directions shared by all
  // subjects (1 = every subject's mode m points the same way, 0 = private).
  double mode_sharing = 0.0;
  // Share this seed between train and test datasets so they see the same
  // conditions.
  std::uint64_t condition_seed = 0;
  std::uint64_t seed = 1;
  double video_fraction = 0.5;
  std::int64_t first_subject_id = 0;
};

void validate(const SynthConfig& cfg);

/// Subjects get unit-norm centers; each mode is center + offset, renormalized;
/// each medium is its mode point plus isotropic Gaussian noise.
Dataset generate_synthetic(const SynthConfig& cfg);

/// Resamples `s` to exactly `target_size` media. Short sets keep every
/// original and are padded with jittered duplicates; long sets are subsampled
/// without replacement.
MediaSet balance_set(const MediaSet& s, int target_size, double jitter, Rng& rng);

enum class SplitPolicy { allow_split, never_split };

/// Index of a dataset by subject for repeated pair draws. Holds a pointer to
/// `ds`, which must outlive the sampler.
class PairSampler {
 public:
  PairSampler(const Dataset& ds, SplitPolicy policy = SplitPolicy::allow_split);

  bool can_draw_genuine() const { return !genuine_sources_.empty(); }
  bool can_draw_imposter() const { return by_subject_.size() >= 2; }

  // label 0 draws a genuine pair, 1 an imposter pair.
  SetPair draw(int label, Rng& rng) const;

 private:
  const Dataset* ds_;
  SplitPolicy policy_;
  std::vector<std::vector<std::size_t>> by_subject_;  // set indices per subject
  std::vector<std::size_t> genuine_sources_;          // indices into by_subject_
};

/// Draws `n_pairs` labelled set pairs with round(n_pairs * genuine_fraction)
/// genuine ones. A genuine pair for a subject with a single set is made by
/// splitting that set into two disjoint random halves.
std::vector<SetPair> sample_pairs(const Dataset& ds, int n_pairs, double genuine_fraction,
                                  Rng& rng, SplitPolicy policy = SplitPolicy::allow_split);

// Text dataset format: header `PSET v1 dim=<d>`, then one medium per line.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct PairRecord {
  std::int64_t set_a = 0;
  std::int64_t set_b = 0;
  int label = 1;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path);
std::vector<PairRecord> load_pairs(const std::filesystem::path& path);

}  // namespace protoset
