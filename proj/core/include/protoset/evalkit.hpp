#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "protoset/dataset.hpp"
#include "protoset/matching.hpp"
#include "protoset/model.hpp"

namespace protoset {

struct ScoreSample {
  double score = 0.0;  // similarity, higher = more alike
  int label = 1;       // 0 genuine, 1 imposter
};

struct MetricReport {
  std::map<double, double> tar_at_far;
  std::map<double, double> fnir_at_fpir;
  std::map<int, double> rank_n;
  double auc = 0.0;
};

inline const std::vector<double> kDefaultFarPoints{0.1, 0.01, 0.001};
inline const std::vector<double> kDefaultFpirPoints{0.1, 0.01};
inline const std::vector<int> kDefaultRanks{1, 5, 10};

/// Fills tar_at_far and auc. The threshold for FAR = x is the smallest score
/// t at which at most a fraction x of imposters score >= t (+inf if none);
/// TAR is the fraction of genuine scores >= t.
MetricReport verification_metrics(const std::vector<ScoreSample>& samples,
                                  const std::vector<double>& far_points = kDefaultFarPoints);

struct RocPoint {
  double far = 0.0;
  double tar = 0.0;
};

// Full ROC, one point per distinct threshold, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(const std::vector<ScoreSample>& samples);

struct IdentificationOptions {
  int candidate_list = 20;
  std::vector<double> fpir_points = kDefaultFpirPoints;
  std::vector<int> ranks = kDefaultRanks;
};

/// Open-set search scores: one row per probe, one column per gallery set.
/// A probe is mated iff its subject appears in `gallery_subjects`.
struct SearchScores {
  Mat scores;
  std::vector<std::int64_t> gallery_subjects;
  std::vector<std::int64_t> probe_subjects;
};

/// Fills rank_n and fnir_at_fpir. Subject scores are the max over that
/// subject's gallery sets. FNIR at FPIR = x uses the smallest threshold whose
/// FPIR (non-mated probes with best score >= t) is <= x; a mated probe is a
/// miss if its mate scores below t or ranks past the candidate list.
MetricReport identification_metrics(const SearchScores& search,
                                    const IdentificationOptions& opts = {});

MetricReport identification_metrics(const std::vector<MediaSet>& gallery,
                                    const std::vector<MediaSet>& probes, const Model& model,
                                    const MatchOptions& match, const IdentificationOptions& opts = {});

/// Writes <dir>/roc.csv (far,tar per requested FAR, ascending) and
/// <dir>/cmc.csv (rank,rate per requested rank, ascending).
void export_curves(const MetricReport& report, const std::filesystem::path& dir);

struct ProtocolOptions {
  MatchOptions match;
  std::vector<double> far_points = kDefaultFarPoints;
  IdentificationOptions identification;
  double gallery_subject_fraction = 0.8;
  int threads = 1;
};

struct ProtocolResult {
  MetricReport report;
  std::vector<ScoreSample> verification;
};

/// Verification over every unordered pair of sets; identification with the
/// first set of the first gallery_subject_fraction of subjects as gallery and
/// every other set as a probe. Scores are independent of `threads`.
ProtocolResult evaluate_dataset(const Model& model, const Dataset& ds, const ProtocolOptions& opts);

// Worker count from PROTO_SET_THREADS, clamped to [1, hardware threads].
int threads_from_env(int fallback = 1);

}  // namespace protoset
