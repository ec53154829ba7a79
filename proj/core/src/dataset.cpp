#include "protoset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace protoset {

Mat MediaSet::matrix() const {
  Mat m(static_cast<Index>(media.size()), dim());
  for (std::size_t i = 0; i < media.size(); ++i) {
    m.row(static_cast<Index>(i)) = media[i].vector.transpose();
  }
  return m;
}

std::vector<std::int64_t> Dataset::subjects() const {
  std::set<std::int64_t> ids;
  for (const auto& s : sets) ids.insert(s.subject_id);
  return {ids.begin(), ids.end()};
}

const MediaSet& Dataset::find_set(std::int64_t set_id) const {
  for (const auto& s : sets) {
    if (s.set_id == set_id) return s;
  }
  throw DomainError("unknown set_id " + std::to_string(set_id));
}

void validate(const MediaSet& s, Index expected_dim) {
  if (s.media.empty()) {
    throw DomainError("set " + std::to_string(s.set_id) + " is empty");
  }
  for (const auto& m : s.media) {
    if (m.vector.size() != expected_dim) {
      throw FormatError("medium " + std::to_string(m.media_id) + " has dimension " +
                        std::to_string(m.vector.size()) + ", expected " +
                        std::to_string(expected_dim));
    }
    if (!m.vector.allFinite()) {
      throw FormatError("medium " + std::to_string(m.media_id) + " has non-finite entries");
    }
  }
  if (s.planted_mode && s.planted_mode->size() != s.media.size()) {
    throw FormatError("set " + std::to_string(s.set_id) + " has " +
                      std::to_string(s.planted_mode->size()) + " mode labels for " +
                      std::to_string(s.media.size()) + " media");
  }
}

void validate(const Dataset& ds) {
  std::unordered_set<std::int64_t> media_ids;
  std::unordered_set<std::int64_t> set_ids;
  for (const auto& s : ds.sets) {
    validate(s, ds.dim);
    if (!set_ids.insert(s.set_id).second) {
      throw FormatError("duplicate set_id " + std::to_string(s.set_id));
    }
    for (const auto& m : s.media) {
      if (!media_ids.insert(m.media_id).second) {
        throw FormatError("duplicate media_id " + std::to_string(m.media_id));
      }
    }
  }
}

void validate(const SynthConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
  if (cfg.n_subjects < 1) fail("n_subjects must be >= 1");
  if (cfg.modes_per_subject < 1) fail("modes_per_subject must be >= 1");
  if (cfg.sets_per_subject < 1) fail("sets_per_subject must be >= 1");
  if (cfg.min_media < 1 || cfg.max_media < cfg.min_media) fail("media range must satisfy 1 <= min <= max");
  if (cfg.d_in < 1) fail("d_in must be >= 1");
  if (!(cfg.mode_noise >= 0.0)) fail("mode_noise must be >= 0");
  if (!(cfg.mode_offset >= 0.0)) fail("mode_offset must be >= 0");
  if (!(cfg.mode_sharing >= 0.0 && cfg.mode_sharing <= 1.0)) fail("mode_sharing must lie in [0, 1]");
  if (!(cfg.video_fraction >= 0.0 && cfg.video_fraction <= 1.0)) fail("video_fraction must lie in [0, 1]");
}

namespace {

Vec gaussian_vector(Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d);
  for (Index i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

Vec unit(Vec v) {
  const double n = v.norm();
  return n > 0.0 ? Vec(v / n) : v;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  const Index d = cfg.d_in;

  Rng condition_rng(cfg.condition_seed);
  std::vector<Vec> shared(static_cast<std::size_t>(cfg.modes_per_subject));
  for (auto& v : shared) v = unit(gaussian_vector(d, condition_rng));

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> media_count(cfg.min_media, cfg.max_media);
  std::uniform_int_distribution<int> pick_mode(0, cfg.modes_per_subject - 1);
  std::bernoulli_distribution is_video(cfg.video_fraction);

  const double shared_w = std::sqrt(cfg.mode_sharing);
  const double private_w = std::sqrt(1.0 - cfg.mode_sharing);

  Dataset ds;
  ds.dim = d;
  std::int64_t next_set = 0;
  std::int64_t next_media = 0;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const Vec center = unit(gaussian_vector(d, rng));
    std::vector<Vec> modes;
    for (int m = 0; m < cfg.modes_per_subject; ++m) {
      Vec dir = shared_w * shared[static_cast<std::size_t>(m)] + private_w * unit(gaussian_vector(d, rng));
      Vec point = center + cfg.mode_offset * unit(std::move(dir));
      modes.push_back(unit(std::move(point)));
    }
    for (int k = 0; k < cfg.sets_per_subject; ++k) {
      MediaSet set;
      set.set_id = next_set++;
      set.subject_id = cfg.first_subject_id + s;
      const int n = media_count(rng);
      std::vector<int> labels;
      for (int i = 0; i < n; ++i) {
        const int mode = pick_mode(rng);
        MediaFeature f;
        f.media_id = next_media++;
        f.modality = is_video(rng) ? Modality::video_frame : Modality::image;
        f.vector = modes[static_cast<std::size_t>(mode)];
        if (cfg.mode_noise > 0.0) {
          for (Index j = 0; j < d; ++j) f.vector[j] += cfg.mode_noise * normal(rng);
        }
        set.media.push_back(std::move(f));
        labels.push_back(mode);
      }
      set.planted_mode = std::move(labels);
      ds.sets.push_back(std::move(set));
    }
  }
  return ds;
}

MediaSet balance_set(const MediaSet& s, int target_size, double jitter, Rng& rng) {
  if (target_size < 1) throw DomainError("balance_set: target size must be >= 1");
  if (!(jitter >= 0.0)) throw DomainError("balance_set: jitter must be >= 0");
  if (s.media.empty()) throw DomainError("balance_set: empty set " + std::to_string(s.set_id));

  const auto n = s.media.size();
  const auto target = static_cast<std::size_t>(target_size);
  if (n == target) return s;

  MediaSet out;
  out.set_id = s.set_id;
  out.subject_id = s.subject_id;
  std::vector<int> modes;

  if (n > target) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `target` slots are a uniform sample.
    for (std::size_t i = 0; i < target; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(target);
    for (auto i : idx) {
      out.media.push_back(s.media[i]);
      if (s.planted_mode) modes.push_back((*s.planted_mode)[i]);
    }
  } else {
    out.media = s.media;
    if (s.planted_mode) modes = *s.planted_mode;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    while (out.media.size() < target) {
      const auto src = pick(rng);
      MediaFeature f = s.media[src];
      if (jitter > 0.0) {
        for (Index j = 0; j < f.vector.size(); ++j) f.vector[j] += jitter * normal(rng);
      }
      out.media.push_back(std::move(f));
      if (s.planted_mode) modes.push_back((*s.planted_mode)[src]);
    }
  }
  if (s.planted_mode) out.planted_mode = std::move(modes);
  return out;
}

namespace {

std::pair<MediaSet, MediaSet> split_halves(const MediaSet& s, Rng& rng) {
  std::vector<std::size_t> idx(s.media.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto half = idx.size() / 2;
  MediaSet a;
  MediaSet b;
  a.set_id = b.set_id = s.set_id;
  a.subject_id = b.subject_id = s.subject_id;
  std::vector<int> ma;
  std::vector<int> mb;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const bool first = i < half;
    (first ? a : b).media.push_back(s.media[idx[i]]);
    if (s.planted_mode) (first ? ma : mb).push_back((*s.planted_mode)[idx[i]]);
  }
  if (s.planted_mode) {
    a.planted_mode = std::move(ma);
    b.planted_mode = std::move(mb);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

PairSampler::PairSampler(const Dataset& ds, SplitPolicy policy) : ds_(&ds), policy_(policy) {
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < ds.sets.size(); ++i) {
    auto [it, fresh] = slot.try_emplace(ds.sets[i].subject_id, by_subject_.size());
    if (fresh) by_subject_.emplace_back();
    by_subject_[it->second].push_back(i);
  }
  for (std::size_t s = 0; s < by_subject_.size(); ++s) {
    const auto& idx = by_subject_[s];
    const bool splittable =
        policy_ == SplitPolicy::allow_split && ds.sets[idx.front()].media.size() >= 2;
    if (idx.size() >= 2 || splittable) genuine_sources_.push_back(s);
  }
}

SetPair PairSampler::draw(int label, Rng& rng) const {
  const auto& sets = ds_->sets;
  SetPair pair;
  pair.label = label;
  if (label == 0) {
    if (!can_draw_genuine()) throw DomainError("sample_pairs: no subject can form a genuine pair");
    std::uniform_int_distribution<std::size_t> pick_subject(0, genuine_sources_.size() - 1);
    const auto& idx = by_subject_[genuine_sources_[pick_subject(rng)]];
    if (idx.size() >= 2) {
      std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
      const auto i = pick(rng);
      auto j = pick(rng);
      while (j == i) j = pick(rng);
      pair.a = sets[idx[i]];
      pair.b = sets[idx[j]];
    } else {
      auto [a, b] = split_halves(sets[idx.front()], rng);
      pair.a = std::move(a);
      pair.b = std::move(b);
    }
    return pair;
  }
  if (!can_draw_imposter()) throw DomainError("sample_pairs: imposter pairs need at least two subjects");
  std::uniform_int_distribution<std::size_t> pick_subject(0, by_subject_.size() - 1);
  const auto si = pick_subject(rng);
  auto sj = pick_subject(rng);
  while (sj == si) sj = pick_subject(rng);
  const auto& ia = by_subject_[si];
  const auto& ib = by_subject_[sj];
  std::uniform_int_distribution<std::size_t> pa(0, ia.size() - 1);
  std::uniform_int_distribution<std::size_t> pb(0, ib.size() - 1);
  pair.a = sets[ia[pa(rng)]];
  pair.b = sets[ib[pb(rng)]];
  return pair;
}

std::vector<SetPair> sample_pairs(const Dataset& ds, int n_pairs, double genuine_fraction, Rng& rng,
                                  SplitPolicy policy) {
  if (n_pairs < 0) throw DomainError("sample_pairs: n_pairs must be >= 0");
  if (!(genuine_fraction >= 0.0 && genuine_fraction <= 1.0)) {
    throw DomainError("sample_pairs: genuine_fraction must lie in [0, 1]");
  }
  const PairSampler sampler(ds, policy);
  const int n_genuine = static_cast<int>(std::lround(genuine_fraction * n_pairs));
  const int n_imposter = n_pairs - n_genuine;
  if (n_genuine > 0 && !sampler.can_draw_genuine()) {
    throw DomainError("sample_pairs: no subject can form a genuine pair");
  }
  if (n_imposter > 0 && !sampler.can_draw_imposter()) {
    throw DomainError("sample_pairs: imposter pairs need at least two subjects");
  }

  std::vector<SetPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n_pairs));
  for (int p = 0; p < n_genuine; ++p) pairs.push_back(sampler.draw(0, rng));
  for (int p = 0; p < n_imposter; ++p) pairs.push_back(sampler.draw(1, rng));
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

}  // namespace protoset
