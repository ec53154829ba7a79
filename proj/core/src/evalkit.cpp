#include "protoset/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <thread>
#include <unordered_map>

namespace protoset {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fraction of `sorted` (ascending) that is >= t.
double fraction_at_least(const std::vector<double>& sorted, double t) {
  if (sorted.empty()) return 0.0;
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

// Ascending unique values of both lists, then +inf.
std::vector<double> candidate_thresholds(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(a);
  c.insert(c.end(), b.begin(), b.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  c.push_back(kInf);
  return c;
}

// Smallest candidate t with rate(t) <= x, where rate is non-increasing in t.
template <typename Rate>
double threshold_for(const std::vector<double>& candidates, double x, Rate rate) {
  const auto it = std::partition_point(candidates.begin(), candidates.end(),
                                       [&](double t) { return rate(t) > x; });
  return it == candidates.end() ? kInf : *it;
}

void split_by_label(const std::vector<ScoreSample>& samples, std::vector<double>& genuine,
                    std::vector<double>& imposter) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw DomainError("verification: non-finite score");
    if (s.label != 0 && s.label != 1) throw DomainError("verification: labels must be 0 or 1");
    (s.label == 0 ? genuine : imposter).push_back(s.score);
  }
  if (genuine.empty() || imposter.empty()) {
    throw DomainError("verification needs at least one genuine and one imposter score");
  }
  std::sort(genuine.begin(), genuine.end());
  std::sort(imposter.begin(), imposter.end());
}

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  out.append(buf, end);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<SetEmbedding> embed_all(const Model& model, const std::vector<const MediaSet*>& sets,
                                    double min_mass, int threads) {
  std::vector<SetEmbedding> out(sets.size());
  parallel_for(sets.size(), threads, [&](std::size_t i) { out[i] = embed_set(model, *sets[i], min_mass); });
  return out;
}

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<ScoreSample>& samples) {
  std::vector<double> genuine;
  std::vector<double> imposter;
  split_by_label(samples, genuine, imposter);
  const auto candidates = candidate_thresholds(genuine, imposter);
  std::vector<RocPoint> roc;
  roc.reserve(candidates.size());
  for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
    roc.push_back({fraction_at_least(imposter, *it), fraction_at_least(genuine, *it)});
  }
  return roc;
}

MetricReport verification_metrics(const std::vector<ScoreSample>& samples,
                                  const std::vector<double>& far_points) {
  std::vector<double> genuine;
  std::vector<double> imposter;
  split_by_label(samples, genuine, imposter);
  const auto candidates = candidate_thresholds(genuine, imposter);

  MetricReport report;
  for (double x : far_points) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("verification: FAR points must lie in [0, 1]");
    const double t = threshold_for(candidates, x, [&](double v) { return fraction_at_least(imposter, v); });
    report.tar_at_far[x] = fraction_at_least(genuine, t);
  }
  const auto roc = roc_curve(samples);
  double auc = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    auc += (roc[i].far - roc[i - 1].far) * 0.5 * (roc[i].tar + roc[i - 1].tar);
  }
  report.auc = auc;
  return report;
}

MetricReport identification_metrics(const SearchScores& search, const IdentificationOptions& opts) {
  const auto n_probes = static_cast<Index>(search.probe_subjects.size());
  const auto n_gallery = static_cast<Index>(search.gallery_subjects.size());
  require_shape(search.scores.rows() == n_probes && search.scores.cols() == n_gallery,
                "identification: score matrix must be probes x gallery");
  if (n_gallery == 0) throw DomainError("identification: empty gallery");
  if (!search.scores.allFinite()) throw DomainError("identification: non-finite score");
  if (opts.candidate_list < 1) throw DomainError("identification: candidate list must be >= 1");

  // Subject-level scores: max over that subject's gallery sets.
  std::vector<std::int64_t> subjects(search.gallery_subjects);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  std::unordered_map<std::int64_t, std::size_t> column;
  for (std::size_t s = 0; s < subjects.size(); ++s) column[subjects[s]] = s;

  std::vector<double> mate_scores;
  std::vector<int> mate_ranks;
  std::vector<double> nonmated_best;
  for (Index p = 0; p < n_probes; ++p) {
    std::vector<double> by_subject(subjects.size(), -kInf);
    for (Index g = 0; g < n_gallery; ++g) {
      auto& slot = by_subject[column[search.gallery_subjects[static_cast<std::size_t>(g)]]];
      slot = std::max(slot, search.scores(p, g));
    }
    const auto mate = column.find(search.probe_subjects[static_cast<std::size_t>(p)]);
    if (mate == column.end()) {
      nonmated_best.push_back(*std::max_element(by_subject.begin(), by_subject.end()));
      continue;
    }
    const double s = by_subject[mate->second];
    int rank = 1;
    for (std::size_t j = 0; j < by_subject.size(); ++j) {
      if (j != mate->second && by_subject[j] > s) ++rank;
    }
    mate_scores.push_back(s);
    mate_ranks.push_back(rank);
  }
  if (mate_scores.empty()) throw DomainError("identification: no mated probes");

  MetricReport report;
  const auto mated = static_cast<double>(mate_scores.size());
  for (int n : opts.ranks) {
    if (n < 1) throw DomainError("identification: ranks must be >= 1");
    const auto hits = std::count_if(mate_ranks.begin(), mate_ranks.end(), [n](int r) { return r <= n; });
    report.rank_n[n] = static_cast<double>(hits) / mated;
  }

  std::sort(nonmated_best.begin(), nonmated_best.end());
  const auto candidates = candidate_thresholds(mate_scores, nonmated_best);
  for (double x : opts.fpir_points) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("identification: FPIR points must lie in [0, 1]");
    const double t =
        threshold_for(candidates, x, [&](double v) { return fraction_at_least(nonmated_best, v); });
    int misses = 0;
    for (std::size_t i = 0; i < mate_scores.size(); ++i) {
      if (mate_scores[i] < t || mate_ranks[i] > opts.candidate_list) ++misses;
    }
    report.fnir_at_fpir[x] = misses / mated;
  }
  return report;
}

MetricReport identification_metrics(const std::vector<MediaSet>& gallery,
                                    const std::vector<MediaSet>& probes, const Model& model,
                                    const MatchOptions& match, const IdentificationOptions& opts) {
  if (gallery.empty()) throw DomainError("identification: empty gallery");
  std::vector<const MediaSet*> g;
  std::vector<const MediaSet*> p;
  for (const auto& s : gallery) g.push_back(&s);
  for (const auto& s : probes) p.push_back(&s);
  const auto eg = embed_all(model, g, match.min_mass, 1);
  const auto ep = embed_all(model, p, match.min_mass, 1);

  SearchScores search;
  search.scores.resize(static_cast<Index>(p.size()), static_cast<Index>(g.size()));
  for (const auto* s : g) search.gallery_subjects.push_back(s->subject_id);
  for (const auto* s : p) search.probe_subjects.push_back(s->subject_id);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      search.scores(static_cast<Index>(i), static_cast<Index>(j)) = match_embeddings(ep[i], eg[j], match);
    }
  }
  return identification_metrics(search, opts);
}

void export_curves(const MetricReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string roc = "far,tar\n";
  for (const auto& [far, tar] : report.tar_at_far) {
    append_double(roc, far);
    roc += ',';
    append_double(roc, tar);
    roc += '\n';
  }
  std::string cmc = "rank,rate\n";
  for (const auto& [rank, rate] : report.rank_n) {
    cmc += std::to_string(rank) + ',';
    append_double(cmc, rate);
    cmc += '\n';
  }
  write_text(dir / "roc.csv", roc);
  write_text(dir / "cmc.csv", cmc);
}

ProtocolResult evaluate_dataset(const Model& model, const Dataset& ds, const ProtocolOptions& opts) {
  if (ds.sets.size() < 2) throw DomainError("evaluation needs at least two sets");
  if (!(opts.gallery_subject_fraction > 0.0 && opts.gallery_subject_fraction <= 1.0)) {
    throw DomainError("gallery_subject_fraction must lie in (0, 1]");
  }
  std::vector<const MediaSet*> all;
  for (const auto& s : ds.sets) all.push_back(&s);
  const auto emb = embed_all(model, all, opts.match.min_mass, opts.threads);

  // Verification: every unordered pair of sets.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) pairs.emplace_back(i, j);
  }
  ProtocolResult result;
  result.verification.resize(pairs.size());
  parallel_for(pairs.size(), opts.threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    result.verification[p] = {match_embeddings(emb[i], emb[j], opts.match),
                              all[i]->subject_id == all[j]->subject_id ? 0 : 1};
  });
  result.report = verification_metrics(result.verification, opts.far_points);

  // Identification: first set of each gallery subject enrolled, all else probes.
  const auto subjects = ds.subjects();
  const auto n_gallery = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(opts.gallery_subject_fraction * static_cast<double>(subjects.size()))));
  const std::set<std::int64_t> enrolled(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_gallery));
  std::vector<std::size_t> gallery;
  std::vector<std::size_t> probes;
  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto subject = all[i]->subject_id;
    if (enrolled.count(subject) != 0 && seen.insert(subject).second) {
      gallery.push_back(i);
    } else {
      probes.push_back(i);
    }
  }
  SearchScores search;
  search.scores.resize(static_cast<Index>(probes.size()), static_cast<Index>(gallery.size()));
  for (auto g : gallery) search.gallery_subjects.push_back(all[g]->subject_id);
  for (auto p : probes) search.probe_subjects.push_back(all[p]->subject_id);
  parallel_for(probes.size(), opts.threads, [&](std::size_t p) {
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      search.scores(static_cast<Index>(p), static_cast<Index>(g)) =
          match_embeddings(emb[probes[p]], emb[gallery[g]], opts.match);
    }
  });
  const auto ident = identification_metrics(search, opts.identification);
  result.report.fnir_at_fpir = ident.fnir_at_fpir;
  result.report.rank_n = ident.rank_n;
  return result;
}

int threads_from_env(int fallback) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  int n = fallback;
  if (const char* v = std::getenv("PROTO_SET_THREADS")) {
    int parsed = 0;
    const std::string_view s(v);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), parsed);
    if (ec == std::errc() && ptr == s.data() + s.size()) n = parsed;
  }
  return std::clamp(n, 1, static_cast<int>(hw));
}

}  // namespace protoset
