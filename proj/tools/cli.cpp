#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "protoset/config.hpp"
#include "protoset/dataset.hpp"
#include "protoset/dsg.hpp"
#include "protoset/error.hpp"
#include "protoset/evalkit.hpp"
#include "protoset/matching.hpp"
#include "protoset/model.hpp"
#include "protoset/oracle.hpp"
#include "protoset/training.hpp"

namespace protoset::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return {buf, end};
}

struct Flags {
  std::string config;
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::string mode = "proto";
  std::optional<std::uint64_t> seed;
  bool desk = false;
};

struct Settings {
  TrainConfig train;
  SynthConfig synth;
  KeyValues kv;
};

// Defaults, then --desk, then the config file, then --seed.
Settings resolve(const Flags& f) {
  Settings s;
  if (f.desk) s.train.apply_desk_preset();
  if (!f.config.empty()) {
    s.kv = load_key_values(f.config);
    apply_config(s.kv, s.train, s.synth);
  }
  if (f.seed) {
    s.train.seed = *f.seed;
    s.synth.seed = *f.seed;
  }
  return s;
}

void add_config(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "key=value hyperparameter file")->check(CLI::ExistingFile);
}
void add_seed(CLI::App* sub, Flags& f) { sub->add_option("--seed", f.seed, "RNG seed (overrides the config)"); }
void add_desk(CLI::App* sub, Flags& f) {
  sub->add_flag("--desk", f.desk, "test-scale preset: K = 8, R = 16 (config keys still win)");
}

// Reads a square matrix of comma-separated numbers, one row per line.
Mat read_distance_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t\r");
      const auto last = cell.find_last_not_of(" \t\r");
      if (first == std::string::npos) throw ParseError(line_no, "empty cell");
      const std::string token = cell.substr(first, last - first + 1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw ParseError(line_no, "not a number: '" + token + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(line_no, "expected " + std::to_string(rows.front().size()) + " columns, got " +
                                    std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Index>(rows.size());
  if (n == 0) throw FormatError(path + ": empty distance matrix");
  if (static_cast<Index>(rows.front().size()) != n) {
    throw FormatError(path + ": distance matrix is " + std::to_string(n) + " x " +
                      std::to_string(rows.front().size()) + ", expected square");
  }
  Mat d(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) d(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return d;
}

json report_json(const MetricReport& r) {
  json out;
  json tar = json::object();
  for (auto it = r.tar_at_far.rbegin(); it != r.tar_at_far.rend(); ++it) tar[fmt(it->first)] = it->second;
  out["tar_at_far"] = tar;
  out["auc"] = r.auc;
  json fnir = json::object();
  for (auto it = r.fnir_at_fpir.rbegin(); it != r.fnir_at_fpir.rend(); ++it) fnir[fmt(it->first)] = it->second;
  out["fnir_at_fpir"] = fnir;
  json ranks = json::object();
  for (const auto& [rank, rate] : r.rank_n) ranks[std::to_string(rank)] = rate;
  out["rank_n"] = ranks;
  return out;
}

int cmd_gen_data(const Flags& f, std::ostream& out) {
  const Settings s = resolve(f);
  const Dataset ds = generate_synthetic(s.synth);
  save_dataset(ds, f.dataset);
  std::size_t media = 0;
  for (const auto& set : ds.sets) media += set.size();
  out << "wrote " << ds.sets.size() << " sets (" << media << " media, dim " << ds.dim << ") to " << f.dataset
      << "\n";
  return kExitOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  Settings s = resolve(f);
  const Dataset ds = load_dataset(f.dataset);
  if (!s.kv.contains("d_in")) s.train.d_in = static_cast<int>(ds.dim);
  if (s.train.d_in != ds.dim) {
    throw ConfigError("d_in = " + std::to_string(s.train.d_in) + " but the dataset has dim " +
                      std::to_string(ds.dim));
  }
  validate(s.train);
  Model init = f.checkpoint.empty() ? make_model(s.train) : load_checkpoint(f.checkpoint);
  if (init.encoder.input_dim() != ds.dim) {
    throw ConfigError("checkpoint expects dim " + std::to_string(init.encoder.input_dim()) +
                      " but the dataset has dim " + std::to_string(ds.dim));
  }

  const TrainResult result = train(std::move(init), ds, s.train);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  save_checkpoint(result.model, dir / "checkpoint.txt");
  save_loss_history(result.history, dir / "loss.csv");
  {
    std::ofstream cfg(dir / "config.txt", std::ios::binary);
    if (!cfg) throw IoError("cannot write " + (dir / "config.txt").string());
    cfg << to_key_values(s.train);
  }
  out << "iterations " << result.history.size() << "\n";
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    out << "final ranking " << fmt(last.ranking) << " dsg " << fmt(last.dsg) << " joint " << fmt(last.joint)
        << "\n";
  }
  out << "wrote " << (dir / "checkpoint.txt").string() << " and " << (dir / "loss.csv").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const Settings s = resolve(f);
  const Model model = load_checkpoint(f.checkpoint);
  const Dataset ds = load_dataset(f.dataset);
  if (model.encoder.input_dim() != ds.dim) {
    throw ConfigError("checkpoint expects dim " + std::to_string(model.encoder.input_dim()) +
                      " but the dataset has dim " + std::to_string(ds.dim));
  }
  ProtocolOptions opts;
  opts.match.beta = s.train.beta;
  opts.match.min_mass = s.train.eps_mass;
  opts.match.mode = f.mode == "media" ? MatchMode::media_level : MatchMode::prototype_level;
  opts.threads = threads_from_env(1);
  const ProtocolResult result = evaluate_dataset(model, ds, opts);

  std::size_t genuine = 0;
  for (const auto& v : result.verification) genuine += v.label == 0 ? 1 : 0;
  json doc;
  doc["mode"] = f.mode;
  doc["sets"] = ds.sets.size();
  doc["genuine_pairs"] = genuine;
  doc["imposter_pairs"] = result.verification.size() - genuine;
  const json metrics = report_json(result.report);
  for (const auto& [key, value] : metrics.items()) doc[key] = value;
  out << doc.dump(2) << "\n";

  if (!f.out.empty()) {
    fs::create_directories(f.out);
    export_curves(result.report, f.out);
    std::ofstream file(fs::path(f.out) / "metrics.json", std::ios::binary);
    if (!file) throw IoError("cannot write " + (fs::path(f.out) / "metrics.json").string());
    file << doc.dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_partition(const std::string& path, int k, std::uint64_t seed, int restarts, std::ostream& out) {
  const Mat d = read_distance_csv(path);
  RelaxedPartitionOptions opts;
  opts.seed = seed;
  opts.restarts = restarts;
  const RelaxedPartition relaxed = relaxed_partition(d, k, opts);
  out << "labels:";
  for (int l : relaxed.labels) out << ' ' << l;
  out << "\nvalue: " << fmt(relaxed.hard_value) << "\n";
  out << "relaxed_value: " << fmt(relaxed.relaxed_value) << "\n";
  try {
    const BruteForceResult oracle = brute_force_dsg(d, k);
    out << "oracle_value: " << fmt(oracle.value) << "\n";
    out << "oracle_gap: " << fmt(relaxed.hard_value - oracle.value) << "\n";
  } catch (const CapacityError& e) {
    out << "oracle: skipped (" << e.what() << ")\n";
  }
  return kExitOk;
}

int cmd_grad_check(const Flags& f, int draws, int coords, std::ostream& out) {
  Settings s = resolve(f);
  Dataset ds;
  if (f.dataset.empty()) {
    SynthConfig synth = s.synth;
    if (!s.kv.contains("subjects")) synth.n_subjects = 4;
    if (!s.kv.contains("sets_per_subject")) synth.sets_per_subject = 2;
    synth.d_in = s.train.d_in;
    ds = generate_synthetic(synth);
  } else {
    ds = load_dataset(f.dataset);
    if (!s.kv.contains("d_in")) s.train.d_in = static_cast<int>(ds.dim);
  }
  validate(s.train);
  const Model model = f.checkpoint.empty() ? make_model(s.train) : load_checkpoint(f.checkpoint);
  if (model.encoder.input_dim() != ds.dim) {
    throw ConfigError("model expects dim " + std::to_string(model.encoder.input_dim()) +
                      " but the data has dim " + std::to_string(ds.dim));
  }

  const PairSampler sampler(ds);
  std::seed_seq seq{s.train.seed, std::uint64_t{0x67636b}};
  Rng rng(seq);
  std::bernoulli_distribution coin(0.5);
  bool all_passed = true;
  for (int draw = 0; draw < draws; ++draw) {
    int label = coin(rng) ? 1 : 0;
    if (label == 0 && !sampler.can_draw_genuine()) label = 1;
    if (label == 1 && !sampler.can_draw_imposter()) label = 0;
    const SetPair pair = sampler.draw(label, rng);
    const Mat a = balance_set(pair.a, s.train.r, s.train.jitter, rng).matrix();
    const Mat b = balance_set(pair.b, s.train.r, s.train.jitter, rng).matrix();
    GradCheckOptions opts;
    opts.coordinates_per_tensor = coords;
    opts.seed = s.train.seed + static_cast<std::uint64_t>(draw);
    const GradCheckReport report = grad_check(model, a, b, pair.label, s.train, opts);
    out << "draw " << draw << " label " << (pair.label == 0 ? "genuine" : "imposter") << "\n";
    for (const auto& t : report.tensors) {
      out << "  " << t.name << " coords=" << t.coordinates << " max_rel=" << fmt(t.max_relative_error)
          << " max_abs=" << fmt(t.max_abs_error) << (t.passed ? " PASS" : " FAIL") << "\n";
    }
    all_passed = all_passed && report.passed;
  }
  out << "grad-check: " << (all_passed ? "PASS" : "FAIL") << "\n";
  return all_passed ? kExitOk : kExitUsage;
}

int cmd_bench(const Flags& f, int n, int repeats, std::ostream& out) {
  Settings s = resolve(f);
  const Model model = f.checkpoint.empty() ? make_model(s.train) : load_checkpoint(f.checkpoint);
  SynthConfig synth = s.synth;
  synth.d_in = static_cast<int>(model.encoder.input_dim());
  synth.n_subjects = 2;
  synth.sets_per_subject = 1;
  synth.min_media = n;
  synth.max_media = n;
  const Dataset ds = generate_synthetic(synth);

  const SetEmbedding a = embed_set(model, ds.sets[0], s.train.eps_mass);
  const SetEmbedding b = embed_set(model, ds.sets[1], s.train.eps_mass);

  auto run_mode = [&](MatchMode mode) {
    MatchOptions opts;
    opts.beta = s.train.beta;
    opts.min_mass = s.train.eps_mass;
    opts.mode = mode;
    MatchStats stats;
    double score = match_embeddings(a, b, opts, &stats);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) score += match_embeddings(a, b, opts) * 0.0;
    const auto stop = std::chrono::steady_clock::now();
    const double micros = std::chrono::duration<double, std::micro>(stop - start).count() / repeats;
    return std::tuple{stats.distance_evaluations, micros, score};
  };
  const auto [media_evals, media_us, media_score] = run_mode(MatchMode::media_level);
  const auto [proto_evals, proto_us, proto_score] = run_mode(MatchMode::prototype_level);

  out << "set sizes " << n << " x " << n << ", surviving prototypes " << a.prototypes.representatives.rows()
      << " x " << b.prototypes.representatives.rows() << "\n";
  out << "media-level: distance_evaluations=" << media_evals << " time_us=" << fmt(media_us)
      << " score=" << fmt(media_score) << "\n";
  out << "prototype-level: distance_evaluations=" << proto_evals << " time_us=" << fmt(proto_us)
      << " score=" << fmt(proto_score) << "\n";
  out << "speedup " << fmt(proto_us > 0.0 ? media_us / proto_us : 0.0) << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-prototype set matching: data generation, training, evaluation and audits", "protoset"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Flags flags;
  std::function<int()> action;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic planted-mode dataset");
  gen->add_option("--dataset", flags.dataset, "output dataset path")->required();
  add_config(gen, flags);
  add_seed(gen, flags);
  gen->callback([&] { action = [&] { return cmd_gen_data(flags, out); }; });

  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint.txt, loss.csv and config.txt");
  tr->add_option("--dataset", flags.dataset, "training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", flags.out, "output directory")->required();
  tr->add_option("--checkpoint", flags.checkpoint, "initialize from this checkpoint")->check(CLI::ExistingFile);
  add_config(tr, flags);
  add_seed(tr, flags);
  add_desk(tr, flags);
  tr->callback([&] { action = [&] { return cmd_train(flags, out); }; });

  auto* ev = app.add_subcommand("eval", "Verification and identification metrics as JSON");
  ev->add_option("--checkpoint", flags.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", flags.dataset, "evaluation dataset")->required()->check(CLI::ExistingFile);
  ev->add_option("--mode", flags.mode, "matching level")
      ->check(CLI::IsMember({"media", "proto"}))
      ->capture_default_str();
  ev->add_option("--out", flags.out, "directory for roc.csv, cmc.csv and metrics.json");
  add_config(ev, flags);
  ev->callback([&] { action = [&] { return cmd_eval(flags, out); }; });

  std::string distances;
  int k = 2;
  int restarts = 8;
  std::uint64_t partition_seed = 0;
  auto* part = app.add_subcommand("partition", "Relaxed DSG partition of a distance matrix vs the brute-force optimum");
  part->add_option("--distances", distances, "square CSV distance matrix")->required()->check(CLI::ExistingFile);
  part->add_option("-k,--prototypes", k, "number of groups")->check(CLI::PositiveNumber)->capture_default_str();
  part->add_option("--restarts", restarts, "random restarts")->check(CLI::PositiveNumber)->capture_default_str();
  part->add_option("--seed", partition_seed, "RNG seed")->capture_default_str();
  part->callback([&] { action = [&] { return cmd_partition(distances, k, partition_seed, restarts, out); }; });

  int draws = 1;
  int coords = 100;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of the joint-loss gradient");
  gc->add_option("--checkpoint", flags.checkpoint, "audit this checkpoint instead of a fresh model")
      ->check(CLI::ExistingFile);
  gc->add_option("--dataset", flags.dataset, "draw pairs from this dataset instead of synthetic data")
      ->check(CLI::ExistingFile);
  gc->add_option("--draws", draws, "number of random pairs")->check(CLI::PositiveNumber)->capture_default_str();
  gc->add_option("--coords", coords, "coordinates per tensor")->check(CLI::PositiveNumber)->capture_default_str();
  add_config(gc, flags);
  add_seed(gc, flags);
  add_desk(gc, flags);
  gc->callback([&] { action = [&] { return cmd_grad_check(flags, draws, coords, out); }; });

  int bench_n = 256;
  int repeats = 200;
  auto* bench = app.add_subcommand("bench", "Time media-level vs prototype-level scoring");
  bench->add_option("--checkpoint", flags.checkpoint, "model checkpoint (default: fresh model)")
      ->check(CLI::ExistingFile);
  bench->add_option("--n", bench_n, "media per set")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--repeats", repeats, "timed repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  add_config(bench, flags);
  add_seed(bench, flags);
  add_desk(bench, flags);
  bench->callback([&] { action = [&] { return cmd_bench(flags, bench_n, repeats, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace protoset::cli
