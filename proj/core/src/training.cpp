#include "protoset/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "protoset/matching.hpp"

namespace protoset {

void TrainConfig::apply_desk_preset() {
  k = 8;
  r = 16;
}

std::int64_t TrainConfig::total_iterations() const {
  if (epochs <= 0 || pairs_per_epoch <= 0 || batch <= 0) return 0;
  const std::int64_t per_epoch = (pairs_per_epoch + batch - 1) / batch;
  return per_epoch * epochs;
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (cfg.d_in < 1 || cfg.d < 1 || cfg.hidden < 1 || cfg.layers < 1) fail("d_in, d, hidden and layers must be >= 1");
  if (cfg.k < 1) fail("k must be >= 1");
  if (cfg.r < 1) fail("r must be >= 1");
  if (!std::isfinite(cfg.beta)) fail("beta must be finite");
  if (!(cfg.tau > 0.0)) fail("tau must be > 0");
  if (!(cfg.lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(cfg.eps_mass > 0.0)) fail("eps_mass must be > 0");
  if (!(cfg.lr >= 0.0)) fail("lr must be >= 0");
  if (!(cfg.lr_drop_factor >= 0.0)) fail("lr_drop_factor must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (cfg.batch < 1) fail("batch must be >= 1");
  if (cfg.epochs < 0) fail("epochs must be >= 0");
  if (cfg.pairs_per_epoch < 0) fail("pairs_per_epoch must be >= 0");
  if (!(cfg.genuine_fraction >= 0.0 && cfg.genuine_fraction <= 1.0)) fail("genuine_fraction must lie in [0, 1]");
  if (!(cfg.jitter >= 0.0)) fail("jitter must be >= 0");
  if (!(cfg.predictor_init_std >= 0.0) || !(cfg.gate_init_std >= 0.0) || !std::isfinite(cfg.init_std)) {
    fail("initialization scales must be finite and >= 0");
  }
}

ModelShape model_shape(const TrainConfig& cfg) {
  ModelShape s;
  s.encoder.d_in = cfg.d_in;
  s.encoder.hidden = cfg.hidden;
  s.encoder.d = cfg.d;
  s.encoder.layers = cfg.layers;
  s.prototypes = cfg.k;
  return s;
}

ModelInit model_init(const TrainConfig& cfg) {
  ModelInit init;
  init.encoder_std = cfg.init_std;
  init.dsg.predictor_std = cfg.predictor_init_std;
  init.dsg.transform_std = cfg.init_std;
  init.dsg.gate_std = cfg.gate_init_std;
  return init;
}

Model make_model(const TrainConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  return make_model(model_shape(cfg), model_init(cfg), rng);
}

namespace {

struct Branch {
  EncoderTrace trace;
  Mat features;
  PrototypeAssignment z;
  Reconstruction recon;
  Mat within;  // within-set distances of recon.output
  double dsg = 0.0;
};

Branch forward_branch(const Model& model, const Mat& media) {
  if (media.rows() == 0) throw DomainError("pair loss: empty set");
  Branch b;
  b.features = encode_set(model.encoder, media, b.trace);
  b.z = predict_indicator(model.dsg, b.features);
  b.recon = reconstruct(model.dsg, b.features, b.z.normalized);
  b.within = pairwise_distances(b.recon.output, b.recon.output);
  b.dsg = dsg_loss(b.z.normalized, b.within);
  return b;
}

void backward_branch(const Model& model, const Branch& b, const Mat& d_output, double lambda, Model& grads) {
  const auto dsg_grad = dsg_backward(b.z.normalized, b.within, lambda);
  const auto dist_grad = pairwise_distances_backward(b.recon.output, b.recon.output, dsg_grad.d_distances);
  const Mat d_recon = d_output + dist_grad.d_a + dist_grad.d_b;

  const auto rg = reconstruct_backward(model.dsg, b.features, b.z.normalized, b.recon, d_recon, grads.dsg);
  const Mat d_assignment = dsg_grad.d_assignment + rg.d_assignment;
  const Mat d_features =
      rg.d_features + predict_indicator_backward(model.dsg, b.features, b.z, d_assignment, grads.dsg);
  encode_backward(model.encoder, b.trace, d_features, grads.encoder);
}

LossReport compose(double energy_value, int label, double dsg_a, double dsg_b, const TrainConfig& cfg) {
  LossReport r;
  r.ranking = ranking_loss(energy_value, label, cfg.tau);
  r.dsg = dsg_a + dsg_b;
  r.joint = r.ranking + cfg.lambda * r.dsg;
  r.energies.push_back(energy_value);
  return r;
}

}  // namespace

LossReport pair_loss(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                     const TrainConfig& cfg) {
  const auto a = forward_branch(model, media_a);
  const auto b = forward_branch(model, media_b);
  const Mat cross = pairwise_distances(a.recon.output, b.recon.output);
  return compose(energy(cross, cfg.beta).value, label, a.dsg, b.dsg, cfg);
}

LossReport pair_loss_and_grad(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                              const TrainConfig& cfg, Model& grads) {
  const auto a = forward_branch(model, media_a);
  const auto b = forward_branch(model, media_b);
  const Mat cross = pairwise_distances(a.recon.output, b.recon.output);
  const double e = energy(cross, cfg.beta).value;
  const LossReport report = compose(e, label, a.dsg, b.dsg, cfg);

  Mat d_out_a = Mat::Zero(a.recon.output.rows(), a.recon.output.cols());
  Mat d_out_b = Mat::Zero(b.recon.output.rows(), b.recon.output.cols());
  const double upstream = ranking_loss_grad(e, label, cfg.tau);
  if (upstream != 0.0) {
    const auto g = pairwise_distances_backward(a.recon.output, b.recon.output,
                                               energy_backward(cross, cfg.beta, upstream));
    d_out_a = g.d_a;
    d_out_b = g.d_b;
  }
  backward_branch(model, a, d_out_a, cfg.lambda, grads);
  backward_branch(model, b, d_out_b, cfg.lambda, grads);
  return report;
}

LossReport forward_pair(const Model& model, const SetPair& pair, const TrainConfig& cfg, Rng& rng) {
  const auto a = balance_set(pair.a, cfg.r, cfg.jitter, rng);
  const auto b = balance_set(pair.b, cfg.r, cfg.jitter, rng);
  return pair_loss(model, a.matrix(), b.matrix(), pair.label, cfg);
}

namespace {

template <typename Fn>
void for_each_tensor(Model& model, Model& velocity, const Model& grads, Fn fn) {
  for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
    fn(model.encoder.layers[l].weight, velocity.encoder.layers[l].weight, grads.encoder.layers[l].weight);
    fn(model.encoder.layers[l].bias, velocity.encoder.layers[l].bias, grads.encoder.layers[l].bias);
  }
  fn(model.dsg.predictor, velocity.dsg.predictor, grads.dsg.predictor);
  fn(model.dsg.transform, velocity.dsg.transform, grads.dsg.transform);
  fn(model.dsg.gate_logits, velocity.dsg.gate_logits, grads.dsg.gate_logits);
}

void scale(Model& m, double s) {
  for (auto& layer : m.encoder.layers) {
    layer.weight *= s;
    layer.bias *= s;
  }
  m.dsg.predictor *= s;
  m.dsg.transform *= s;
  m.dsg.gate_logits *= s;
}

void check_finite(const LossReport& r, std::int64_t iteration) {
  const auto where = " at iteration " + std::to_string(iteration);
  if (!std::isfinite(r.ranking)) throw NumericError("non-finite ranking loss" + where);
  if (!std::isfinite(r.dsg)) throw NumericError("non-finite DSG loss" + where);
  if (!std::isfinite(r.joint)) throw NumericError("non-finite joint loss" + where);
}

}  // namespace

void sgd_step(Model& model, Model& velocity, const Model& grads, double lr, double momentum,
              double weight_decay) {
  for_each_tensor(model, velocity, grads, [&](auto& theta, auto& v, const auto& g) {
    v = momentum * v + lr * (g + weight_decay * theta);
    theta -= v;
  });
}

TrainResult train(Model model, const Dataset& ds, const TrainConfig& cfg, const TrainCallback& on_iteration) {
  validate(cfg);
  validate(model);
  validate(ds);
  if (model.encoder.input_dim() != ds.dim) {
    throw ShapeError("model expects " + std::to_string(model.encoder.input_dim()) +
                     "-dimensional media, dataset has " + std::to_string(ds.dim));
  }

  // Separate stream from the one that initialized the model.
  std::seed_seq seq{cfg.seed, std::uint64_t{0x7472616e}};
  Rng rng(seq);
  std::bernoulli_distribution genuine(cfg.genuine_fraction);

  TrainResult result;
  Model velocity = zeros_like(model);
  Model grads = zeros_like(model);
  Dataset balanced;
  const PairSampler raw_sampler(ds);
  if (!raw_sampler.can_draw_genuine() && cfg.genuine_fraction > 0.0) {
    throw DomainError("training: dataset cannot form genuine pairs");
  }
  if (!raw_sampler.can_draw_imposter() && cfg.genuine_fraction < 1.0) {
    throw DomainError("training: imposter pairs need at least two subjects");
  }

  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::optional<PairSampler> epoch_sampler;
    if (cfg.balance == BalanceMode::per_epoch) {
      balanced.dim = ds.dim;
      balanced.sets.clear();
      for (const auto& s : ds.sets) balanced.sets.push_back(balance_set(s, cfg.r, cfg.jitter, rng));
      epoch_sampler.emplace(balanced, SplitPolicy::allow_split);
    }
    const PairSampler& sampler = epoch_sampler ? *epoch_sampler : raw_sampler;

    for (int done = 0; done < cfg.pairs_per_epoch; done += cfg.batch, ++t) {
      const int in_batch = std::min(cfg.batch, cfg.pairs_per_epoch - done);
      grads = zeros_like(model);
      LossReport report;
      report.iteration = t;
      for (int p = 0; p < in_batch; ++p) {
        const int label = genuine(rng) ? 0 : 1;
        SetPair pair = sampler.draw(label, rng);
        if (cfg.balance == BalanceMode::per_pair) {
          pair.a = balance_set(pair.a, cfg.r, cfg.jitter, rng);
          pair.b = balance_set(pair.b, cfg.r, cfg.jitter, rng);
        }
        const auto r = pair_loss_and_grad(model, pair.a.matrix(), pair.b.matrix(), label, cfg, grads);
        report.ranking += r.ranking;
        report.dsg += r.dsg;
        report.energies.push_back(r.energies.front());
      }
      report.ranking /= in_batch;
      report.dsg /= in_batch;
      report.joint = report.ranking + cfg.lambda * report.dsg;
      check_finite(report, t);
      if (in_batch > 1) scale(grads, 1.0 / in_batch);

      const double lr = (cfg.lr_drop_iter >= 0 && t >= cfg.lr_drop_iter) ? cfg.lr * cfg.lr_drop_factor : cfg.lr;
      sgd_step(model, velocity, grads, lr, cfg.momentum, cfg.weight_decay);

      result.history.push_back(report);
      if (on_iteration) on_iteration(result.history.back(), model);
    }
  }
  result.model = std::move(model);
  return result;
}

void save_loss_history(const std::vector<LossReport>& history, const std::filesystem::path& path) {
  std::string out = "iter,ranking,dsg,joint\n";
  auto put = [&out](double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    out.append(buf, end);
  };
  for (const auto& r : history) {
    out += std::to_string(r.iteration);
    out += ',';
    put(r.ranking);
    out += ',';
    put(r.dsg);
    out += ',';
    put(r.joint);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << out;
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace protoset
