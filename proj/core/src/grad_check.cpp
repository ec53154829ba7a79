#include <algorithm>
#include <cmath>
#include <numeric>

#include "protoset/matching.hpp"
#include "protoset/training.hpp"

namespace protoset {

namespace {

// Which side of every non-smooth point the loss currently sits on: the sign of
// each hidden pre-activation and whether the imposter hinge is active.
std::vector<bool> kink_signature(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                                 const TrainConfig& cfg) {
  std::vector<bool> sig;
  for (const Mat* media : {&media_a, &media_b}) {
    EncoderTrace trace;
    encode_set(model.encoder, *media, trace);
    for (std::size_t l = 0; l + 1 < trace.preactivations.size(); ++l) {
      const Mat& pre = trace.preactivations[l];
      for (Index i = 0; i < pre.size(); ++i) sig.push_back(pre.data()[i] > 0.0);
    }
  }
  if (label == 1) {
    const auto r = pair_loss(model, media_a, media_b, label, cfg);
    sig.push_back(r.energies.front() < cfg.tau);
  }
  return sig;
}

}  // namespace

GradCheckReport grad_check(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                           const TrainConfig& cfg, const GradCheckOptions& opts, const GradientHook& hook) {
  Model grads = zeros_like(model);
  pair_loss_and_grad(model, media_a, media_b, label, cfg, grads);
  if (hook) hook(grads);

  Model probe = model;
  const auto views = parameter_views(probe);
  const auto grad_views = parameter_views(grads);
  const auto base_signature = kink_signature(model, media_a, media_b, label, cfg);
  Rng rng(opts.seed);

  GradCheckReport report;
  report.passed = true;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    TensorCheck check;
    check.name = view.name;

    // Every coordinate of small tensors, a random sample of large ones; kinked
    // coordinates are skipped and replaced from the remaining pool.
    std::vector<Index> order(static_cast<std::size_t>(view.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    for (Index idx : order) {
      if (check.coordinates >= opts.coordinates_per_tensor) break;
      double& theta = view.data[idx];
      const double saved = theta;
      theta = saved + opts.step;
      const bool plus_smooth = kink_signature(probe, media_a, media_b, label, cfg) == base_signature;
      const double plus = pair_loss(probe, media_a, media_b, label, cfg).joint;
      theta = saved - opts.step;
      const bool minus_smooth = kink_signature(probe, media_a, media_b, label, cfg) == base_signature;
      const double minus = pair_loss(probe, media_a, media_b, label, cfg).joint;
      theta = saved;
      if (!plus_smooth || !minus_smooth) continue;

      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double analytic = grad_views[v].data[idx];
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_relative_error = std::max(check.max_relative_error, rel_err);
      ++check.coordinates;
    }
    check.passed = check.coordinates > 0 && check.max_relative_error <= opts.tolerance;
    report.passed = report.passed && check.passed;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

}  // namespace protoset
