#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "protoset/dataset.hpp"
#include "protoset/model.hpp"

namespace protoset {

enum class BalanceMode { per_pair, per_epoch };

struct TrainConfig {
  // Model shape.
  int d_in = 32;
  int hidden = 64;
  int d = 32;
  int layers = 2;
  int k = 500;

  // Loss.
  int r = 128;
  double beta = 10.0;
  double tau = 0.8;
  double lambda = 0.01;
  double eps_mass = 0.5;

  // Optimizer.
  double lr = 0.01;
  double lr_drop_factor = 0.1;
  std::int64_t lr_drop_iter = -1;  // < 0: never
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch = 1;
  int epochs = 10;
  int pairs_per_epoch = 500;
  double genuine_fraction = 0.5;

  // Data handling.
  double jitter = 0.01;
  BalanceMode balance = BalanceMode::per_pair;

  // Initialization.
  double init_std = 0.0;            // encoder + transform; <= 0: 1/sqrt(fan_in)
  double predictor_init_std = 0.001;
  double gate_init_std = 0.0;

  std::uint64_t seed = 0;
  bool grad_check = false;

  // Shrinks K and R to test scale (K = 8, R = 16).
  void apply_desk_preset();
  std::int64_t total_iterations() const;
};

void validate(const TrainConfig& cfg);

ModelShape model_shape(const TrainConfig& cfg);
ModelInit model_init(const TrainConfig& cfg);
Model make_model(const TrainConfig& cfg);

struct LossReport {
  double ranking = 0.0;
  double dsg = 0.0;    // unweighted DSG loss, summed over both sets
  double joint = 0.0;  // ranking + lambda * dsg
  std::vector<double> energies;
  std::int64_t iteration = 0;
};

/// Joint loss of one (already balanced) pair given as media matrices.
LossReport pair_loss(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                     const TrainConfig& cfg);

/// pair_loss plus the analytic gradient of the joint loss, accumulated into
/// `grads`.
LossReport pair_loss_and_grad(const Model& model, const Mat& media_a, const Mat& media_b,
                              int label, const TrainConfig& cfg, Model& grads);

/// Balances both sets to cfg.r with `rng`, then evaluates pair_loss.
LossReport forward_pair(const Model& model, const SetPair& pair, const TrainConfig& cfg,
                        Rng& rng);

struct TrainResult {
  Model model;
  std::vector<LossReport> history;
};

using TrainCallback = std::function<void(const LossReport&, const Model&)>;

/// SGD with momentum and weight decay over sampled set pairs. Deterministic for
/// a fixed cfg.seed. Throws NumericError if a loss term becomes non-finite.
TrainResult train(Model model, const Dataset& ds, const TrainConfig& cfg,
                  const TrainCallback& on_iteration = {});

/// Applies one SGD step in place. `velocity` has the shape of `model`.
void sgd_step(Model& model, Model& velocity, const Model& grads, double lr, double momentum,
              double weight_decay);

void save_loss_history(const std::vector<LossReport>& history, const std::filesystem::path& path);

struct TensorCheck {
  std::string name;
  int coordinates = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  bool passed = false;
};

struct GradCheckOptions {
  int coordinates_per_tensor = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

// Test hook: rewrites the analytic gradient before comparison.
using GradientHook = std::function<void(Model&)>;

/// Central finite differences against the analytic gradient of the joint
/// loss. Coordinates whose +/- step straddles a rectifier or hinge kink are
/// resampled.
GradCheckReport grad_check(const Model& model, const Mat& media_a, const Mat& media_b, int label,
                           const TrainConfig& cfg, const GradCheckOptions& opts = {},
                           const GradientHook& hook = {});

}  // namespace protoset
