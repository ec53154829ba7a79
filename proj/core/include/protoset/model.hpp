#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "protoset/dsg.hpp"
#include "protoset/encoder.hpp"

namespace protoset {

/// Siamese model: one encoder and one DSG sub-net shared by both branches.
struct Model {
  EncoderParams encoder;
  DsgParams dsg;
};

struct ModelShape {
  EncoderShape encoder;
  Index prototypes = 8;
};

struct ModelInit {
  double encoder_std = 0.0;  // <= 0: 1/sqrt(fan_in)
  DsgInit dsg;
};

Model make_model(const ModelShape& shape, const ModelInit& init, Rng& rng);
void validate(const Model& m);

// Same shapes as `m`, every entry zero.
Model zeros_like(const Model& m);

/// A named, mutable window onto one parameter tensor (column-major storage).
struct ParamView {
  std::string name;
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Eigen::Map<Mat> map() const { return {data, rows, cols}; }
};

/// Stable order: encoder.<i>.weight, encoder.<i>.bias, ..., dsg.predictor,
/// dsg.transform, dsg.gate_logits.
std::vector<ParamView> parameter_views(Model& m);

// Flattened copy of every parameter, in parameter_views order.
Vec flatten(const Model& m);

/// Checkpoint: text container of named tensors written as hexadecimal floats,
/// so round trips are bit-exact.
void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace protoset
