#pragma once

#include <vector>

#include "protoset/dataset.hpp"
#include "protoset/linalg.hpp"

namespace protoset {

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
};

/// Multilayer perceptron d_in -> hidden -> ... -> d. Every layer but the last
/// is followed by a leaky rectifier with fixed negative slope.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  double leaky_slope = 0.25;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }
};

struct EncoderShape {
  Index d_in = 32;
  Index hidden = 64;
  Index d = 32;
  int layers = 2;
};

// Weights ~ N(0, init_std^2); init_std <= 0 selects 1/sqrt(fan_in). Biases 0.
EncoderParams make_encoder(const EncoderShape& shape, double init_std, Rng& rng);
void validate(const EncoderParams& p);

Vec encode(const EncoderParams& p, const Vec& x);

/// Row i of the result is encode(row i of x).
Mat encode_set(const EncoderParams& p, const Mat& x);
Mat encode_set(const EncoderParams& p, const MediaSet& s);

// Activations kept for the backward pass.
struct EncoderTrace {
  std::vector<Mat> inputs;       // input to each layer (rows = media)
  std::vector<Mat> preactivations;
};

Mat encode_set(const EncoderParams& p, const Mat& x, EncoderTrace& trace);

/// Accumulates parameter gradients into `grads` (same shapes as `p`) and
/// returns d(loss)/d(input).
Mat encode_backward(const EncoderParams& p, const EncoderTrace& trace, const Mat& d_out,
                    EncoderParams& grads);

// Jacobian-vector product d(encode)/dx * v at x.
Vec encode_jvp(const EncoderParams& p, const Vec& x, const Vec& v);

}  // namespace protoset
