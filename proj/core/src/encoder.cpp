#include "protoset/encoder.hpp"

#include <cmath>
#include <string>

namespace protoset {

namespace {

Mat leaky(const Mat& x, double slope) {
  return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Mat leaky_grad(const Mat& pre, double slope) {
  return pre.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

void require_input(const EncoderParams& p, Index cols) {
  if (p.layers.empty()) throw ShapeError("encoder has no layers");
  if (cols != p.input_dim()) {
    throw ShapeError("encoder expects input dimension " + std::to_string(p.input_dim()) + ", got " +
                     std::to_string(cols));
  }
}

}  // namespace

EncoderParams make_encoder(const EncoderShape& shape, double init_std, Rng& rng) {
  if (shape.d_in < 1 || shape.d < 1 || shape.layers < 1 || (shape.layers > 1 && shape.hidden < 1)) {
    throw ConfigError("encoder shape must have positive dimensions and at least one layer");
  }
  EncoderParams p;
  std::normal_distribution<double> normal(0.0, 1.0);
  Index in = shape.d_in;
  for (int l = 0; l < shape.layers; ++l) {
    const Index out = (l + 1 == shape.layers) ? shape.d : shape.hidden;
    const double std = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer;
    layer.weight = Mat::NullaryExpr(out, in, [&] { return std * normal(rng); });
    layer.bias = Vec::Zero(out);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

void validate(const EncoderParams& p) {
  if (p.layers.empty()) throw ShapeError("encoder has no layers");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(l) + " bias does not match weight rows");
    }
    if (l > 0 && layer.weight.cols() != p.layers[l - 1].weight.rows()) {
      throw ShapeError("encoder layer " + std::to_string(l) + " input does not match previous output");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw ShapeError("encoder layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
}

Vec encode(const EncoderParams& p, const Vec& x) {
  require_input(p, x.size());
  Vec h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vec pre = p.layers[l].weight * h + p.layers[l].bias;
    h = (l + 1 < p.layers.size()) ? Vec(leaky(pre, p.leaky_slope)) : pre;
  }
  return h;
}

Mat encode_set(const EncoderParams& p, const Mat& x, EncoderTrace& trace) {
  require_input(p, x.cols());
  trace.inputs.clear();
  trace.preactivations.clear();
  Mat h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    trace.inputs.push_back(h);
    Mat pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    trace.preactivations.push_back(pre);
    h = (l + 1 < p.layers.size()) ? leaky(pre, p.leaky_slope) : pre;
  }
  return h;
}

Mat encode_set(const EncoderParams& p, const Mat& x) {
  EncoderTrace trace;
  return encode_set(p, x, trace);
}

Mat encode_set(const EncoderParams& p, const MediaSet& s) {
  if (s.media.empty()) throw DomainError("encode_set: empty set");
  return encode_set(p, s.matrix());
}

Mat encode_backward(const EncoderParams& p, const EncoderTrace& trace, const Mat& d_out,
                    EncoderParams& grads) {
  Mat delta = d_out;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    if (li + 1 < p.layers.size()) {
      delta = delta.cwiseProduct(leaky_grad(trace.preactivations[li], p.leaky_slope));
    }
    grads.layers[li].weight.noalias() += delta.transpose() * trace.inputs[li];
    grads.layers[li].bias += delta.colwise().sum().transpose();
    delta = delta * p.layers[li].weight;
  }
  return delta;
}

Vec encode_jvp(const EncoderParams& p, const Vec& x, const Vec& v) {
  require_input(p, x.size());
  require_shape(v.size() == x.size(), "encode_jvp: tangent has wrong dimension");
  Vec h = x;
  Vec t = v;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vec pre = p.layers[l].weight * h + p.layers[l].bias;
    Vec dpre = p.layers[l].weight * t;
    if (l + 1 < p.layers.size()) {
      t = dpre.cwiseProduct(Vec(leaky_grad(pre, p.leaky_slope)));
      h = leaky(pre, p.leaky_slope);
    } else {
      t = dpre;
      h = pre;
    }
  }
  return t;
}

}  // namespace protoset
