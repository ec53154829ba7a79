#include "protoset/model.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace protoset {

Model make_model(const ModelShape& shape, const ModelInit& init, Rng& rng) {
  Model m;
  m.encoder = make_encoder(shape.encoder, init.encoder_std, rng);
  DsgInit dsg = init.dsg;
  if (dsg.transform_std <= 0.0 && init.encoder_std > 0.0) dsg.transform_std = init.encoder_std;
  m.dsg = make_dsg(shape.encoder.d, shape.prototypes, dsg, rng);
  return m;
}

void validate(const Model& m) {
  validate(m.encoder);
  validate(m.dsg);
  if (m.encoder.output_dim() != m.dsg.dim()) {
    throw ShapeError("encoder output dimension " + std::to_string(m.encoder.output_dim()) +
                     " does not match DSG dimension " + std::to_string(m.dsg.dim()));
  }
}

Model zeros_like(const Model& m) {
  Model z = m;
  for (auto& layer : z.encoder.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  z.dsg.predictor.setZero();
  z.dsg.transform.setZero();
  z.dsg.gate_logits.setZero();
  return z;
}

std::vector<ParamView> parameter_views(Model& m) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < m.encoder.layers.size(); ++l) {
    auto& layer = m.encoder.layers[l];
    const std::string prefix = "encoder." + std::to_string(l);
    views.push_back({prefix + ".weight", layer.weight.data(), layer.weight.rows(), layer.weight.cols()});
    views.push_back({prefix + ".bias", layer.bias.data(), layer.bias.size(), 1});
  }
  views.push_back({"dsg.predictor", m.dsg.predictor.data(), m.dsg.predictor.rows(), m.dsg.predictor.cols()});
  views.push_back({"dsg.transform", m.dsg.transform.data(), m.dsg.transform.rows(), m.dsg.transform.cols()});
  views.push_back({"dsg.gate_logits", m.dsg.gate_logits.data(), m.dsg.gate_logits.rows(),
                   m.dsg.gate_logits.cols()});
  return views;
}

Vec flatten(const Model& m) {
  Model copy = m;
  const auto views = parameter_views(copy);
  Index total = 0;
  for (const auto& v : views) total += v.size();
  Vec out(total);
  Index at = 0;
  for (const auto& v : views) {
    out.segment(at, v.size()) = Eigen::Map<const Vec>(v.data, v.size());
    at += v.size();
  }
  return out;
}

namespace {

constexpr std::string_view kCheckpointMagic = "PSETCKPT v1";

void append_hex(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  (void)ec;
  out.append(buf, end);
}

double parse_hex(const std::string& tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, std::chars_format::hex);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "invalid hexadecimal float '" + tok + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(const Model& m, const std::filesystem::path& path) {
  validate(m);
  Model copy = m;
  const auto views = parameter_views(copy);
  std::string out(kCheckpointMagic);
  out += " tensors=" + std::to_string(views.size()) + " leaky_slope=";
  append_hex(out, m.encoder.leaky_slope);
  out += '\n';
  for (const auto& v : views) {
    out += v.name + ' ' + std::to_string(v.rows) + ' ' + std::to_string(v.cols) + '\n';
    for (Index i = 0; i < v.size(); ++i) {
      if (i > 0) out += ' ';
      append_hex(out, v.data[i]);
    }
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << out;
  if (!f) throw IoError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(f, line) || line.rfind(kCheckpointMagic, 0) != 0) {
    throw ParseError(1, "expected checkpoint header '" + std::string(kCheckpointMagic) + "'");
  }
  std::istringstream header(line.substr(kCheckpointMagic.size()));
  std::size_t tensors = 0;
  double slope = 0.25;
  std::string field;
  while (header >> field) {
    if (field.rfind("tensors=", 0) == 0) {
      tensors = std::stoul(field.substr(8));
    } else if (field.rfind("leaky_slope=", 0) == 0) {
      slope = parse_hex(field.substr(12), 1);
    } else {
      throw ParseError(1, "unexpected header field '" + field + "'");
    }
  }

  std::map<std::string, Mat> named;
  for (std::size_t t = 0; t < tensors; ++t) {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    ++line_no;
    if (!std::getline(f, line)) throw ParseError(line_no, "missing tensor header");
    std::istringstream th(line);
    if (!(th >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw ParseError(line_no, "expected '<name> <rows> <cols>'");
    }
    ++line_no;
    if (!std::getline(f, line)) throw ParseError(line_no, "missing values for " + name);
    std::istringstream values(line);
    Mat m(rows, cols);
    std::string tok;
    Index i = 0;
    while (values >> tok) {
      if (i >= m.size()) throw ParseError(line_no, "too many values for " + name);
      m.data()[i++] = parse_hex(tok, line_no);
    }
    if (i != m.size()) throw ParseError(line_no, "too few values for " + name);
    named[name] = std::move(m);
  }

  auto take = [&](const std::string& name) {
    auto it = named.find(name);
    if (it == named.end()) throw FormatError("checkpoint is missing tensor " + name);
    Mat m = std::move(it->second);
    named.erase(it);
    return m;
  };

  Model model;
  model.encoder.leaky_slope = slope;
  for (std::size_t l = 0; named.count("encoder." + std::to_string(l) + ".weight") != 0; ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    DenseLayer layer;
    layer.weight = take(prefix + ".weight");
    const Mat bias = take(prefix + ".bias");
    if (bias.cols() != 1) throw FormatError(prefix + ".bias must be a column");
    layer.bias = bias.col(0);
    model.encoder.layers.push_back(std::move(layer));
  }
  model.dsg.predictor = take("dsg.predictor");
  model.dsg.transform = take("dsg.transform");
  model.dsg.gate_logits = take("dsg.gate_logits");
  if (!named.empty()) throw FormatError("checkpoint has unexpected tensor " + named.begin()->first);
  try {
    validate(model);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

}  // namespace protoset
