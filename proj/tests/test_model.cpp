#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "protoset/model.hpp"
#include "protoset/training.hpp"
#include "test_util.hpp"

namespace protoset {
namespace {

namespace fs = std::filesystem;
using testing::random_mat;

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "protoset_tests";
  fs::create_directories(dir);
  return dir / name;
}

TrainConfig config(int layers = 2) {
  TrainConfig cfg;
  cfg.apply_desk_preset();
  cfg.d_in = 6;
  cfg.hidden = 9;
  cfg.d = 5;
  cfg.layers = layers;
  cfg.seed = 3;
  cfg.gate_init_std = 0.3;
  return cfg;
}

TEST(Model, ParameterViewsOrderAndShapes) {
  Model m = make_model(config(3));
  const auto views = parameter_views(m);
  std::vector<std::string> names;
  Index total = 0;
  for (const auto& v : views) {
    names.push_back(v.name);
    total += v.size();
  }
  EXPECT_EQ(names, (std::vector<std::string>{"encoder.0.weight", "encoder.0.bias", "encoder.1.weight",
                                             "encoder.1.bias", "encoder.2.weight", "encoder.2.bias",
                                             "dsg.predictor", "dsg.transform", "dsg.gate_logits"}));
  EXPECT_EQ(total, flatten(m).size());
  views[6].data[0] = 42.0;
  EXPECT_EQ(m.dsg.predictor(0, 0), 42.0);
}

TEST(Model, SameSeedSameModel) {
  EXPECT_EQ(flatten(make_model(config())), flatten(make_model(config())));
  TrainConfig other = config();
  other.seed = 4;
  EXPECT_NE(flatten(make_model(config())), flatten(make_model(other)));
}

TEST(Model, InitializationScales) {
  TrainConfig cfg = config();
  cfg.hidden = 400;
  cfg.d_in = 400;
  const Model m = make_model(cfg);
  const Mat& w = m.encoder.layers[0].weight;
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  EXPECT_NEAR(var, 1.0 / 400.0, 0.1 / 400.0);
  EXPECT_TRUE(m.encoder.layers[0].bias.isZero(0.0));
  const double pvar = m.dsg.predictor.squaredNorm() / static_cast<double>(m.dsg.predictor.size());
  EXPECT_NEAR(std::sqrt(pvar), 0.001, 0.0005);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (int layers : {1, 2, 3}) {
    const Model m = make_model(config(layers));
    const auto path = temp_file("model.ckpt");
    save_checkpoint(m, path);
    const Model back = load_checkpoint(path);
    EXPECT_EQ(flatten(back), flatten(m));
    EXPECT_EQ(back.encoder.leaky_slope, m.encoder.leaky_slope);
    const TrainConfig cfg = config(layers);
    const Mat a = random_mat(5, 6, 1);
    const Mat b = random_mat(7, 6, 2);
    EXPECT_EQ(pair_loss(m, a, b, 1, cfg).joint, pair_loss(back, a, b, 1, cfg).joint);
  }
}

TEST(Checkpoint, MalformedFiles) {
  const auto path = temp_file("bad.ckpt");
  std::ofstream(path, std::ios::trunc) << "NOTACHECKPOINT\n";
  EXPECT_THROW(load_checkpoint(path), ParseError);

  const Model m = make_model(config());
  save_checkpoint(m, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto cut = text.rfind("dsg.gate_logits");
  std::ofstream(path, std::ios::trunc) << text.substr(0, cut);
  EXPECT_THROW(load_checkpoint(path), Error);

  EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt")), IoError);
}

TEST(Model, ValidateCatchesMismatchedShapes) {
  Model m = make_model(config());
  m.dsg.predictor = Mat::Zero(3, 8);
  EXPECT_THROW(validate(m), ShapeError);
}

}  // namespace
}  // namespace protoset
