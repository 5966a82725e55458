#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"
#include "pan/zoo.hpp"

using namespace pan;

namespace {

std::vector<LayerKind> kinds(const Model& m, bool skip_batchnorm = false) {
  std::vector<LayerKind> out;
  for (const auto& l : m.layers()) {
    if (!(skip_batchnorm && l.kind == LayerKind::batchnorm)) out.push_back(l.kind);
  }
  return out;
}

Index resolution_changes(const Model& m) {
  return std::count_if(m.layers().begin(), m.layers().end(), [](const LayerSpec& l) {
    return l.kind == LayerKind::maxpool || l.kind == LayerKind::unpool;
  });
}

}  // namespace

TEST_CASE("lenet encoder shapes") {
  const Model e = build_encoder({1, 1, 28, 28}, "lenet", 1);
  CHECK(e.input_shape() == Shape{1, 28, 28});
  CHECK(e.output_shape() == Shape{16, 7, 7});
  TapeR tape;
  Rng rng(1);
  const TensorR x = oracle::random_tensor<float>(rng, {3, 1, 28, 28}, 0, 1);
  CHECK(e.forward(x).shape() == Shape{3, 16, 7, 7});
  for (const auto& l : e.layers()) CHECK(l.kind != LayerKind::dense);
}

TEST_CASE("encoder construction is deterministic per seed") {
  CHECK(same_weights(build_encoder({1, 28, 28}, "lenet", 42), build_encoder({1, 28, 28}, "lenet", 42)));
  CHECK_FALSE(same_weights(build_encoder({1, 28, 28}, "lenet", 42), build_encoder({1, 28, 28}, "lenet", 43)));
  for (const auto& [name, t] : build_encoder({1, 28, 28}, "lenet", 5).parameters()) CHECK(t.all_finite());
}

TEST_CASE("encoder build errors name the problem") {
  CHECK_THROWS_AS(build_encoder({1, 4, 4}, "lenet", 1), DimensionError);
  const std::vector<LayerSpec> pools{LayerSpec::maxpool(2, 2), LayerSpec::maxpool(2, 2), LayerSpec::maxpool(2, 2),
                                     LayerSpec::maxpool(2, 2)};
  try {
    build_encoder({1, 8, 8}, "custom", 1, pools);
    FAIL("expected a build error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("layer 3") != std::string::npos);
  }
  CHECK_THROWS_AS(build_encoder({1, 8, 8}, "custom", 1, {LayerSpec::dense(4)}), ConfigError);
  CHECK_THROWS_AS(build_encoder({1, 8, 8}, "vgg", 1), ConfigError);
}

TEST_CASE("identity encoder is the identity map") {
  const Model e = build_encoder({1, 8, 8}, "identity", 1);
  Rng rng(2);
  const TensorR x = oracle::random_tensor<float>(rng, {2, 1, 8, 8});
  CHECK(e.forward(x) == x);
  CHECK(e.parameter_count() == 0);
}

TEST_CASE("mlp classifier") {
  const Model probe = build_mlp_classifier({16, 7, 7}, 10, {}, 1);
  CHECK(std::count_if(probe.layers().begin(), probe.layers().end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::dense; }) == 1);
  CHECK(probe.parameter_count() == 784 * 10 + 10);

  const Model mlp = build_mlp_classifier({16, 7, 7}, 10, {128}, 1);
  CHECK(mlp.parameter_count() == 101770);
  CHECK(mlp.output_shape() == Shape{10});

  Rng rng(3);
  const TensorR probs = mlp.forward(oracle::random_tensor<float>(rng, {20, 16, 7, 7}));
  const auto m = probs.matrix(20, 10);
  for (Index r = 0; r < 20; ++r) CHECK(std::abs(m.row(r).sum() - 1.f) <= 1e-5f);
}

TEST_CASE("reconstructor presets") {
  const Model r = build_reconstructor({16, 7, 7}, {1, 28, 28}, "deconv", 1);
  CHECK(r.output_shape() == Shape{1, 28, 28});
  CHECK(std::count_if(r.layers().begin(), r.layers().end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::unpool && l.scale == 2; }) == 2);
  CHECK(std::count_if(r.layers().begin(), r.layers().end(),
                      [](const LayerSpec& l) { return l.kind == LayerKind::transposed_conv; }) == 2);

  const Model same = build_reconstructor({3, 8, 8}, {3, 8, 8}, "deconv", 1);
  REQUIRE(same.layers().size() == 1);
  CHECK(same.layers()[0] == LayerSpec::transposed_conv(3, 1, 1, 0));

  CHECK_THROWS_AS(build_reconstructor({16, 7, 7}, {1, 27, 27}, "deconv", 1), DimensionError);
  CHECK_THROWS_AS(build_reconstructor({16, 7, 7}, {1, 28, 21}, "deconv", 1), DimensionError);
  CHECK(build_reconstructor({16, 4, 4}, {1, 16, 16}, "deconv5", 1).output_shape() == Shape{1, 16, 16});
}

TEST_CASE("mirror_of") {
  const Model e = build_encoder({1, 28, 28}, "lenet", 1);
  const Model m = mirror_of(e, 2);
  CHECK(m.input_shape() == Shape{16, 7, 7});
  CHECK(m.output_shape() == Shape{1, 28, 28});
  CHECK(resolution_changes(m) == resolution_changes(e));
  for (const auto& l : m.layers()) CHECK(l.kind != LayerKind::batchnorm);

  const Model single = build_encoder({2, 9, 9}, "custom", 1, {LayerSpec::conv(4, 3, 2, 1)});
  const Model ms = mirror_of(single, 1);
  REQUIRE(ms.layers().size() == 1);
  CHECK(ms.layers()[0] == LayerSpec::transposed_conv(2, 3, 2, 1));
  CHECK(ms.output_shape() == Shape{2, 9, 9});

  // Batchnorm has no mirror, so the involution holds on the remaining kinds.
  CHECK(kinds(mirror_of(m, 3)) == kinds(e, true));
}

TEST_CASE("mirror keeps the order of resolution changes") {
  const std::vector<LayerSpec> layers{LayerSpec::conv(4, 3, 1, 1), LayerSpec::maxpool(2, 2),
                                      LayerSpec::conv(6, 3, 1, 1), LayerSpec::maxpool(3, 3)};
  const Model e = build_encoder({1, 12, 12}, "custom", 1, layers);
  const Model m = mirror_of(e, 1);
  std::vector<Index> scales;
  for (const auto& l : m.layers())
    if (l.kind == LayerKind::unpool) scales.push_back(l.scale);
  CHECK(scales == std::vector<Index>{3, 2});
  CHECK(m.output_shape() == Shape{1, 12, 12});
}

TEST_CASE("mode flag switches batchnorm statistics") {
  Model e = build_encoder({1, 8, 8}, "custom", 1, {LayerSpec::of(LayerKind::batchnorm)});
  Rng rng(4);
  const TensorR x = oracle::random_tensor<float>(rng, {6, 1, 8, 8}, 2, 3);
  const TensorR train_out = e.forward(x);
  CHECK(std::abs(train_out.array().mean()) < 1e-4f);
  e.set_mode(Mode::infer);
  const TensorR infer_out = e.forward(x);
  // Running stats start at mean 0, variance 1: inference is (nearly) the identity.
  CHECK((infer_out.array() - x.array() / std::sqrt(1.f + 1e-5f)).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("forward on a tape updates running statistics only when asked") {
  Model e = build_encoder({1, 8, 8}, "lenet", 1);
  Rng rng(5);
  const TensorR x = oracle::random_tensor<float>(rng, {4, 1, 8, 8}, 0, 1);
  const Model before = e;
  {
    TapeR tape;
    NamedVars bound;
    e.forward(tape, tape.constant(x), &bound, {.trainable = true, .update_running = false});
    CHECK(bound.size() == 8);
  }
  CHECK(same_weights(e, before));
  {
    TapeR tape;
    e.forward(tape, tape.constant(x), nullptr, {.trainable = false, .update_running = true});
  }
  CHECK_FALSE(same_weights(e, before));
}

TEST_CASE("layer text round trip") {
  const std::vector<LayerSpec> layers{LayerSpec::conv(8, 5, 1, 2), LayerSpec::of(LayerKind::batchnorm),
                                      LayerSpec::of(LayerKind::relu), LayerSpec::maxpool(2, 2),
                                      LayerSpec::transposed_conv(3, 3, 2, 1), LayerSpec::unpool(2),
                                      LayerSpec::dense(10), LayerSpec::of(LayerKind::flatten),
                                      LayerSpec::of(LayerKind::softmax)};
  CHECK(parse_layers(format_layers(layers)) == layers);
  CHECK(format_layer(LayerSpec::conv(8, 5, 1, 2)) == "conv:8:5:1:2");
  CHECK_THROWS_AS(parse_layer("conv:8"), ConfigError);
  CHECK_THROWS_AS(parse_layer("lstm:3"), ConfigError);
}

TEST_CASE("parameter names are unique and shapes chain") {
  const Model e = build_encoder({1, 28, 28}, "lenet", 1);
  const auto state = e.state();
  for (std::size_t i = 1; i < state.size(); ++i) CHECK(state[i - 1].first < state[i].first);
  CHECK(e.parameters().count("conv0.weight") == 1);
  CHECK(e.buffers().count("batchnorm1.running_var") == 1);
  CHECK(e.parameters().at("conv0.weight").shape() == Shape{8, 1, 5, 5});
}
