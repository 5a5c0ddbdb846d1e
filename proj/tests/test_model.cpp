#include <doctest.h>

#include <cmath>

#include "vsd/errors.hpp"
#include "vsd/model.hpp"
#include "vsd/rng.hpp"

using namespace vsd;
using namespace vsd::nn;

namespace {

std::vector<float> random_clip(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> clip(static_cast<std::size_t>(cfg.in_frames) * cfg.in_height * cfg.in_width *
                          cfg.in_channels);
  for (auto& v : clip) v = static_cast<float>(rng.uniform());
  return clip;
}

ingest::ClipBatch batch_of(const ModelConfig& cfg, const std::vector<std::vector<float>>& clips) {
  ingest::ClipBatch b;
  b.batch = static_cast<int>(clips.size());
  b.frames = cfg.in_frames;
  b.height = cfg.in_height;
  b.width = cfg.in_width;
  for (const auto& c : clips) b.data.insert(b.data.end(), c.begin(), c.end());
  b.targets = Eigen::VectorXf::Zero(b.batch);
  return b;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("model: config validation flags collapsing volumes") {
  ModelConfig cfg = ModelConfig::tiny();
  CHECK_NOTHROW(cfg.validate());
  cfg.blocks.push_back({16, true, true});
  cfg.blocks.push_back({16, true, true});  // 8x8 cannot survive four spatial pools
  CHECK_THROWS_AS(cfg.validate(), ShapeMismatch);

  ModelConfig bad = ModelConfig::tiny();
  bad.blocks.clear();
  CHECK_THROWS_AS(bad.validate(), ShapeMismatch);
}

TEST_CASE("model: config json round-trip") {
  const ModelConfig cfg;
  const auto j = cfg.to_json();
  const ModelConfig back = ModelConfig::from_json(j);
  CHECK(back == cfg);
}

TEST_CASE("model: parameter count matches layer arithmetic") {
  // tiny: conv 6x(3*27)+6, conv 8x(6*27)+8, dense 16x8+16, dense 16+1
  const SpeedNet<double> tiny(ModelConfig::tiny(), 1);
  CHECK(tiny.parameter_count() == 492 + 1304 + 144 + 17);

  // default desk architecture
  const SpeedNet<float> full(ModelConfig{}, 1);
  const long expected = (16 * 81 + 16) + (32 * 432 + 32) + (64 * 864 + 64) + (128 * 1728 + 128) +
                        (256 * 128 + 256) + (256 + 1);
  CHECK(full.parameter_count() == expected);
}

TEST_CASE("model: seeded initialization is reproducible") {
  const ModelConfig cfg = ModelConfig::tiny();
  const SpeedNet<float> a(cfg, 77), b(cfg, 77), c(cfg, 78);
  CHECK(a.parameters() == b.parameters());
  CHECK(a.parameters() != c.parameters());
}

TEST_CASE("model: batch of five maps to five outputs") {
  const ModelConfig cfg = ModelConfig::tiny();
  const SpeedNet<float> net(cfg, 3);
  std::vector<std::vector<float>> clips;
  for (int i = 0; i < 5; ++i) clips.push_back(random_clip(cfg, 100 + i));
  const auto preds = net.predict(batch_of(cfg, clips));
  CHECK(preds.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(std::isfinite(preds[i]));
}

TEST_CASE("model: eval-mode forward is deterministic and finite") {
  const ModelConfig cfg = ModelConfig::tiny();
  const SpeedNet<float> net(cfg, 5);
  const auto clip = random_clip(cfg, 9);
  const auto preds = net.predict(batch_of(cfg, {clip, clip}));
  CHECK(preds[0] == preds[1]);

  // degenerate input stays finite
  std::vector<float> zeros(clip.size(), 0.f);
  CHECK(std::isfinite(net.predict_clip(zeros)));
}

TEST_CASE("model: shape mismatches are rejected") {
  const ModelConfig cfg = ModelConfig::tiny();
  const SpeedNet<float> net(cfg, 5);
  std::vector<float> wrong(17, 0.f);
  CHECK_THROWS_AS(net.predict_clip(wrong), ShapeMismatch);

  ingest::ClipBatch bad;
  bad.batch = 1;
  bad.frames = cfg.in_frames + 1;
  bad.height = cfg.in_height;
  bad.width = cfg.in_width;
  bad.data.assign(static_cast<std::size_t>(bad.frames) * bad.height * bad.width * 3, 0.f);
  bad.targets = Eigen::VectorXf::Zero(1);
  CHECK_THROWS_AS(net.predict(bad), ShapeMismatch);
}

TEST_CASE("model: mse loss hand cases") {
  Eigen::VectorXd p(2), t(2);
  p << 0.0, 0.0;
  t << 1.0, -1.0;
  CHECK(mse_loss<double>(p, t) == doctest::Approx(1.0));
  CHECK(mse_loss<double>(t, t) == 0.0);

  Eigen::VectorXd p3(3);
  p3 << 1, 2, 3;
  CHECK_THROWS_AS(mse_loss<double>(p3, t), LengthMismatch);
}

TEST_CASE("model: mse gradient matches central differences") {
  Rng rng(4);
  Eigen::VectorXd p(6), t(6);
  for (int i = 0; i < 6; ++i) {
    p[i] = rng.uniform(-1, 1);
    t[i] = rng.uniform(-1, 1);
  }
  const auto grad = mse_loss_grad<double>(p, t);
  const double h = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    const double fd = (mse_loss<double>(pp, t) - mse_loss<double>(pm, t)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("model: analytic gradient matches finite differences on the tiny config") {
  const ModelConfig cfg = ModelConfig::tiny();
  SpeedNet<double> net(cfg, 11);
  const auto clip = random_clip(cfg, 21);
  const double target = 0.3;

  SpeedNet<double>::Vec grad = SpeedNet<double>::Vec::Zero(net.parameter_count());
  const double pred = net.forward(clip);
  net.backward(2.0 * (pred - target), grad);

  auto loss_at = [&](Eigen::Index i, double delta) {
    SpeedNet<double> probe(cfg, 11);
    probe.parameters() = net.parameters();
    probe.parameters()[i] += delta;
    const double p = probe.predict_clip(clip);
    return (p - target) * (p - target);
  };

  Rng rng(31);
  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  while (checked < 100) {
    const auto i = static_cast<Eigen::Index>(rng.uniform_index(net.parameter_count()));
    const double fd = (loss_at(i, h) - loss_at(i, -h)) / (2 * h);
    const double a = grad[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, rel);
    CHECK(rel < 1e-3);
    ++checked;
  }
  INFO("worst relative deviation ", worst);
}

TEST_SUITE_END();
