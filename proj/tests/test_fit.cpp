#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace coopscene;

namespace {

double max_center_error(const Scene& a, const Scene& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.objects.size(); ++j) {
    worst = std::max(worst, norm(a.objects[j].box.center - b.objects[j].box.center));
  }
  return worst;
}

Scene fitted(const FitResult& r, const Observations& o, const Priors& pri, const Scene* gt, const FitConfig& cfg) {
  return fitted_scene(r.params, make_objective(o, pri, gt, cfg), o);
}

}  // namespace

TEST(Adam, ZeroGradientOnlyDecaysMoments) {
  FitConfig c;
  AdamState s{{0.4, -0.2}, {0.01, 0.02}, 3};
  std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{0.0, 0.0};
  const double bc1 = 1 - std::pow(0.9, 4), bc2 = 1 - std::pow(0.999, 4);
  const double step0 = c.lr * (0.9 * 0.4 / bc1) / (std::sqrt(0.999 * 0.01 / bc2) + c.eps_hat);
  adam_step(x, g, s, c);
  EXPECT_DOUBLE_EQ(s.m[0], 0.9 * 0.4);
  EXPECT_DOUBLE_EQ(s.v[1], 0.999 * 0.02);
  EXPECT_NEAR(x[0], 1.0 - step0, 1e-15);

  // From a fresh state a zero gradient leaves everything at rest.
  AdamState fresh;
  std::vector<double> y{1.0, 2.0};
  adam_step(y, g, fresh, c);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(fresh.m[0], 0.0);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  FitConfig c;
  c.lr = 0.01;
  AdamState s;
  std::vector<double> x{0.0, 0.0, 0.0};
  const std::vector<double> g{3.0, -1e-3, 250.0};
  adam_step(x, g, s, c);
  EXPECT_NEAR(x[0], -0.01, 1e-8);
  EXPECT_NEAR(x[1], 0.01, 1e-6);
  EXPECT_NEAR(x[2], -0.01, 1e-8);
}

TEST(Adam, DescendsAParabola) {
  FitConfig c;
  c.lr = 0.1;
  AdamState s;
  std::vector<double> x{1.0};
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> g{2.0 * x[0]};
    adam_step(x, g, s, c);
  }
  EXPECT_LT(std::abs(x[0]), 0.05);
}

TEST(Adam, ShapeMismatch) {
  AdamState s;
  std::vector<double> x{1.0, 2.0};
  const std::vector<double> g{1.0};
  try {
    adam_step(x, g, s, FitConfig{});
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(FitConfigCheck, RejectsBadSettings) {
  FitConfig c;
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = FitConfig{};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = FitConfig{};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(FitConfig{}.validate());
  EXPECT_EQ(FitConfig::network_preset().lr, 1e-4);
}

TEST(FitModeNames, RoundTrip) {
  for (FitMode m : {FitMode::Supervised, FitMode::Cooperative, FitMode::Unsupervised2d}) {
    EXPECT_EQ(parse_fit_mode(to_string(m)), m);
  }
  EXPECT_EQ(std::string(to_string(FitMode::Unsupervised2d)), "unsupervised-2d");
  EXPECT_THROW(parse_fit_mode("semi"), Error);
}

TEST(InitParams, DeterministicAndEmpty) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(71, 0);
  const Observations o = observe(s);
  const ParamVector a = flatten(init_params(o, pri.codebooks));
  const ParamVector b = flatten(init_params(o, pri.codebooks));
  EXPECT_EQ(a.values, b.values);
  const SceneParams p = init_params(o, pri.codebooks);
  EXPECT_EQ(p.phi, 0.0);
  EXPECT_EQ(p.psi, 0.0);
  for (std::size_t j = 0; j < p.objects.size(); ++j) {
    EXPECT_EQ(p.objects[j].offset.u, 0.0);
    EXPECT_EQ(p.objects[j].heading, 0.0);
    EXPECT_DOUBLE_EQ(p.objects[j].c2d.u, o.detections[j].box.center().u);
  }
  Observations empty = o;
  empty.detections.clear();
  EXPECT_TRUE(init_params(empty, pri.codebooks).objects.empty());
}

TEST(InitParams, DistanceFollowsPixelHeight) {
  const Priors pri = default_priors();
  Observations o;
  o.intrinsics = make_intrinsics(520, 520, 320, 240);
  o.detections.push_back({0, Box2D{{300, 200}, {340, 260}}, 1.0});
  o.detections.push_back({0, Box2D{{300, 170}, {340, 290}}, 1.0});
  const SceneParams p = init_params(o, pri.codebooks);
  const double tpl_height = pri.codebooks.category_template(0).z;
  EXPECT_NEAR(p.objects[0].distance, tpl_height * 520 / 60, 1e-12);
  EXPECT_NEAR(p.objects[1].distance, 0.5 * p.objects[0].distance, 1e-12);
}

TEST(InitParams, MissingIntrinsics) {
  Observations o;
  try {
    init_params(o, default_priors().codebooks);
    FAIL() << "expected MissingIntrinsics";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingIntrinsics);
  }
}

TEST(FitScene, GroundTruthIsAFixedPoint) {
  const Priors pri = default_priors();
  for (int i = 0; i < 5; ++i) {
    const Scene s = test::synthetic_scene(72, i);
    const Observations o = observe(s);
    FitConfig cfg;
    cfg.max_iters = 200;
    const FitResult r = fit_scene(o, pri, &s, cfg);
    EXPECT_LE(r.trace.best().loss.total, 1e-6);
    const ParamVector a = flatten(r.params), b = flatten(encode_scene(s, pri.layout));
    for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_NEAR(a.values[k], b.values[k], 1e-4);
  }
}

TEST(FitScene, CooperativeRecoversJitteredScene) {
  const Priors pri = default_priors();
  for (int i = 0; i < 3; ++i) {
    const Scene s = test::synthetic_scene(73, i);
    const Observations o = observe(s);
    FitConfig cfg;
    cfg.jitter = 0.1;
    cfg.seed = derive_seed(3, i);
    const FitResult r = fit_scene(o, pri, &s, cfg);
    const Scene f = fitted(r, o, pri, &s, cfg);
    EXPECT_LT(max_center_error(f, s), 0.05);
    for (std::size_t j = 0; j < s.objects.size(); ++j) {
      EXPECT_LT(std::abs(normalize_angle(f.objects[j].box.heading - s.objects[j].box.heading)), 2.0 * kPi / 180);
    }
    EXPECT_LE(r.trace.best().loss.total, r.trace.initial_total());
  }
}

TEST(FitScene, UnsupervisedReducesProjection) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(74, 0);
  const Observations o = observe(s);
  FitConfig cfg;
  cfg.mode = FitMode::Unsupervised2d;
  const FitResult r = fit_scene(o, pri, nullptr, cfg);
  EXPECT_LT(r.trace.best().loss.proj, 0.01 * r.trace.entries.front().loss.proj);
  EXPECT_EQ(r.trace.best().loss.ggn, 0.0);
}

TEST(FitScene, DeterministicTraces) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(75, 1);
  const Observations o = observe(s);
  FitConfig cfg;
  cfg.jitter = 0.1;
  cfg.seed = 99;
  cfg.max_iters = 300;
  cfg.snapshot_interval = 50;
  const FitResult a = fit_scene(o, pri, &s, cfg);
  const FitResult b = fit_scene(o, pri, &s, cfg);
  ASSERT_EQ(a.trace.entries.size(), b.trace.entries.size());
  for (std::size_t k = 0; k < a.trace.entries.size(); ++k) {
    EXPECT_EQ(a.trace.entries[k].loss.total, b.trace.entries[k].loss.total);
    EXPECT_EQ(a.trace.entries[k].grad_norm, b.trace.entries[k].grad_norm);
  }
  EXPECT_EQ(flatten(a.params).values, flatten(b.params).values);
  EXPECT_EQ(a.trace.snapshots, b.trace.snapshots);
  EXPECT_FALSE(a.trace.snapshots.empty());
}

TEST(FitScene, TraceIsIndexedByIterationAndFinite) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(75, 2);
  FitConfig cfg;
  cfg.jitter = 0.1;
  cfg.max_iters = 400;
  const FitResult r = fit_scene(observe(s), pri, &s, cfg);
  for (std::size_t k = 0; k < r.trace.entries.size(); ++k) {
    EXPECT_EQ(r.trace.entries[k].iteration, static_cast<int>(k));
    EXPECT_TRUE(std::isfinite(r.trace.entries[k].loss.total));
  }
}

TEST(FitScene, ReducesPhysicalViolations) {
  const Priors pri = default_priors();
  for (int i = 0; i < 3; ++i) {
    const Scene s = test::synthetic_scene(76, i);
    const Observations o = observe(s);
    FitConfig cfg;
    const Objective obj = make_objective(o, pri, &s, cfg);
    SceneParams init = encode_scene(s, pri.layout);
    // Shrink the room so every object pokes through a wall.
    for (int k = 0; k < 2; ++k) init.layout.size[k] *= 0.6;
    const FitResult r = fit_scene(init, obj, cfg);
    const double initial_phy = r.trace.entries.front().loss.phy;
    EXPECT_GT(initial_phy, 0.0);
    EXPECT_LE(r.trace.best().loss.phy, initial_phy);
  }
}

TEST(FitScene, ZeroLambdaMatchesDirectOnlyFitting) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(77, 0);
  const Observations o = observe(s);
  FitConfig coop;
  coop.lambda_coop = 0.0;
  coop.jitter = 0.1;
  coop.max_iters = 300;
  FitConfig direct = coop;
  direct.mask = LossMask::direct();
  const FitResult a = fit_scene(o, pri, &s, coop);
  const FitResult b = fit_scene(o, pri, &s, direct);
  ASSERT_EQ(a.trace.entries.size(), b.trace.entries.size());
  for (std::size_t k = 0; k < a.trace.entries.size(); ++k) {
    EXPECT_EQ(a.trace.entries[k].loss.total, b.trace.entries[k].loss.total);
  }
  EXPECT_EQ(flatten(a.params).values, flatten(b.params).values);
}

TEST(FitScene, Errors) {
  const Priors pri = default_priors();
  const Scene s = test::synthetic_scene(78, 0);
  Observations o = observe(s);
  FitConfig cfg;
  try {
    fit_scene(o, pri, nullptr, cfg);
    FAIL() << "expected MissingTargets";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingTargets);
  }
  cfg.mode = FitMode::Unsupervised2d;
  o.detections.clear();
  try {
    fit_scene(o, pri, nullptr, cfg);
    FAIL() << "expected NoObservations";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoObservations);
  }
  FitConfig none;
  none.mask = LossMask::none();
  EXPECT_THROW(fit_scene(observe(s), pri, &s, none), Error);
}
