#include <gtest/gtest.h>

#include "cli_support.hpp"

using namespace coopscene;
using namespace coopscene::test;

namespace {

std::size_t count_suffix(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    n += name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  }
  return n;
}

Scene one_object_scene(const std::string& id, int category, double x) {
  Scene s;
  s.id = id;
  s.camera.K = make_intrinsics(520, 520, 320, 240);
  s.camera.phi = 0.2;
  s.layout = {{0, 3, 0}, {6, 6, 3}, 0.0};
  s.objects.push_back({category, OrientedBox3D{{x, 3.5, -1.0}, {0.8, 0.8, 0.9}, 0.2}, std::nullopt, 1.0});
  return s;
}

}  // namespace

TEST(CliSynth, WritesScenesObservationsAndManifest) {
  TempDir d("synth");
  const auto r = run_cli("synth --count 10 --seed 3 --out " + quoted(d.path));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_suffix(d.path, ".scene.json"), 10u);
  EXPECT_EQ(count_suffix(d.path, ".obs.json"), 10u);
  EXPECT_TRUE(fs::exists(d / "priors.json"));
  const json m = load_json(d / "manifest.json");
  EXPECT_EQ(m["subcommand"], "synth");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["checksums"].size(), 21u);
  const std::string text = read_text(d / "scene_0004.scene.json");
  // 64-bit FNV-1a, spelled out here rather than borrowed from the tool.
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  EXPECT_EQ(m["checksums"]["scene_0004.scene.json"], std::string("fnv1a64:") + hex);
}

TEST(CliSynth, SameFlagsSameBytes) {
  TempDir a("synth_a"), b("synth_b");
  ASSERT_EQ(run_cli("synth --count 5 --seed 11 --out " + quoted(a.path)).code, 0);
  ASSERT_EQ(run_cli("synth --count 5 --seed 11 --out " + quoted(b.path)).code, 0);
  auto ta = read_tree(a.path), tb = read_tree(b.path);
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, text] : ta) {
    if (name == "manifest.json") continue;
    EXPECT_EQ(text, tb.at(name)) << name;
  }
}

TEST(CliSynth, ZeroScenes) {
  TempDir d("synth_zero");
  const auto r = run_cli("synth --count 0 --out " + quoted(d.path));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_suffix(d.path, ".scene.json"), 0u);
}

TEST(CliFit, CooperativeFitLowersLoss) {
  TempDir d("fit");
  ASSERT_EQ(run_cli("synth --count 2 --seed 5 --out " + quoted(d / "data")).code, 0);
  const auto r = run_cli("fit " + quoted(d / "data") + " --jitter 0.1 --iters 400 --out " + quoted(d / "fit"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* id : {"scene_0000", "scene_0001"}) {
    const json t = load_json(d / "fit" / (std::string(id) + ".trace.json"));
    EXPECT_LT(t["final"]["total"].get<double>(), t["initial"]["total"].get<double>());
    EXPECT_EQ(t["mode"], "cooperative");
    const Scene fitted = load_scene(d / "fit" / (std::string(id) + ".fit.json"));
    EXPECT_EQ(fitted.id, id);
  }
}

TEST(CliFit, UnsupervisedNeedsSizePrior) {
  TempDir d("fit_unsup");
  ASSERT_EQ(run_cli("synth --count 1 --out " + quoted(d / "data")).code, 0);
  const auto r = run_cli("fit " + quoted(d / "data") + " --mode unsupervised-2d --out " + quoted(d / "fit"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--size-prior"), std::string::npos) << r.output;
  const auto ok = run_cli("fit " + quoted(d / "data") +
                          " --mode unsupervised-2d --size-prior 0.1 --iters 50 --out " + quoted(d / "fit"));
  EXPECT_EQ(ok.code, 0) << ok.output;
}

TEST(CliFit, MaskedTermHasNoTraceColumn) {
  TempDir d("fit_mask");
  ASSERT_EQ(run_cli("synth --count 1 --out " + quoted(d / "data")).code, 0);
  const auto r = run_cli("fit " + quoted(d / "data") + " --mask no-phy --iters 20 --out " + quoted(d / "fit"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json t = load_json(d / "fit" / "scene_0000.trace.json");
  bool has_phy = false, has_proj = false;
  for (const auto& c : t["columns"]) has_phy |= c == "phy", has_proj |= c == "proj";
  EXPECT_FALSE(has_phy);
  EXPECT_TRUE(has_proj);
  EXPECT_TRUE(t["final"]["terms"]["phy"].is_null());
}

TEST(CliFit, BadFlags) {
  TempDir d("fit_bad");
  EXPECT_EQ(run_cli("fit " + quoted(d.path) + " --no-such-flag --out " + quoted(d / "o")).code, 2);
  EXPECT_EQ(run_cli("fit " + quoted(d.path) + " --out " + quoted(d / "o")).code, 2);  // no observations
  EXPECT_EQ(run_cli("fit " + quoted(d.path) + " --mask bogus --out " + quoted(d / "o")).code, 2);
  EXPECT_EQ(run_cli("").code, 2);
}

TEST(CliEval, GroundTruthAgainstItself) {
  TempDir d("eval_self");
  ASSERT_EQ(run_cli("synth --count 4 --seed 8 --out " + quoted(d / "data")).code, 0);
  const auto r = run_cli("eval --gt " + quoted(d / "data") + " --pred " + quoted(d / "data") + " --out " +
                         quoted(d / "report"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json j = load_json(d / "report" / "report.json");
  EXPECT_EQ(j["map"], 1.0);
  EXPECT_EQ(j["free_space_iou"], 1.0);
  EXPECT_EQ(j["holistic"]["P_g"], 1.0);
  EXPECT_EQ(j["holistic"]["R_g"], 1.0);
  EXPECT_EQ(j["holistic"]["R_r"], 1.0);
  EXPECT_EQ(j["pose_mae_deg"]["phi"], 0.0);
  EXPECT_TRUE(fs::exists(d / "report" / "report.txt"));
}

TEST(CliEval, HandBuiltCorpus) {
  // Scene a: exact. Scene b: right place, wrong class. Scene c: nothing predicted.
  TempDir d("eval_hand");
  fs::create_directories(d / "gt");
  fs::create_directories(d / "pred");
  const Scene ga = one_object_scene("a", 0, 0.0), gb = one_object_scene("b", 0, 0.5), gc = one_object_scene("c", 0, -0.5);
  Scene pb = gb, pc = gc;
  pb.objects[0].category = 1;
  pc.objects.clear();
  for (const Scene* s : {&ga, &gb, &gc}) save_scene(*s, d / "gt" / (s->id + ".scene.json"));
  save_scene(ga, d / "pred" / "a.scene.json");
  save_scene(pb, d / "pred" / "b.scene.json");
  save_scene(pc, d / "pred" / "c.scene.json");
  const auto r = run_cli("eval --gt " + quoted(d / "gt") + " --pred " + quoted(d / "pred") + " --out " +
                         quoted(d / "report"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json j = load_json(d / "report" / "report.json");
  // Category 0: one of three ground-truth boxes found, at precision 1.
  EXPECT_DOUBLE_EQ(j["ap"]["0"].get<double>(), 1.0 / 3.0);
  EXPECT_TRUE(j["ap"]["1"].is_null());
  EXPECT_DOUBLE_EQ(j["map"].get<double>(), 1.0 / 3.0);
  EXPECT_EQ(j["holistic"]["P_g"], 1.0);
  EXPECT_DOUBLE_EQ(j["holistic"]["R_g"].get<double>(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(j["holistic"]["R_r"].get<double>(), 1.0 / 3.0);
}

TEST(CliEval, EmptyPredictions) {
  TempDir d("eval_empty");
  ASSERT_EQ(run_cli("synth --count 2 --out " + quoted(d / "gt")).code, 0);
  fs::create_directories(d / "pred");
  for (const char* id : {"scene_0000", "scene_0001"}) {
    Scene s = load_scene(d / "gt" / (std::string(id) + ".scene.json"));
    s.objects.clear();
    save_scene(s, d / "pred" / (std::string(id) + ".scene.json"));
  }
  const auto r = run_cli("eval --gt " + quoted(d / "gt") + " --pred " + quoted(d / "pred") + " --out " +
                         quoted(d / "report"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json j = load_json(d / "report" / "report.json");
  EXPECT_EQ(j["map"], 0.0);
  EXPECT_TRUE(j["holistic"]["P_g"].is_null());
  EXPECT_EQ(j["holistic"]["R_g"], 0.0);
}

TEST(CliEval, IdMismatch) {
  TempDir d("eval_ids");
  ASSERT_EQ(run_cli("synth --count 2 --out " + quoted(d / "gt")).code, 0);
  fs::create_directories(d / "pred");
  Scene s = load_scene(d / "gt" / "scene_0000.scene.json");
  save_scene(s, d / "pred" / "scene_0000.scene.json");
  s.id = "stranger";
  save_scene(s, d / "pred" / "stranger.scene.json");
  const auto r = run_cli("eval --gt " + quoted(d / "gt") + " --pred " + quoted(d / "pred"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("scene_0001"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("stranger"), std::string::npos) << r.output;
}

TEST(CliGradcheck, RandomScenesPass) {
  TempDir d("gradcheck");
  const auto r = run_cli("gradcheck --count 20 --seed 1 --out " + quoted(d.path));
  EXPECT_EQ(r.code, 0) << r.output;
  const json j = load_json(d / "gradcheck.json");
  EXPECT_EQ(j["passed"], true);
  EXPECT_EQ(j["scenes"], 20);
  EXPECT_LT(j["max_rel_error_smooth"].get<double>(), 1e-4);
}

TEST(CliProject, ReproducesStoredBoxes) {
  TempDir d("project");
  ASSERT_EQ(run_cli("synth --count 3 --seed 4 --out " + quoted(d / "data")).code, 0);
  for (const char* id : {"scene_0000", "scene_0001", "scene_0002"}) {
    const fs::path p = d / "data" / (std::string(id) + ".scene.json");
    const auto r = run_cli("project " + quoted(p));
    ASSERT_EQ(r.code, 0) << r.output;
    const json j = json::parse(r.output);
    const Scene s = load_scene(p);
    ASSERT_EQ(j["boxes"].size(), s.objects.size());
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      const auto& b = j["boxes"][k]["box2d"];
      EXPECT_NEAR(b["min"][0].get<double>(), s.objects[k].box2d->min.u, 1e-9);
      EXPECT_NEAR(b["min"][1].get<double>(), s.objects[k].box2d->min.v, 1e-9);
      EXPECT_NEAR(b["max"][0].get<double>(), s.objects[k].box2d->max.u, 1e-9);
      EXPECT_NEAR(b["max"][1].get<double>(), s.objects[k].box2d->max.v, 1e-9);
    }
  }
}

TEST(CliProject, BehindCameraNamesObject) {
  TempDir d("project_behind");
  Scene s = one_object_scene("behind", 0, 0.0);
  s.objects.push_back({2, OrientedBox3D{{0, -2, 0}, {1, 1, 1}, 0.0}, std::nullopt, 1.0});
  save_scene(s, d / "behind.scene.json");
  const auto r = run_cli("project " + quoted(d / "behind.scene.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("object 1"), std::string::npos) << r.output;
}

TEST(CliConfig, FlagsOverrideConfigFile) {
  TempDir d("config");
  write_text_atomic(d / "cfg.json", R"({"count": 3, "seed": 21})");
  ASSERT_EQ(run_cli("synth --config " + quoted(d / "cfg.json") + " --out " + quoted(d / "a")).code, 0);
  EXPECT_EQ(count_suffix(d / "a", ".scene.json"), 3u);
  ASSERT_EQ(run_cli("synth --config " + quoted(d / "cfg.json") + " --count 2 --out " + quoted(d / "b")).code, 0);
  EXPECT_EQ(count_suffix(d / "b", ".scene.json"), 2u);
  EXPECT_EQ(read_text(d / "a" / "scene_0001.scene.json"), read_text(d / "b" / "scene_0001.scene.json"));
  // A manifest replays the run that wrote it.
  ASSERT_EQ(run_cli("synth --config " + quoted(d / "b" / "manifest.json") + " --out " + quoted(d / "c")).code, 0);
  EXPECT_EQ(count_suffix(d / "c", ".scene.json"), 2u);
  EXPECT_EQ(read_text(d / "b" / "scene_0000.scene.json"), read_text(d / "c" / "scene_0000.scene.json"));
  write_text_atomic(d / "bad.json", R"({"cuont": 3})");
  EXPECT_EQ(run_cli("synth --config " + quoted(d / "bad.json") + " --out " + quoted(d / "e")).code, 2);
}
