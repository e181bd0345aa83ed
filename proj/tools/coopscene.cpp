// coopscene: synthesize scenes, fit them, evaluate fits, check gradients and
// project 3D scenes to 2D boxes.

#include <algorithm>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "coopscene/coopscene.hpp"
#include "run_support.hpp"

using namespace coopscene;
using namespace coopscene::tool;

namespace {

// ---------------------------------------------------------------------------
// Serialization of run products

json breakdown_to_json(const LossBreakdown& b) {
  json terms = json::object();
  for (Term t : kAllTerms) terms[term_name(t)] = b.mask[t] ? json(b[t]) : json(nullptr);
  return {{"total", b.total},
          {"terms", terms},
          {"mask", b.mask.str()},
          {"lambda_coop", b.lambda_coop},
          {"size_prior_weight", b.size_prior_weight},
          {"empty_scene", b.empty_scene}};
}

std::string breakdown_line(const LossBreakdown& b) {
  std::string s = "total " + fmt("%.6e", b.total);
  for (Term t : kAllTerms) {
    if (b.mask[t]) s += std::string("  ") + term_name(t) + " " + fmt("%.6e", b[t]);
  }
  return s;
}

json trace_to_json(const std::string& id, const FitTrace& trace, const FitConfig& cfg, const ParamLayout& layout) {
  const LossMask mask = cfg.effective_mask();
  json columns = json::array({"iteration", "total"});
  for (Term t : kAllTerms) {
    if (mask[t]) columns.push_back(term_name(t));
  }
  columns.push_back("grad_norm");
  columns.push_back("lr_scale");
  json rows = json::array();
  for (const auto& e : trace.entries) {
    json row = json::array({e.iteration, e.loss.total});
    for (Term t : kAllTerms) {
      if (mask[t]) row.push_back(e.loss[t]);
    }
    row.push_back(e.grad_norm);
    row.push_back(e.lr_scale);
    rows.push_back(std::move(row));
  }
  json snaps = json::array();
  for (const auto& [it, values] : trace.snapshots) snaps.push_back({{"iteration", it}, {"params", values}});
  json names = json::array();
  for (std::size_t i = 0; i < layout.size(); ++i) names.push_back(layout.name(i));
  return {{"schema_version", kSchemaVersion},
          {"kind", "trace"},
          {"scene_id", id},
          {"mode", to_string(cfg.mode)},
          {"mask", mask.str()},
          {"columns", columns},
          {"rows", rows},
          {"initial", breakdown_to_json(trace.entries.front().loss)},
          {"final", breakdown_to_json(trace.best().loss)},
          {"best_iteration", trace.best_iteration},
          {"converged", trace.converged},
          {"rejected_steps", trace.rejected_steps},
          {"plateaus", trace.plateaus},
          {"snapshot_interval", trace.snapshot_interval},
          {"param_names", names},
          {"snapshots", snaps}};
}

json gradreport_to_json(const std::string& id, const GradReport& r) {
  json coords = json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    coords.push_back({{"name", r.names[i]},
                      {"analytic", r.analytic[i]},
                      {"numeric", r.numeric[i]},
                      {"abs_error", r.abs_error[i]},
                      {"rel_error", r.rel_error[i]},
                      {"proximity", to_string(r.proximity[i])}});
  }
  return {{"scene_id", id},
          {"objective", r.objective},
          {"passed", r.passed},
          {"max_abs_error", r.max_abs_error},
          {"max_rel_error_smooth", r.max_rel_smooth},
          {"max_rel_error_near", r.max_rel_near},
          {"max_rel_error_flagged", r.max_rel_flagged},
          {"worst", r.worst_name()},
          {"flagged", r.flagged},
          {"near", r.near},
          {"coordinates", coords}};
}

// Reads a JSON file of kind "scene"; anything else yields nullopt.
std::optional<Scene> try_load_scene(const fs::path& p) {
  const json j = load_json(p);
  if (!j.is_object() || j.value("kind", "") != "scene") return std::nullopt;
  return scene_from_json(j);
}

std::vector<Scene> load_scene_set(const fs::path& path) {
  std::vector<Scene> out;
  for (const auto& f : collect(path, ".json")) {
    if (auto s = try_load_scene(f)) out.push_back(std::move(*s));
  }
  return out;
}

Priors priors_near(const std::optional<std::string>& explicit_path, const fs::path& input) {
  if (explicit_path) return load_priors(*explicit_path);
  const fs::path dir = fs::is_directory(input) ? input : input.parent_path();
  const fs::path sibling = dir / "priors.json";
  if (fs::exists(sibling)) return load_priors(sibling);
  return default_priors();
}

std::string stem_of(const fs::path& p, const std::string& suffix) {
  std::string name = p.filename().string();
  if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    name.resize(name.size() - suffix.size());
  }
  return name;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Settings settings;
  int count = 10;
  std::uint64_t seed = 0;
  int jobs = 1;
  int objects_min = 1;
  int objects_max = 5;
  std::string out;
};

int cmd_synth(SynthArgs& a) {
  Stopwatch sw;
  a.settings.resolve();
  if (a.count < 0) throw UsageError("--count must be non-negative");
  if (a.objects_min < 0 || a.objects_max < a.objects_min) throw UsageError("invalid object count range");
  GenConfig base;
  base.seed = a.seed;
  base.objects_min = a.objects_min;
  base.objects_max = a.objects_max;
  ensure_dir(a.out);
  Manifest m{"synth", a.settings.resolved(), a.seed, {}, a.out};
  m.write("priors.json", dump(priors_to_json(default_priors(base))));

  std::vector<std::array<std::string, 4>> written(a.count);
  parallel_for(a.count, a.jobs, [&](std::size_t i) {
    GenConfig cfg = base;
    cfg.seed = derive_seed(a.seed, i);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%04zu", i);
    const Scene s = with_observed_boxes(generate_scene(cfg, id));
    const std::string sname = std::string(id) + ".scene.json";
    const std::string oname = std::string(id) + ".obs.json";
    written[i] = {sname, m.write_output(sname, dump(scene_to_json(s))), oname,
                  m.write_output(oname, dump(observations_to_json(observe(s))))};
  });
  for (const auto& w : written) {
    m.record(w[0], w[1]);
    m.record(w[2], w[3]);
  }
  sw.lap("generate");
  log(Level::Info, "synth: wrote " + std::to_string(a.count) + " scenes to " + a.out);
  m.finish(sw);
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  Settings settings;
  std::vector<std::string> inputs;
  std::optional<std::string> gt;
  std::optional<std::string> priors;
  std::string out;
  std::string mode = "cooperative";
  std::string mask;
  double lambda_coop = 1.0;
  double lr = 0.01;
  int iters = 5000;
  std::optional<double> size_prior;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  int warmup = 500;
  int patience = 100;
  int snapshot = 0;
  int jobs = 1;
  bool network_lr = false;
};

int cmd_fit(FitArgs& a) {
  Stopwatch sw;
  a.settings.resolve();
  FitConfig cfg;
  try {
    cfg.mode = parse_fit_mode(a.mode);
    if (!a.mask.empty()) cfg.mask = default_mask(cfg.mode).edited(a.mask);
  } catch (const Error& e) {
    throw UsageError(e.detail());
  }
  if (cfg.mode == FitMode::Unsupervised2d && !a.size_prior) {
    throw UsageError("--mode unsupervised-2d needs --size-prior <weight> to pin object sizes");
  }
  cfg.lambda_coop = a.lambda_coop;
  cfg.lr = a.network_lr ? FitConfig::network_preset().lr : a.lr;
  cfg.max_iters = a.iters;
  cfg.size_prior_weight = a.size_prior.value_or(cfg.size_prior_weight);
  cfg.jitter = a.jitter;
  cfg.warmup_iters = a.warmup;
  cfg.plateau_patience = a.patience;
  cfg.snapshot_interval = a.snapshot;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.detail());
  }

  std::vector<fs::path> files;
  for (const auto& in : a.inputs) {
    for (auto& f : collect(in, ".obs.json")) files.push_back(f);
  }
  if (files.empty()) throw UsageError("no observation files (*.obs.json) among the inputs");
  const bool needs_gt = cfg.effective_mask().needs_targets();

  // Ground truth for each observation file: --gt (file or directory) or the
  // sibling <id>.scene.json.
  std::vector<std::optional<fs::path>> gt_paths(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = stem_of(files[i], ".obs.json");
    fs::path cand;
    if (a.gt) {
      cand = fs::is_directory(*a.gt) ? fs::path(*a.gt) / (stem + ".scene.json") : fs::path(*a.gt);
    } else {
      cand = files[i].parent_path() / (stem + ".scene.json");
    }
    if (fs::exists(cand)) gt_paths[i] = cand;
    if (needs_gt && !gt_paths[i]) {
      throw UsageError(std::string(to_string(cfg.mode)) + " fitting needs ground truth; no " + cand.string());
    }
  }
  const Priors priors = priors_near(a.priors, files.front());
  ensure_dir(a.out);
  Manifest m{"fit", a.settings.resolved(), a.seed, {}, a.out};
  for (const auto& f : files) m.inputs.push_back(f.string());
  sw.lap("load");

  struct Outcome {
    std::string id;
    LossBreakdown initial, final;
    std::size_t iterations = 0;
    bool converged = false;
    std::array<std::string, 4> files;
  };
  std::vector<Outcome> outcomes(files.size());
  parallel_for(files.size(), a.jobs, [&](std::size_t i) {
    const Stopwatch scene_sw;
    const Observations obs = load_observations(files[i]);
    // Unsupervised-2d never sees ground truth, even when it is on disk.
    std::optional<Scene> gt;
    if (gt_paths[i] && cfg.mode != FitMode::Unsupervised2d) gt = load_scene(*gt_paths[i]);
    FitConfig c = cfg;
    c.seed = derive_seed(a.seed, i);
    const Scene* gtp = gt ? &*gt : nullptr;
    const FitResult r = fit_scene(obs, priors, gtp, c);
    const Objective obj = make_objective(obs, priors, gtp, c);
    const Scene fitted = fitted_scene(r.params, obj, obs);
    Outcome& o = outcomes[i];
    o.id = obs.id;
    o.initial = r.trace.entries.front().loss;
    o.final = r.trace.best().loss;
    o.iterations = r.trace.entries.size() - 1;
    o.converged = r.trace.converged;
    const std::string fname = obs.id + ".fit.json";
    const std::string tname = obs.id + ".trace.json";
    o.files = {fname, m.write_output(fname, dump(scene_to_json(fitted))), tname,
               m.write_output(tname, dump(trace_to_json(obs.id, r.trace, c, flatten(r.params).layout)))};
    log(Level::Info, "fit " + obs.id + ": " + fmt("%.4e", o.initial.total) + " -> " + fmt("%.4e", o.final.total) +
                         " in " + std::to_string(o.iterations) + " iterations (" + fmt("%.3f", scene_sw.total()) +
                         "s)");
  });
  sw.lap("fit");
  for (const auto& o : outcomes) {
    m.record(o.files[0], o.files[1]);
    m.record(o.files[2], o.files[3]);
    std::cout << o.id << "  " << breakdown_line(o.final) << '\n';
  }
  m.finish(sw);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Settings settings;
  std::string gt;
  std::string pred;
  std::optional<std::string> priors;
  std::optional<std::string> out;
  double iou_thresh = 0.15;
  double resolution = 0.1;
};

int cmd_eval(EvalArgs& a) {
  Stopwatch sw;
  a.settings.resolve();
  if (!(a.iou_thresh > 0.0 && a.iou_thresh <= 1.0)) throw UsageError("--iou-thresh must lie in (0, 1]");
  if (!(a.resolution > 0.0)) throw UsageError("--resolution must be positive");
  std::vector<Scene> gt = load_scene_set(a.gt);
  std::vector<Scene> pred = load_scene_set(a.pred);
  std::map<std::string, std::size_t> pred_index;
  for (std::size_t i = 0; i < pred.size(); ++i) pred_index[pred[i].id] = i;
  std::set<std::string> gt_ids;
  for (const auto& s : gt) gt_ids.insert(s.id);
  std::vector<std::string> missing, extra;
  for (const auto& s : gt) {
    if (!pred_index.count(s.id)) missing.push_back(s.id);
  }
  for (const auto& s : pred) {
    if (!gt_ids.count(s.id)) extra.push_back(s.id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "scene ids do not align;";
    if (!missing.empty()) {
      msg += " missing predictions:";
      for (const auto& id : missing) msg += " " + id;
    }
    if (!extra.empty()) {
      msg += (missing.empty() ? "" : ";") + std::string(" predictions without ground truth:");
      for (const auto& id : extra) msg += " " + id;
    }
    throw Error(ErrorCode::LengthMismatch, msg);
  }
  std::sort(gt.begin(), gt.end(), [](const Scene& x, const Scene& y) { return x.id < y.id; });
  std::vector<Scene> aligned;
  for (const auto& s : gt) aligned.push_back(pred[pred_index[s.id]]);
  sw.lap("load");

  const EvalReport report = evaluate(gt, aligned, {a.iou_thresh, a.resolution});
  sw.lap("evaluate");
  std::vector<std::string> names;
  if (a.priors) {
    names = load_priors(*a.priors).categories;
  } else if (fs::is_directory(a.gt) && fs::exists(fs::path(a.gt) / "priors.json")) {
    names = load_priors(fs::path(a.gt) / "priors.json").categories;
  }
  const std::string text = report_to_text(report, names);
  std::cout << text;
  Manifest m{"eval", a.settings.resolved(), 0, {a.gt, a.pred}, a.out ? fs::path(*a.out) : fs::path()};
  if (a.out) {
    ensure_dir(*a.out);
    m.write("report.json", dump(report_to_json(report, names)));
    m.write("report.txt", text);
  }
  m.finish(sw);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  Settings settings;
  std::vector<std::string> inputs;
  std::optional<std::string> priors;
  std::optional<std::string> out;
  int count = 20;
  std::uint64_t seed = 0;
  std::string mask = "+size-prior";
  double lambda_coop = 1.0;
  double jitter = 0.1;
  double eps = 1e-5;
  double tol = 1e-4;
  double tol_near = 1e-3;
  int jobs = 1;
};

int cmd_gradcheck(GradcheckArgs& a) {
  Stopwatch sw;
  a.settings.resolve();
  LossMask mask;
  try {
    mask = LossMask::cooperative().edited(a.mask);
  } catch (const Error& e) {
    throw UsageError(e.detail());
  }
  std::vector<Scene> scenes;
  Priors priors = default_priors();
  if (a.inputs.empty()) {
    GenConfig cfg;
    priors = default_priors(cfg);
    for (int i = 0; i < a.count; ++i) {
      cfg.seed = derive_seed(a.seed, static_cast<std::uint64_t>(i));
      char id[32];
      std::snprintf(id, sizeof id, "scene_%04d", i);
      scenes.push_back(with_observed_boxes(generate_scene(cfg, id)));
    }
  } else {
    for (const auto& in : a.inputs) {
      for (auto& s : load_scene_set(in)) scenes.push_back(std::move(s));
    }
    priors = priors_near(a.priors, a.inputs.front());
  }
  sw.lap("load");

  GradcheckOptions opt;
  opt.eps = a.eps;
  opt.tol_smooth = a.tol;
  opt.tol_near = a.tol_near;
  std::vector<GradReport> reports(scenes.size());
  parallel_for(scenes.size(), a.jobs, [&](std::size_t i) {
    const Scene& s = scenes[i];
    FitConfig fc;
    fc.mask = mask;
    fc.lambda_coop = a.lambda_coop;
    const Observations obs = observe(s);
    const Objective obj = make_objective(obs, priors, &s, fc);
    const SceneParams p = jitter_params(encode_scene(s, priors.layout), derive_seed(a.seed ^ 0x5eedULL, i), a.jitter);
    reports[i] = gradcheck(flatten(p), obj, opt);
  });
  sw.lap("check");

  json all = json::array();
  bool ok = true;
  double worst_smooth = 0.0, worst_near = 0.0;
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const GradReport& r = reports[i];
    ok = ok && r.passed;
    worst_smooth = std::max(worst_smooth, r.max_rel_smooth);
    worst_near = std::max(worst_near, r.max_rel_near);
    flagged += r.flagged;
    all.push_back(gradreport_to_json(scenes[i].id, r));
    if (!r.passed) {
      log(Level::Info, "gradcheck " + scenes[i].id + ": FAILED at " + r.worst_name() + " (rel " +
                           fmt("%.3e", r.rel_error[r.worst]) + ")");
    }
  }
  const json summary = {{"schema_version", kSchemaVersion},
                        {"kind", "gradcheck"},
                        {"mask", mask.str()},
                        {"eps", a.eps},
                        {"tol_smooth", a.tol},
                        {"tol_near", a.tol_near},
                        {"passed", ok},
                        {"scenes", scenes.size()},
                        {"max_rel_error_smooth", worst_smooth},
                        {"max_rel_error_near", worst_near},
                        {"flagged_coordinates", flagged},
                        {"reports", all}};
  std::cout << "gradcheck: " << scenes.size() << " scenes, max rel error smooth " << fmt("%.3e", worst_smooth)
            << ", near " << fmt("%.3e", worst_near) << ", " << flagged << " kink-adjacent coordinates flagged: "
            << (ok ? "PASS" : "FAIL") << '\n';
  Manifest m{"gradcheck", a.settings.resolved(), a.seed, a.inputs, a.out ? fs::path(*a.out) : fs::path()};
  if (a.out) {
    ensure_dir(*a.out);
    m.write("gradcheck.json", dump(summary));
  }
  m.finish(sw);
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// project

struct ProjectArgs {
  Settings settings;
  std::string input;
  std::optional<std::string> out;
};

int cmd_project(ProjectArgs& a) {
  Stopwatch sw;
  a.settings.resolve();
  const auto scene = try_load_scene(a.input);
  if (!scene) throw UsageError("'" + a.input + "' is not a scene file");
  json boxes = json::array();
  for (std::size_t j = 0; j < scene->objects.size(); ++j) {
    Box2D b;
    try {
      b = project_box_to_2d(scene->camera, scene->objects[j].box);
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
    boxes.push_back({{"object", j}, {"category", scene->objects[j].category}, {"box2d", detail::box2(b)}});
  }
  const json result = {{"schema_version", kSchemaVersion},
                       {"kind", "projection"},
                       {"scene_id", scene->id},
                       {"boxes", boxes}};
  Manifest m{"project", a.settings.resolved(), 0, {a.input}, a.out ? fs::path(*a.out) : fs::path()};
  if (a.out) {
    ensure_dir(*a.out);
    m.write(scene->id + ".proj.json", dump(result));
  } else {
    std::cout << dump(result);
  }
  sw.lap("project");
  m.finish(sw);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holistic indoor scene fitting from 2D boxes: synthesize, fit, evaluate, gradcheck, project"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "coopscene 0.1.0");

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "Generate synthetic scenes with observations");
  sa.settings.add(synth, "count", sa.count, "Number of scenes");
  sa.settings.add(synth, "seed", sa.seed, "Base seed; scene i uses a seed derived from it");
  sa.settings.add(synth, "jobs", sa.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sa.settings.add(synth, "objects-min", sa.objects_min, "Minimum objects per scene");
  sa.settings.add(synth, "objects-max", sa.objects_max, "Maximum objects per scene");
  sa.settings.add_config_flag(synth);
  synth->add_option("--out", sa.out, "Output directory")->required();

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "Fit scene parameters to observations");
  fit->add_option("inputs", fa.inputs, "Observation files (*.obs.json) or directories")->required();
  fit->add_option("--gt", fa.gt, "Ground-truth scene file or directory (default: sibling <id>.scene.json)");
  fit->add_option("--priors", fa.priors, "Priors file (default: sibling priors.json)");
  fit->add_option("--out", fa.out, "Output directory")->required();
  fa.settings.add(fit, "mode", fa.mode, "supervised | cooperative | unsupervised-2d")
      ->check(CLI::IsMember({"supervised", "cooperative", "unsupervised-2d"}));
  fa.settings.add(fit, "mask", fa.mask, "Loss-term edits on the mode's mask, e.g. no-phy or none,proj");
  fa.settings.add(fit, "lambda-coop", fa.lambda_coop, "Weight of the cooperative terms")
      ->check(CLI::NonNegativeNumber);
  fa.settings.add(fit, "lr", fa.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  fa.settings.add(fit, "iters", fa.iters, "Maximum iterations")->check(CLI::PositiveNumber);
  fa.settings.add_optional(fit, "size-prior", fa.size_prior, "Weight of the size-prior term")
      ->check(CLI::NonNegativeNumber);
  fa.settings.add(fit, "jitter", fa.jitter, "Multiplicative init noise (0.1 = 10%)")->check(CLI::Range(0.0, 0.99));
  fa.settings.add(fit, "seed", fa.seed, "Seed for init jitter");
  fa.settings.add(fit, "warmup", fa.warmup, "Direct-loss warm-up iterations")->check(CLI::NonNegativeNumber);
  fa.settings.add(fit, "patience", fa.patience, "Plateau patience before halving the step (0 = off)")
      ->check(CLI::NonNegativeNumber);
  fa.settings.add(fit, "snapshot", fa.snapshot, "Parameter snapshot interval in the trace (0 = none)")
      ->check(CLI::NonNegativeNumber);
  fa.settings.add(fit, "jobs", fa.jobs, "Worker threads")->check(CLI::PositiveNumber);
  fa.settings.add_flag(fit, "network-lr", fa.network_lr, "Use the network-training learning rate 1e-4");
  fa.settings.add_config_flag(fit);

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate predicted scenes against ground truth");
  eval->add_option("--gt", ea.gt, "Ground-truth scene file or directory")->required();
  eval->add_option("--pred", ea.pred, "Predicted scene file or directory")->required();
  eval->add_option("--priors", ea.priors, "Priors file for category names");
  eval->add_option("--out", ea.out, "Output directory for report.json and report.txt");
  ea.settings.add(eval, "iou-thresh", ea.iou_thresh, "3D IoU matching threshold");
  ea.settings.add(eval, "resolution", ea.resolution, "Free-space voxel size in meters");
  ea.settings.add_config_flag(eval);

  GradcheckArgs ga;
  CLI::App* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("inputs", ga.inputs, "Scene files or directories (default: random scenes)");
  gc->add_option("--priors", ga.priors, "Priors file");
  gc->add_option("--out", ga.out, "Output directory for gradcheck.json");
  ga.settings.add(gc, "count", ga.count, "Random scenes when no inputs are given")->check(CLI::NonNegativeNumber);
  ga.settings.add(gc, "seed", ga.seed, "Seed for random scenes and evaluation points");
  ga.settings.add(gc, "mask", ga.mask, "Loss-term edits on the full cooperative mask");
  ga.settings.add(gc, "lambda-coop", ga.lambda_coop, "Weight of the cooperative terms")
      ->check(CLI::NonNegativeNumber);
  ga.settings.add(gc, "jitter", ga.jitter, "Distance of the evaluation point from ground truth")
      ->check(CLI::Range(0.0, 0.99));
  ga.settings.add(gc, "eps", ga.eps, "Finite-difference step")->check(CLI::PositiveNumber);
  ga.settings.add(gc, "tol", ga.tol, "Relative tolerance on smooth coordinates")->check(CLI::PositiveNumber);
  ga.settings.add(gc, "tol-near", ga.tol_near, "Relative tolerance near kinks")->check(CLI::PositiveNumber);
  ga.settings.add(gc, "jobs", ga.jobs, "Worker threads")->check(CLI::PositiveNumber);
  ga.settings.add_config_flag(gc);

  ProjectArgs pa;
  CLI::App* project = app.add_subcommand("project", "Project a scene's 3D boxes to 2D boxes");
  project->add_option("scene", pa.input, "Scene file")->required()->check(CLI::ExistingFile);
  project->add_option("--out", pa.out, "Output directory (default: print to stdout)");
  pa.settings.add_config_flag(project);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa);
    if (fit->parsed()) return cmd_fit(fa);
    if (eval->parsed()) return cmd_eval(ea);
    if (gc->parsed()) return cmd_gradcheck(ga);
    if (project->parsed()) return cmd_project(pa);
  } catch (const UsageError& e) {
    std::cerr << "coopscene: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "coopscene: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "coopscene: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
