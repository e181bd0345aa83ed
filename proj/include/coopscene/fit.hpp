#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coopscene/diff.hpp"
#include "coopscene/scene_io.hpp"

namespace coopscene {

enum class FitMode { Supervised, Cooperative, Unsupervised2d };

inline const char* to_string(FitMode m) {
  switch (m) {
    case FitMode::Supervised: return "supervised";
    case FitMode::Cooperative: return "cooperative";
    case FitMode::Unsupervised2d: return "unsupervised-2d";
  }
  return "?";
}

inline FitMode parse_fit_mode(const std::string& s) {
  if (s == "supervised") return FitMode::Supervised;
  if (s == "cooperative") return FitMode::Cooperative;
  if (s == "unsupervised-2d") return FitMode::Unsupervised2d;
  throw Error(ErrorCode::InvalidArgument, "unknown fit mode '" + s + "'");
}

inline LossMask default_mask(FitMode m) {
  switch (m) {
    case FitMode::Supervised: return LossMask::direct();
    case FitMode::Cooperative: return LossMask::cooperative();
    case FitMode::Unsupervised2d: return LossMask::unsupervised_2d();
  }
  return LossMask::cooperative();
}

struct FitConfig {
  FitMode mode = FitMode::Cooperative;
  std::optional<LossMask> mask;  // overrides the mode's mask
  double lambda_coop = 1.0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  int max_iters = 5000;
  double tol = 1e-8;  // relative total-loss change over `tol_window` iterations
  int tol_window = 10;
  double size_prior_weight = 1.0;
  std::uint64_t seed = 0;
  double jitter = 0.0;  // multiplicative init noise, e.g. 0.1 for 10%
  int snapshot_interval = 0;
  // Reduce-on-plateau: when the best total has not improved for `patience`
  // iterations, restart from the best iterate with the step scale multiplied
  // by `plateau_factor`. patience 0 keeps the learning rate constant.
  int plateau_patience = 100;
  double plateau_factor = 0.5;
  double min_lr_scale = 1e-6;
  // Iterations that descend only the direct terms before the full objective
  // takes over (modes whose mask mixes direct and cooperative terms).
  int warmup_iters = 500;

  // The optimizer setting reported for network training. Direct fitting
  // crawls at this rate.
  static FitConfig network_preset() {
    FitConfig c;
    c.lr = 1e-4;
    return c;
  }

  LossMask effective_mask() const { return mask ? *mask : default_mask(mode); }

  void validate() const {
    if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "beta1 and beta2 must lie in [0, 1)");
    }
    if (!(eps_hat > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps_hat must be positive");
    if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be at least 1");
    if (tol_window < 1) throw Error(ErrorCode::InvalidArgument, "tol_window must be at least 1");
    if (lambda_coop < 0.0) throw Error(ErrorCode::InvalidArgument, "lambda_coop must be non-negative");
    if (size_prior_weight < 0.0) throw Error(ErrorCode::InvalidArgument, "size-prior weight must be non-negative");
    if (jitter < 0.0 || jitter >= 1.0) throw Error(ErrorCode::InvalidArgument, "jitter must lie in [0, 1)");
    if (snapshot_interval < 0) throw Error(ErrorCode::InvalidArgument, "snapshot interval must be non-negative");
    if (warmup_iters < 0) throw Error(ErrorCode::InvalidArgument, "warm-up iterations must be non-negative");
    if (plateau_patience < 0) throw Error(ErrorCode::InvalidArgument, "plateau patience must be non-negative");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "plateau factor must lie in (0, 1)");
    }
  }
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

inline void adam_step(std::vector<double>& x, std::span<const double> g, AdamState& s, const FitConfig& c,
                      double lr_scale = 1.0) {
  if (g.size() != x.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient of length " + std::to_string(g.size()) + " for " +
                                              std::to_string(x.size()) + " parameters");
  }
  if (s.t == 0 && s.m.empty()) {
    s.m.assign(x.size(), 0.0);
    s.v.assign(x.size(), 0.0);
  }
  if (s.m.size() != x.size() || s.v.size() != x.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match parameter count");
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  const double lr = c.lr * lr_scale;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g[i];
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + c.eps_hat);
  }
}

// ---------------------------------------------------------------------------
// Initialization

inline constexpr double kMinDistance = 0.1;
inline constexpr double kMinSize = 0.01;

// Camera level, layout at the prior (zero offset), objects on their detection rays at the
// pinhole size-distance estimate with template sizes and zero heading.
inline SceneParams init_params(const Observations& obs, const Codebooks& cb) {
  if (!obs.intrinsics) throw Error(ErrorCode::MissingIntrinsics, "observations '" + obs.id + "' carry no intrinsics");
  const double fy = (*obs.intrinsics)(1, 1);
  SceneParams p;
  p.layout.center_offset = {0.0, 0.0, 0.0};
  p.layout.size = cb.layout_sizes.templates.empty() ? Vec3{1.0, 1.0, 1.0} : cb.layout_sizes.templates.front();
  p.layout.heading = 0.0;
  for (std::size_t j = 0; j < obs.detections.size(); ++j) {
    const Detection2D& d = obs.detections[j];
    ObjectParam o;
    o.c2d = d.box.center();
    o.category = d.category;
    try {
      o.size = cb.category_template(d.category);
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
    const double h = d.box.height();
    o.distance = h > 0.0 ? std::max(kMinDistance, o.size.z * std::abs(fy) / h) : 10.0;
    p.objects.push_back(o);
  }
  return p;
}

// Multiplies every free parameter by (1 + u), u uniform in [-fraction, fraction].
inline SceneParams jitter_params(SceneParams p, std::uint64_t seed, double fraction) {
  if (fraction <= 0.0) return p;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-fraction, fraction);
  const auto j = [&](double& x) { x *= 1.0 + u(rng); };
  j(p.phi);
  j(p.psi);
  for (int k = 0; k < 3; ++k) j(p.layout.center_offset[k]);
  for (int k = 0; k < 3; ++k) j(p.layout.size[k]);
  j(p.layout.heading);
  for (auto& o : p.objects) {
    j(o.offset.u);
    j(o.offset.v);
    j(o.distance);
    for (int k = 0; k < 3; ++k) j(o.size[k]);
    j(o.heading);
  }
  return p;
}

inline void project_feasible(std::vector<double>& x, const ParamLayout& layout) {
  for (std::size_t k = 0; k < 3; ++k) {
    double& s = x[ParamLayout::kLayoutSize + k];
    s = std::max(s, kMinSize);
  }
  for (std::size_t j = 0; j < layout.objects.size(); ++j) {
    const std::size_t b = ParamLayout::object_base(j);
    x[b + ParamLayout::kObjDistance] = std::max(x[b + ParamLayout::kObjDistance], kMinDistance);
    for (std::size_t k = 0; k < 3; ++k) {
      double& s = x[b + ParamLayout::kObjSize + k];
      s = std::max(s, kMinSize);
    }
  }
}

// ---------------------------------------------------------------------------
// Fitting

struct TraceEntry {
  int iteration = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  double lr_scale = 1.0;
};

struct FitTrace {
  std::vector<TraceEntry> entries;
  std::vector<std::pair<int, std::vector<double>>> snapshots;
  int snapshot_interval = 0;
  int best_iteration = 0;
  int rejected_steps = 0;
  int plateaus = 0;
  bool converged = false;

  double initial_total() const { return entries.empty() ? 0.0 : entries.front().loss.total; }
  const TraceEntry& best() const { return entries[best_iteration]; }
};

struct FitResult {
  SceneParams params;  // best iterate
  FitTrace trace;
};

// Builds the fitting objective. Ground truth supplies the direct targets and
// 3D corners; observations supply the 2D boxes.
inline Objective make_objective(const Observations& obs, const Priors& priors, const Scene* gt, const FitConfig& cfg) {
  if (!obs.intrinsics) throw Error(ErrorCode::MissingIntrinsics, "observations '" + obs.id + "' carry no intrinsics");
  Objective obj;
  obj.camera.K = *obs.intrinsics;
  obj.camera.T = gt ? gt->camera.T : Vec3{0.0, 0.0, 0.0};
  obj.prior = priors.layout;
  obj.codebooks = priors.codebooks;
  obj.mask = cfg.effective_mask();
  obj.lambda_coop = cfg.lambda_coop;
  obj.size_prior_weight = cfg.size_prior_weight;
  for (const auto& d : obs.detections) obj.observed.push_back(d.box);
  if (obj.mask.needs_targets()) {
    if (!gt) throw Error(ErrorCode::MissingTargets, std::string(to_string(cfg.mode)) + " fitting needs a ground-truth scene");
    if (gt->objects.size() != obs.detections.size()) {
      throw Error(ErrorCode::CountMismatch, "ground truth has " + std::to_string(gt->objects.size()) +
                                                " objects, observations have " + std::to_string(obs.detections.size()));
    }
    obj.targets = encode_targets(encode_scene(*gt, priors.layout), priors.codebooks);
    for (const auto& o : gt->objects) obj.gt_corners.push_back(compose_box_corners(o.box));
  }
  return obj;
}

namespace detail {

inline bool depth_failure(const Error& e) {
  return e.code() == ErrorCode::NonPositiveDepth || e.code() == ErrorCode::InvalidDistance;
}

}  // namespace detail

inline FitResult fit_scene(const SceneParams& init, const Objective& obj, const FitConfig& cfg) {
  cfg.validate();
  if (obj.mask == LossMask::none()) throw Error(ErrorCode::NoObservations, "loss mask leaves nothing to fit");
  if (init.objects.empty() && !obj.mask.ggn) {
    throw Error(ErrorCode::NoObservations, "no detections and no direct targets");
  }
  const ParamVector pv = flatten(init);
  const ParamLayout& layout = pv.layout;
  std::vector<double> x = pv.values;
  project_feasible(x, layout);

  const auto evaluate = [&](const std::vector<double>& at) {
    try {
      return grad_total(at, layout, obj);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteObjective) throw Error(ErrorCode::Divergence, e.detail());
      throw;
    }
  };

  FitResult r;
  FitTrace& trace = r.trace;
  trace.snapshot_interval = cfg.snapshot_interval;
  const auto record = [&](int it, const GradientResult& g, double scale) {
    double gn = 0.0;
    for (double d : g.gradient) gn += d * d;
    trace.entries.push_back({it, g.loss, std::sqrt(gn), scale});
    if (cfg.snapshot_interval > 0 && it % cfg.snapshot_interval == 0) trace.snapshots.emplace_back(it, x);
  };

  // Warm-up descends only the direct terms, as if each predictor were first
  // trained on its own; the trace still records the full objective.
  LossMask direct = LossMask::none();
  direct.ggn = obj.mask.ggn;
  direct.lon = obj.mask.lon;
  bool weighted_other = false;
  for (Term t : kAllTerms) weighted_other = weighted_other || (!direct[t] && term_weight(obj, t) > 0.0);
  const bool has_warmup = cfg.warmup_iters > 0 && direct != LossMask::none() && weighted_other;
  int warmup_left = has_warmup ? cfg.warmup_iters : 0;
  const auto descent = [&](const GradientResult& g) {
    if (warmup_left == 0) return g.gradient;
    std::vector<double> d(g.gradient.size(), 0.0);
    for (Term t : kAllTerms) {
      if (!direct[t]) continue;
      const double w = term_weight(obj, t);
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += w * g.term(t)[k];
    }
    return d;
  };

  GradientResult cur = evaluate(x);
  record(0, cur, 1.0);
  std::vector<double> best_x = x;
  GradientResult best_g = cur;
  double best = cur.loss.total;
  AdamState state;
  double decay = 1.0;
  int since_best = 0;
  constexpr int kMaxRejections = 20;

  for (int it = 1; it <= cfg.max_iters && best > 0.0; ++it) {
    if (warmup_left > 0 && --warmup_left == 0) state = AdamState{};
    const std::vector<double> dir = descent(cur);
    // A step that pushes an object behind the camera is rejected and retried
    // with half the step.
    double scale = decay;
    std::vector<double> cand;
    AdamState next_state;
    GradientResult next;
    for (int attempt = 0;; ++attempt) {
      cand = x;
      next_state = state;
      adam_step(cand, dir, next_state, cfg, scale);
      project_feasible(cand, layout);
      try {
        next = evaluate(cand);
        break;
      } catch (const Error& e) {
        if (!detail::depth_failure(e)) throw;
        if (attempt + 1 >= kMaxRejections) {
          throw Error(ErrorCode::Divergence, "step rejected " + std::to_string(kMaxRejections) + " times: " + e.what());
        }
        ++trace.rejected_steps;
        scale *= 0.5;
      }
    }
    x = std::move(cand);
    state = std::move(next_state);
    cur = std::move(next);
    record(it, cur, scale);
    const bool improved = cur.loss.total < best;
    if (improved) {
      best = cur.loss.total;
      best_x = x;
      best_g = cur;
      trace.best_iteration = it;
      since_best = 0;
    }
    if (warmup_left > 0) continue;
    if (!improved && cfg.plateau_patience > 0 && ++since_best >= cfg.plateau_patience) {
      if (decay * cfg.plateau_factor < cfg.min_lr_scale) {
        trace.converged = true;
        break;
      }
      decay *= cfg.plateau_factor;
      x = best_x;
      cur = best_g;
      since_best = 0;
      ++trace.plateaus;
      continue;
    }
    if (it >= cfg.tol_window) {
      const double then = trace.entries[it - cfg.tol_window].loss.total;
      const double now = cur.loss.total;
      if (std::abs(then - now) <= cfg.tol * std::max(std::abs(then), std::numeric_limits<double>::min())) {
        trace.converged = true;
        break;
      }
    }
  }
  if (best == 0.0) trace.converged = true;
  r.params = unflatten(best_x, layout);
  return r;
}

// Runs a fit from observations. Ground truth is needed by the supervised and
// cooperative modes and, with jitter, serves as the starting point.
inline FitResult fit_scene(const Observations& obs, const Priors& priors, const Scene* gt, const FitConfig& cfg) {
  cfg.validate();
  if (cfg.mode == FitMode::Unsupervised2d && obs.detections.empty()) {
    throw Error(ErrorCode::NoObservations, "unsupervised-2d fitting needs at least one detection");
  }
  const Objective obj = make_objective(obs, priors, gt, cfg);
  SceneParams init;
  if (gt && cfg.mode != FitMode::Unsupervised2d) {
    init = jitter_params(encode_scene(*gt, priors.layout), cfg.seed, cfg.jitter);
  } else {
    init = jitter_params(init_params(obs, priors.codebooks), cfg.seed, cfg.jitter);
  }
  return fit_scene(init, obj, cfg);
}

// Scene record for fitted parameters.
inline Scene fitted_scene(const SceneParams& p, const Objective& obj, const Observations& obs) {
  Scene s;
  s.id = obs.id;
  s.camera = with_angles(obj.camera, p.phi, p.psi);
  s.image_width = obs.image_width;
  s.image_height = obs.image_height;
  const AssembledScene a = assemble_scene(p, obj.camera, obj.prior);
  s.layout = normalized(a.layout);
  for (std::size_t j = 0; j < a.objects.size(); ++j) {
    SceneObject o;
    o.category = p.objects[j].category;
    o.box = normalized(a.objects[j]);
    o.box2d = obs.detections[j].box;
    o.confidence = obs.detections[j].confidence;
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace coopscene
