#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "coopscene/losses.hpp"

namespace coopscene {

// ---------------------------------------------------------------------------
// Flat parameter vector
//
//   [0]      phi
//   [1]      psi
//   [2..4]   layout center offset
//   [5..7]   layout size
//   [8]      layout heading
//   [9+7j..] object j: offset u, offset v, distance, size x, y, z, heading

struct ParamLayout {
  static constexpr std::size_t kPhi = 0;
  static constexpr std::size_t kPsi = 1;
  static constexpr std::size_t kLayoutOffset = 2;
  static constexpr std::size_t kLayoutSize = 5;
  static constexpr std::size_t kLayoutHeading = 8;
  static constexpr std::size_t kGlobalCount = 9;
  static constexpr std::size_t kPerObject = 7;
  static constexpr std::size_t kObjOffset = 0;
  static constexpr std::size_t kObjDistance = 2;
  static constexpr std::size_t kObjSize = 3;
  static constexpr std::size_t kObjHeading = 6;

  struct Fixed {
    Vec2 c2d;
    int category = 0;
  };
  std::vector<Fixed> objects;  // data held constant during optimization

  std::size_t size() const { return kGlobalCount + kPerObject * objects.size(); }
  static std::size_t object_base(std::size_t j) { return kGlobalCount + kPerObject * j; }

  std::string name(std::size_t i) const {
    static const char* global[] = {"phi", "psi", "layout.offset.x", "layout.offset.y", "layout.offset.z",
                                   "layout.size.x", "layout.size.y", "layout.size.z", "layout.heading"};
    static const char* local[] = {"offset.u", "offset.v", "distance", "size.x", "size.y", "size.z", "heading"};
    if (i < kGlobalCount) return global[i];
    const std::size_t j = (i - kGlobalCount) / kPerObject;
    return "object[" + std::to_string(j) + "]." + local[(i - kGlobalCount) % kPerObject];
  }
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;
};

inline ParamVector flatten(const SceneParams& p) {
  ParamVector out;
  auto& v = out.values;
  v.reserve(ParamLayout::kGlobalCount + ParamLayout::kPerObject * p.objects.size());
  v.insert(v.end(), {p.phi, p.psi, p.layout.center_offset.x, p.layout.center_offset.y, p.layout.center_offset.z,
                     p.layout.size.x, p.layout.size.y, p.layout.size.z, p.layout.heading});
  for (const auto& o : p.objects) {
    v.insert(v.end(), {o.offset.u, o.offset.v, o.distance, o.size.x, o.size.y, o.size.z, o.heading});
    out.layout.objects.push_back({o.c2d, o.category});
  }
  return out;
}

inline SceneParams unflatten(std::span<const double> v, const ParamLayout& layout) {
  if (v.size() != layout.size()) {
    throw Error(ErrorCode::LayoutMismatch, "vector of length " + std::to_string(v.size()) + " for layout of " +
                                               std::to_string(layout.size()));
  }
  SceneParams p;
  p.phi = v[0];
  p.psi = v[1];
  p.layout.center_offset = {v[2], v[3], v[4]};
  p.layout.size = {v[5], v[6], v[7]};
  p.layout.heading = v[8];
  for (std::size_t j = 0; j < layout.objects.size(); ++j) {
    const double* o = v.data() + ParamLayout::object_base(j);
    ObjectParam op;
    op.c2d = layout.objects[j].c2d;
    op.category = layout.objects[j].category;
    op.offset = {o[0], o[1]};
    op.distance = o[2];
    op.size = {o[3], o[4], o[5]};
    op.heading = o[6];
    p.objects.push_back(op);
  }
  return p;
}

inline SceneParams unflatten(const ParamVector& v) { return unflatten(v.values, v.layout); }

// ---------------------------------------------------------------------------
// Exact gradients
//
// Every object term depends on at most 16 coordinates (camera 2, layout 7,
// own 7), and the direct global term on the first 9. Each piece is evaluated
// once with a fixed-size dual number and scattered into the full gradient.

struct GradientResult {
  LossBreakdown loss;
  std::vector<double> gradient;
  std::array<std::vector<double>, 6> term_gradients;  // indexed like kAllTerms, unweighted

  const std::vector<double>& term(Term t) const { return term_gradients[static_cast<std::size_t>(t)]; }
};

namespace detail {

using GlobalDual = Dual<9>;
using ObjectDual = Dual<16>;

template <class D>
LayoutParamT<D> seed_layout(std::span<const double> v) {
  LayoutParamT<D> l;
  l.center_offset = {D::variable(v[2], 2), D::variable(v[3], 3), D::variable(v[4], 4)};
  l.size = {D::variable(v[5], 5), D::variable(v[6], 6), D::variable(v[7], 7)};
  l.heading = D::variable(v[8], 8);
  return l;
}

inline ObjectParamT<ObjectDual> seed_object(std::span<const double> v, const ParamLayout::Fixed& fixed,
                                            std::size_t j) {
  const double* o = v.data() + ParamLayout::object_base(j);
  constexpr std::size_t b = ParamLayout::kGlobalCount;
  ObjectParamT<ObjectDual> p;
  p.c2d = fixed.c2d;
  p.category = fixed.category;
  p.offset = {ObjectDual::variable(o[0], b + 0), ObjectDual::variable(o[1], b + 1)};
  p.distance = ObjectDual::variable(o[2], b + 2);
  p.size = {ObjectDual::variable(o[3], b + 3), ObjectDual::variable(o[4], b + 4), ObjectDual::variable(o[5], b + 5)};
  p.heading = ObjectDual::variable(o[6], b + 6);
  return p;
}

inline void scatter_object(std::vector<double>& g, const ObjectDual& x, std::size_t j, double scale) {
  for (std::size_t k = 0; k < ParamLayout::kGlobalCount; ++k) g[k] += scale * x.d[k];
  const std::size_t base = ParamLayout::object_base(j);
  for (std::size_t k = 0; k < ParamLayout::kPerObject; ++k) g[base + k] += scale * x.d[ParamLayout::kGlobalCount + k];
}

}  // namespace detail

inline GradientResult grad_total(std::span<const double> v, const ParamLayout& layout, const Objective& obj) {
  using detail::GlobalDual;
  using detail::ObjectDual;
  if (v.size() != layout.size()) {
    throw Error(ErrorCode::LayoutMismatch, "vector of length " + std::to_string(v.size()) + " for layout of " +
                                               std::to_string(layout.size()));
  }
  const std::size_t n = layout.objects.size();
  obj.validate(n);
  const std::size_t dim = layout.size();

  GradientResult r;
  for (auto& g : r.term_gradients) g.assign(dim, 0.0);
  auto& g_ggn = r.term_gradients[static_cast<std::size_t>(Term::Ggn)];
  auto& g_lon = r.term_gradients[static_cast<std::size_t>(Term::Lon)];
  auto& g_3d = r.term_gradients[static_cast<std::size_t>(Term::Box3d)];
  auto& g_proj = r.term_gradients[static_cast<std::size_t>(Term::Proj)];
  auto& g_phy = r.term_gradients[static_cast<std::size_t>(Term::Phy)];
  auto& g_size = r.term_gradients[static_cast<std::size_t>(Term::SizePrior)];

  LossBreakdown& b = r.loss;
  b.mask = obj.mask;
  b.lambda_coop = obj.lambda_coop;
  b.size_prior_weight = obj.size_prior_weight;
  b.empty_scene = n == 0;

  if (obj.mask.ggn) {
    const GlobalDual phi = GlobalDual::variable(v[0], 0);
    const GlobalDual psi = GlobalDual::variable(v[1], 1);
    const auto layout_d = detail::seed_layout<GlobalDual>(v);
    const auto t = ggn_terms(phi, psi, layout_d, *obj.targets, obj.codebooks, obj.logits ? &*obj.logits : nullptr);
    const GlobalDual total = t.total();
    b.ggn = total.v;
    b.ggn_terms = {{value_of(t.phi.cls), value_of(t.phi.reg)},
                   {value_of(t.psi.cls), value_of(t.psi.reg)},
                   {value_of(t.layout_size.cls), value_of(t.layout_size.reg)},
                   {value_of(t.layout_heading.cls), value_of(t.layout_heading.reg)},
                   value_of(t.layout_center)};
    for (std::size_t k = 0; k < ParamLayout::kGlobalCount; ++k) g_ggn[k] = total.d[k];
  }

  if (n > 0) {
    const ObjectDual phi = ObjectDual::variable(v[0], 0);
    const ObjectDual psi = ObjectDual::variable(v[1], 1);
    const auto layout_box = assemble_layout(detail::seed_layout<ObjectDual>(v), obj.prior);
    const auto layout_extrema = corner_extrema(layout_box);
    const double inv = 1.0 / static_cast<double>(n);
    LonTerms lon;
    double box3d = 0.0, proj = 0.0, phy = 0.0, size_prior = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto p = detail::seed_object(v, layout.objects[j], j);
      const auto t = object_terms(obj, phi, psi, layout_extrema, p, j);
      const ObjectDual lon_total = t.lon.total();
      lon += LonTerms{t.lon.distance.v, t.lon.offset.v, {t.lon.size.cls.v, t.lon.size.reg.v},
                      {t.lon.heading.cls.v, t.lon.heading.reg.v}};
      box3d += t.box3d.v;
      proj += t.proj.v;
      phy += t.phy.v;
      size_prior += t.size_prior.v;
      detail::scatter_object(g_lon, lon_total, j, inv);
      detail::scatter_object(g_3d, t.box3d, j, inv);
      detail::scatter_object(g_proj, t.proj, j, inv);
      detail::scatter_object(g_phy, t.phy, j, inv);
      detail::scatter_object(g_size, t.size_prior, j, inv);
    }
    b.lon_terms = lon.scaled(inv);
    b.lon = lon.total() * inv;
    b.box3d = box3d * inv;
    b.proj = proj * inv;
    b.phy = phy * inv;
    b.size_prior = size_prior * inv;
  }
  b.total = b.recombine();
  if (!std::isfinite(b.total)) throw Error(ErrorCode::NonFiniteObjective, "objective is not finite");

  r.gradient.assign(dim, 0.0);
  for (Term t : kAllTerms) {
    const double w = term_weight(obj, t);
    if (w == 0.0) continue;
    const auto& gt = r.term(t);
    for (std::size_t k = 0; k < dim; ++k) r.gradient[k] += w * gt[k];
  }
  for (std::size_t k = 0; k < dim; ++k) {
    if (!std::isfinite(r.gradient[k])) {
      throw Error(ErrorCode::NonFiniteObjective, "gradient not finite at " + layout.name(k));
    }
  }
  return r;
}

inline GradientResult grad_total(const ParamVector& v, const Objective& obj) {
  return grad_total(v.values, v.layout, obj);
}

inline double objective_value(std::span<const double> v, const ParamLayout& layout, const Objective& obj,
                              BranchLog* log = nullptr) {
  const double f = loss_total(unflatten(v, layout), obj, log).total;
  if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteObjective, "objective is not finite");
  return f;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

enum class KinkProximity {
  Smooth,    // no branch switch within kNearSteps * eps
  Near,      // a switch within kNearSteps * eps but not within kAdjacentSteps * eps
  Adjacent,  // a switch within kAdjacentSteps * eps: flagged, excluded from pass/fail
};

inline const char* to_string(KinkProximity k) {
  switch (k) {
    case KinkProximity::Smooth: return "smooth";
    case KinkProximity::Near: return "near";
    case KinkProximity::Adjacent: return "adjacent";
  }
  return "?";
}

struct GradcheckOptions {
  double eps = 1e-5;
  double tol_smooth = 1e-4;
  double tol_near = 1e-3;
  double adjacent_steps = 10.0;
  double near_steps = 1000.0;
};

struct GradReport {
  std::vector<std::string> names;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> abs_error;
  std::vector<double> rel_error;  // |a - n| / max(|a|, |n|, 1)
  std::vector<KinkProximity> proximity;
  double objective = 0.0;
  double max_abs_error = 0.0;
  double max_rel_smooth = 0.0;
  double max_rel_near = 0.0;
  double max_rel_flagged = 0.0;
  std::size_t worst = 0;  // worst checked (non-flagged) coordinate
  std::size_t flagged = 0;
  std::size_t near = 0;
  GradcheckOptions options;
  bool passed = true;

  std::string worst_name() const { return names.empty() ? std::string() : names[worst]; }
};

// Checks a supplied gradient of the objective at v against central
// differences.
inline GradReport compare_gradient(std::span<const double> analytic, std::span<const double> v,
                                   const ParamLayout& layout, const Objective& obj, const GradcheckOptions& opt = {}) {
  const std::size_t dim = v.size();
  if (analytic.size() != dim) {
    throw Error(ErrorCode::ShapeMismatch, "gradient of length " + std::to_string(analytic.size()) +
                                              " for " + std::to_string(dim) + " coordinates");
  }
  GradReport rep;
  rep.options = opt;
  rep.analytic.assign(analytic.begin(), analytic.end());
  rep.numeric.resize(dim);
  rep.abs_error.resize(dim);
  rep.rel_error.resize(dim);
  rep.proximity.resize(dim);

  BranchLog base;
  rep.objective = objective_value(v, layout, obj, &base);

  std::vector<double> x(v.begin(), v.end());
  const auto switches_within = [&](std::size_t i, double h) {
    for (double s : {-h, h}) {
      x[i] = v[i] + s;
      BranchLog lg;
      objective_value(x, layout, obj, &lg);
      x[i] = v[i];
      if (!(lg == base)) return true;
    }
    return false;
  };

  double worst_rel = -1.0;
  for (std::size_t i = 0; i < dim; ++i) {
    rep.names.push_back(layout.name(i));
    x[i] = v[i] + opt.eps;
    const double fp = objective_value(x, layout, obj);
    x[i] = v[i] - opt.eps;
    const double fm = objective_value(x, layout, obj);
    x[i] = v[i];
    const double num = (fp - fm) / (2.0 * opt.eps);
    const double a = rep.analytic[i];
    rep.numeric[i] = num;
    rep.abs_error[i] = std::abs(a - num);
    rep.rel_error[i] = rep.abs_error[i] / std::max({std::abs(a), std::abs(num), 1.0});
    rep.max_abs_error = std::max(rep.max_abs_error, rep.abs_error[i]);

    if (switches_within(i, opt.adjacent_steps * opt.eps)) {
      rep.proximity[i] = KinkProximity::Adjacent;
      ++rep.flagged;
      rep.max_rel_flagged = std::max(rep.max_rel_flagged, rep.rel_error[i]);
      continue;
    }
    if (switches_within(i, opt.near_steps * opt.eps)) {
      rep.proximity[i] = KinkProximity::Near;
      ++rep.near;
      rep.max_rel_near = std::max(rep.max_rel_near, rep.rel_error[i]);
      if (rep.rel_error[i] >= opt.tol_near) rep.passed = false;
    } else {
      rep.proximity[i] = KinkProximity::Smooth;
      rep.max_rel_smooth = std::max(rep.max_rel_smooth, rep.rel_error[i]);
      if (rep.rel_error[i] >= opt.tol_smooth) rep.passed = false;
    }
    if (rep.rel_error[i] > worst_rel) {
      worst_rel = rep.rel_error[i];
      rep.worst = i;
    }
  }
  return rep;
}

inline GradReport gradcheck(std::span<const double> v, const ParamLayout& layout, const Objective& obj,
                            const GradcheckOptions& opt = {}) {
  return compare_gradient(grad_total(v, layout, obj).gradient, v, layout, obj, opt);
}

inline GradReport gradcheck(const ParamVector& v, const Objective& obj, const GradcheckOptions& opt = {}) {
  return gradcheck(v.values, v.layout, obj, opt);
}

}  // namespace coopscene
