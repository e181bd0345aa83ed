#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coopscene/parametrize.hpp"

namespace coopscene {

// ---------------------------------------------------------------------------
// Scalar building blocks

// Smooth-L1: 0.5 x^2 inside |x| <= delta, linear outside.
template <class S>
S huber(const S& x, double delta = 1.0, BranchLog* log = nullptr) {
  const double a = std::abs(value_of(x));
  note(log, a <= delta ? 0 : 1);
  if (a <= delta) return 0.5 * x * x;
  if (value_of(x) > 0.0) return delta * (x - 0.5 * delta);
  return delta * (-x - 0.5 * delta);
}

template <class S>
S relu(const S& x, BranchLog* log = nullptr) {
  const bool on = value_of(x) > 0.0;
  note(log, on ? 1 : 0);
  return on ? x : S(0.0);
}

// -log softmax(logits)[true_class], max-shifted.
inline double softmax_ce(std::span<const double> logits, int true_class) {
  if (logits.empty() || true_class < 0 || true_class >= static_cast<int>(logits.size())) {
    throw Error(ErrorCode::IndexOutOfRange,
                "class " + std::to_string(true_class) + " for " + std::to_string(logits.size()) + " logits");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  return std::log(sum) - (logits[true_class] - m);
}

// ---------------------------------------------------------------------------
// Configuration

struct Codebooks {
  AngleCodebook heading = AngleCodebook::heading();
  AngleCodebook camera = AngleCodebook::camera();
  SizeCodebook layout_sizes{{Vec3{4.5, 4.5, 2.7}}};
  SizeCodebook object_sizes{{Vec3{1.0, 1.0, 1.0}}};

  // Template used as the size prior for a category.
  const Vec3& category_template(int category) const {
    if (category < 0 || category >= static_cast<int>(object_sizes.templates.size())) {
      throw Error(ErrorCode::IndexOutOfRange, "no size template for category " + std::to_string(category));
    }
    return object_sizes.templates[category];
  }
};

enum class Term { Ggn, Lon, Box3d, Proj, Phy, SizePrior };

inline constexpr std::array<Term, 6> kAllTerms{Term::Ggn, Term::Lon, Term::Box3d,
                                               Term::Proj, Term::Phy, Term::SizePrior};

inline const char* term_name(Term t) {
  switch (t) {
    case Term::Ggn: return "ggn";
    case Term::Lon: return "lon";
    case Term::Box3d: return "3d";
    case Term::Proj: return "proj";
    case Term::Phy: return "phy";
    case Term::SizePrior: return "size-prior";
  }
  return "?";
}

struct LossMask {
  bool ggn = true;
  bool lon = true;
  bool box3d = true;
  bool proj = true;
  bool phy = true;
  bool size_prior = false;

  bool& operator[](Term t) {
    switch (t) {
      case Term::Ggn: return ggn;
      case Term::Lon: return lon;
      case Term::Box3d: return box3d;
      case Term::Proj: return proj;
      case Term::Phy: return phy;
      case Term::SizePrior: return size_prior;
    }
    return ggn;
  }
  bool operator[](Term t) const { return const_cast<LossMask&>(*this)[t]; }
  bool operator==(const LossMask&) const = default;

  static LossMask none() { return {false, false, false, false, false, false}; }
  static LossMask direct() { return {true, true, false, false, false, false}; }
  static LossMask cooperative() { return {}; }
  static LossMask unsupervised_2d() { return {false, false, false, true, true, true}; }

  bool needs_targets() const { return ggn || lon || box3d; }
  bool needs_geometry() const { return box3d || proj || phy; }

  // Applies a comma-separated edit list to this mask. Tokens: "all", "none",
  // "<term>" to enable, "no-<term>" to disable. Terms: ggn, lon, 3d, proj,
  // phy, size-prior.
  LossMask edited(const std::string& spec) const {
    LossMask m = *this;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      if (tok == "all") {
        m = cooperative();
        continue;
      }
      if (tok == "none") {
        m = none();
        continue;
      }
      bool enable = true;
      std::string name = tok;
      if (name.rfind("no-", 0) == 0) {
        enable = false;
        name = name.substr(3);
      } else if (!name.empty() && name[0] == '+') {
        name = name.substr(1);
      }
      bool found = false;
      for (Term t : kAllTerms) {
        if (name == term_name(t)) {
          m[t] = enable;
          found = true;
        }
      }
      if (!found) throw Error(ErrorCode::InvalidArgument, "unknown loss term '" + tok + "' in mask");
    }
    return m;
  }

  std::string str() const {
    std::string s;
    for (Term t : kAllTerms) {
      if (!(*this)[t]) continue;
      if (!s.empty()) s += ",";
      s += term_name(t);
    }
    return s.empty() ? "none" : s;
  }
};

// ---------------------------------------------------------------------------
// Direct supervision targets

struct ObjectTargets {
  double distance = 1.0;
  Vec2 offset;
  SizeCode size;
  AngleCode heading;
};

struct DirectTargets {
  AngleCode phi;
  AngleCode psi;
  Vec3 layout_center_offset;
  SizeCode layout_size;
  AngleCode layout_heading;
  std::vector<ObjectTargets> objects;
};

inline DirectTargets encode_targets(const SceneParams& gt, const Codebooks& cb) {
  DirectTargets t;
  t.phi = bin_encode(gt.phi, cb.camera);
  t.psi = bin_encode(gt.psi, cb.camera);
  t.layout_center_offset = gt.layout.center_offset;
  t.layout_size = bin_encode(gt.layout.size, cb.layout_sizes);
  t.layout_heading = bin_encode(gt.layout.heading, cb.heading);
  for (const auto& o : gt.objects) {
    t.objects.push_back({o.distance, o.offset, bin_encode(o.size, cb.object_sizes), bin_encode(o.heading, cb.heading)});
  }
  return t;
}

// Classifier scores for the hybrid heads. An empty vector means the head has
// no classifier (scene fitting optimizes continuous values only), so its
// classification term is zero.
struct DirectLogits {
  std::vector<double> phi, psi, layout_size, layout_heading;
  struct Object {
    std::vector<double> size, heading;
  };
  std::vector<Object> objects;
};

template <class S = double>
struct HybridTerm {
  S cls{};
  S reg{};
  S sum() const { return cls + reg; }
};

template <class S = double>
struct GgnTermsT {
  HybridTerm<S> phi, psi, layout_size, layout_heading;
  S layout_center{};
  S total() const { return phi.sum() + psi.sum() + layout_center + layout_size.sum() + layout_heading.sum(); }
};

template <class S = double>
struct LonTermsT {
  S distance{};
  S offset{};
  HybridTerm<S> size, heading;
  S total() const { return distance + offset + size.sum() + heading.sum(); }

  LonTermsT& operator+=(const LonTermsT& o) {
    distance += o.distance;
    offset += o.offset;
    size.cls += o.size.cls;
    size.reg += o.size.reg;
    heading.cls += o.heading.cls;
    heading.reg += o.heading.reg;
    return *this;
  }
  LonTermsT scaled(double s) const {
    return {distance * s, offset * s, {size.cls * s, size.reg * s}, {heading.cls * s, heading.reg * s}};
  }
};

using GgnTerms = GgnTermsT<double>;
using LonTerms = LonTermsT<double>;

namespace detail {

inline double classification(const std::vector<double>& logits, int cls, int bins, const char* head) {
  if (cls < 0 || cls >= bins) {
    throw Error(ErrorCode::CodebookMismatch, std::string(head) + " target class " + std::to_string(cls) +
                                                 " outside codebook of " + std::to_string(bins));
  }
  if (logits.empty()) return 0.0;
  if (static_cast<int>(logits.size()) != bins) {
    throw Error(ErrorCode::CodebookMismatch, std::string(head) + " has " + std::to_string(logits.size()) +
                                                 " logits for " + std::to_string(bins) + " bins");
  }
  return softmax_ce(logits, cls);
}

// The predicted residual relative to the target bin minus the target
// residual reduces to the wrapped difference of decoded angles.
template <class S>
HybridTerm<S> hybrid_angle(const S& pred, const AngleCode& tgt, const AngleCodebook& cb,
                           const std::vector<double>& logits, const char* head, BranchLog* log) {
  HybridTerm<S> t;
  t.cls = S(classification(logits, tgt.cls, cb.bins(), head));
  t.reg = huber(wrap_angle(pred - bin_decode(tgt, cb), log), 1.0, log);
  return t;
}

template <class S>
HybridTerm<S> hybrid_size(const Vec3T<S>& pred, const SizeCode& tgt, const SizeCodebook& cb,
                          const std::vector<double>& logits, const char* head, BranchLog* log) {
  HybridTerm<S> t;
  t.cls = S(classification(logits, tgt.cls, static_cast<int>(cb.templates.size()), head));
  const Vec3 target = bin_decode(tgt, cb);
  t.reg = huber(pred.x - target.x, 1.0, log) + huber(pred.y - target.y, 1.0, log) + huber(pred.z - target.z, 1.0, log);
  return t;
}

inline const std::vector<double>& none() {
  static const std::vector<double> empty;
  return empty;
}

}  // namespace detail

template <class S>
GgnTermsT<S> ggn_terms(const S& phi, const S& psi, const LayoutParamT<S>& layout, const DirectTargets& tgt,
                       const Codebooks& cb, const DirectLogits* logits = nullptr, BranchLog* log = nullptr) {
  using detail::hybrid_angle;
  using detail::hybrid_size;
  const DirectLogits empty;
  const DirectLogits& lg = logits ? *logits : empty;
  GgnTermsT<S> g;
  g.phi = hybrid_angle(phi, tgt.phi, cb.camera, lg.phi, "phi", log);
  g.psi = hybrid_angle(psi, tgt.psi, cb.camera, lg.psi, "psi", log);
  const Vec3 c = tgt.layout_center_offset;
  g.layout_center = huber(layout.center_offset.x - c.x, 1.0, log) + huber(layout.center_offset.y - c.y, 1.0, log) +
                    huber(layout.center_offset.z - c.z, 1.0, log);
  g.layout_size = hybrid_size(layout.size, tgt.layout_size, cb.layout_sizes, lg.layout_size, "layout size", log);
  g.layout_heading = hybrid_angle(layout.heading, tgt.layout_heading, cb.heading, lg.layout_heading,
                                  "layout heading", log);
  return g;
}

// One object's share of the LON sum (before the 1/N mean).
template <class S>
LonTermsT<S> lon_object_terms(const ObjectParamT<S>& obj, const ObjectTargets& tgt, const Codebooks& cb,
                              const DirectLogits::Object* logits = nullptr, BranchLog* log = nullptr) {
  LonTermsT<S> t;
  t.distance = huber(obj.distance - tgt.distance, 1.0, log);
  t.offset = huber(obj.offset.u - tgt.offset.u, 1.0, log) + huber(obj.offset.v - tgt.offset.v, 1.0, log);
  t.size = detail::hybrid_size(obj.size, tgt.size, cb.object_sizes, logits ? logits->size : detail::none(),
                               "object size", log);
  t.heading = detail::hybrid_angle(obj.heading, tgt.heading, cb.heading, logits ? logits->heading : detail::none(),
                                   "object heading", log);
  return t;
}

// Squared Frobenius distance over the 3x8 corner matrix.
template <class S>
S box3d_object_term(const BoxT<S>& box, const std::array<Vec3, 8>& gt_corners) {
  const auto corners = compose_box_corners(box);
  S sum{};
  for (int i = 0; i < 8; ++i) {
    const Vec3T<S> d = corners[i] - lift<S>(gt_corners[i]);
    sum += dot(d, d);
  }
  return sum;
}

// Squared distance between (min, max) 4-vectors of projected and observed boxes.
template <class S>
S proj_object_term(const CameraT<S>& cam, const BoxT<S>& box, const Box2D& observed, BranchLog* log = nullptr) {
  const Box2DT<S> p = project_box_to_2d(cam, box, log);
  const S a = p.min.u - observed.min.u, b = p.min.v - observed.min.v;
  const S c = p.max.u - observed.max.u, d = p.max.v - observed.max.v;
  return a * a + b * b + c * c + d * d;
}

template <class S>
std::array<S, 6> corner_extrema(const BoxT<S>& box, BranchLog* log = nullptr) {
  const auto corners = compose_box_corners(box);
  std::array<S, 6> e;  // min x, y, z then max x, y, z
  for (int a = 0; a < 3; ++a) {
    int lo = 0, hi = 0;
    for (int i = 1; i < 8; ++i) {
      if (value_of(corners[i][a]) < value_of(corners[lo][a])) lo = i;
      if (value_of(corners[i][a]) > value_of(corners[hi][a])) hi = i;
    }
    note(log, lo);
    note(log, hi);
    e[a] = corners[lo][a];
    e[3 + a] = corners[hi][a];
  }
  return e;
}

// Summed per-axis violations of the layout's world-axis extrema.
template <class S>
S phy_object_term(const BoxT<S>& object, const std::array<S, 6>& layout_extrema, BranchLog* log = nullptr) {
  const auto e = corner_extrema(object, log);
  S sum{};
  for (int a = 0; a < 3; ++a) {
    sum += relu(e[3 + a] - layout_extrema[3 + a], log);
    sum += relu(layout_extrema[a] - e[a], log);
  }
  return sum;
}

template <class S>
S size_prior_object_term(const Vec3T<S>& size, const Vec3& prior) {
  return huber(size.x - prior.x) + huber(size.y - prior.y) + huber(size.z - prior.z);
}

// ---------------------------------------------------------------------------
// Standalone losses over explicit inputs

inline double loss_ggn(const SceneParams& pred, const DirectTargets& tgt, const Codebooks& cb,
                       const DirectLogits* logits = nullptr) {
  return ggn_terms(pred.phi, pred.psi, pred.layout, tgt, cb, logits).total();
}

// Mean over objects; an empty scene contributes 0.
inline double loss_lon(const SceneParams& pred, const DirectTargets& tgt, const Codebooks& cb,
                       const DirectLogits* logits = nullptr) {
  if (pred.objects.size() != tgt.objects.size()) {
    throw Error(ErrorCode::CountMismatch, std::to_string(pred.objects.size()) + " objects vs " +
                                              std::to_string(tgt.objects.size()) + " targets");
  }
  if (pred.objects.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.objects.size(); ++j) {
    const DirectLogits::Object* lj = (logits && j < logits->objects.size()) ? &logits->objects[j] : nullptr;
    sum += lon_object_terms(pred.objects[j], tgt.objects[j], cb, lj).total();
  }
  return sum / static_cast<double>(pred.objects.size());
}

inline double loss_3d(const std::vector<OrientedBox3D>& pred, const std::vector<std::array<Vec3, 8>>& gt_corners) {
  if (pred.size() != gt_corners.size()) {
    throw Error(ErrorCode::CountMismatch, std::to_string(pred.size()) + " boxes vs " +
                                              std::to_string(gt_corners.size()) + " ground-truth corner sets");
  }
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) sum += box3d_object_term(pred[j], gt_corners[j]);
  return sum / static_cast<double>(pred.size());
}

inline double loss_proj(const std::vector<OrientedBox3D>& pred, const Camera& cam, const std::vector<Box2D>& observed) {
  if (pred.size() != observed.size()) {
    throw Error(ErrorCode::CountMismatch, std::to_string(pred.size()) + " boxes vs " +
                                              std::to_string(observed.size()) + " observed 2D boxes");
  }
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    try {
      sum += proj_object_term(cam, pred[j], observed[j]);
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
  }
  return sum / static_cast<double>(pred.size());
}

inline double loss_phy(const std::vector<OrientedBox3D>& objects, const OrientedBox3D& layout) {
  if (objects.empty()) return 0.0;
  const auto le = corner_extrema(layout);
  double sum = 0.0;
  for (const auto& o : objects) sum += phy_object_term(o, le);
  return sum / static_cast<double>(objects.size());
}

// ---------------------------------------------------------------------------
// Total objective

// Everything the objective needs besides the free parameters.
struct Objective {
  Camera camera;  // intrinsics and translation; angles come from the parameters
  LayoutPrior prior;
  Codebooks codebooks;
  std::optional<DirectTargets> targets;        // ggn, lon
  std::vector<std::array<Vec3, 8>> gt_corners;  // 3d
  std::vector<Box2D> observed;                  // proj
  std::optional<DirectLogits> logits;
  LossMask mask;
  double lambda_coop = 1.0;
  double size_prior_weight = 1.0;

  void validate(std::size_t n_objects) const {
    if (lambda_coop < 0.0) throw Error(ErrorCode::InvalidArgument, "lambda_coop must be non-negative");
    if ((mask.ggn || mask.lon) && !targets) {
      throw Error(ErrorCode::MissingTargets, "direct losses need ground-truth targets");
    }
    if (mask.lon && targets && targets->objects.size() != n_objects) {
      throw Error(ErrorCode::CountMismatch, "targets for " + std::to_string(targets->objects.size()) +
                                                " objects, scene has " + std::to_string(n_objects));
    }
    if (mask.box3d && gt_corners.size() != n_objects) {
      throw Error(ErrorCode::CountMismatch, "ground-truth corners for " + std::to_string(gt_corners.size()) +
                                                " objects, scene has " + std::to_string(n_objects));
    }
    if (mask.proj && observed.size() != n_objects) {
      throw Error(ErrorCode::CountMismatch, "observed boxes for " + std::to_string(observed.size()) +
                                                " objects, scene has " + std::to_string(n_objects));
    }
  }
};

// Weight each term carries in the total.
inline double term_weight(const Objective& obj, Term t) {
  if (!obj.mask[t]) return 0.0;
  switch (t) {
    case Term::Ggn:
    case Term::Lon: return 1.0;
    case Term::Box3d:
    case Term::Proj:
    case Term::Phy: return obj.lambda_coop;
    case Term::SizePrior: return obj.size_prior_weight;
  }
  return 0.0;
}

template <class S = double>
struct ObjectTermsT {
  LonTermsT<S> lon;
  S box3d{};
  S proj{};
  S phy{};
  S size_prior{};
};

// Terms contributed by object j, before the 1/N mean. Only active terms are
// evaluated; back-projection happens only when a geometric term needs it.
template <class S>
ObjectTermsT<S> object_terms(const Objective& obj, const S& phi, const S& psi, const std::array<S, 6>& layout_extrema,
                             const ObjectParamT<S>& p, std::size_t j, BranchLog* log = nullptr) {
  ObjectTermsT<S> t;
  try {
    if (obj.mask.lon) {
      const DirectLogits::Object* lj =
          (obj.logits && j < obj.logits->objects.size()) ? &obj.logits->objects[j] : nullptr;
      t.lon = lon_object_terms(p, obj.targets->objects[j], obj.codebooks, lj, log);
    }
    if (obj.mask.needs_geometry()) {
      const CameraT<S> cam = with_angles(obj.camera, phi, psi);
      const BoxT<S> box = assemble_object(p, cam);
      if (obj.mask.box3d) t.box3d = box3d_object_term(box, obj.gt_corners[j]);
      if (obj.mask.proj) t.proj = proj_object_term(cam, box, obj.observed[j], log);
      if (obj.mask.phy) t.phy = phy_object_term(box, layout_extrema, log);
    }
    if (obj.mask.size_prior) t.size_prior = size_prior_object_term(p.size, obj.codebooks.category_template(p.category));
  } catch (const ObjectError&) {
    throw;
  } catch (const Error& e) {
    throw ObjectError(e.code(), j, e.detail());
  }
  return t;
}

struct LossBreakdown {
  double ggn = 0.0;
  double lon = 0.0;
  double box3d = 0.0;
  double proj = 0.0;
  double phy = 0.0;
  double size_prior = 0.0;
  double total = 0.0;
  GgnTerms ggn_terms;
  LonTerms lon_terms;  // means over objects
  LossMask mask;
  double lambda_coop = 1.0;
  double size_prior_weight = 1.0;
  bool empty_scene = false;  // N = 0: object terms are 0 by convention

  double operator[](Term t) const {
    switch (t) {
      case Term::Ggn: return ggn;
      case Term::Lon: return lon;
      case Term::Box3d: return box3d;
      case Term::Proj: return proj;
      case Term::Phy: return phy;
      case Term::SizePrior: return size_prior;
    }
    return 0.0;
  }

  // total = ggn + lon + lambda * (3d + proj + phy) + w * size_prior, masked.
  double recombine() const {
    double s = 0.0;
    if (mask.ggn) s += ggn;
    if (mask.lon) s += lon;
    double coop = 0.0;
    if (mask.box3d) coop += box3d;
    if (mask.proj) coop += proj;
    if (mask.phy) coop += phy;
    s += lambda_coop * coop;
    if (mask.size_prior) s += size_prior_weight * size_prior;
    return s;
  }
};

inline LossBreakdown loss_total(const SceneParams& params, const Objective& obj, BranchLog* log = nullptr) {
  const std::size_t n = params.objects.size();
  obj.validate(n);
  LossBreakdown b;
  b.mask = obj.mask;
  b.lambda_coop = obj.lambda_coop;
  b.size_prior_weight = obj.size_prior_weight;
  b.empty_scene = n == 0;

  if (obj.mask.ggn) {
    b.ggn_terms = ggn_terms(params.phi, params.psi, params.layout, *obj.targets, obj.codebooks,
                            obj.logits ? &*obj.logits : nullptr, log);
    b.ggn = b.ggn_terms.total();
  }
  const auto layout_extrema = corner_extrema(assemble_layout(params.layout, obj.prior), log);
  LonTerms lon;
  double box3d = 0.0, proj = 0.0, phy = 0.0, size_prior = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto t = object_terms(obj, params.phi, params.psi, layout_extrema, params.objects[j], j, log);
    lon += t.lon;
    box3d += t.box3d;
    proj += t.proj;
    phy += t.phy;
    size_prior += t.size_prior;
  }
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    b.lon_terms = lon.scaled(inv);
    b.lon = lon.total() * inv;
    b.box3d = box3d * inv;
    b.proj = proj * inv;
    b.phy = phy * inv;
    b.size_prior = size_prior * inv;
  }
  b.total = b.recombine();
  return b;
}

}  // namespace coopscene
