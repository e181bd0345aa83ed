#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "coopscene/geometry.hpp"

namespace coopscene {

// Per-object unknowns. c2d and category are fixed by the observation; the
// remaining fields are free.
template <class S = double>
struct ObjectParamT {
  Vec2 c2d;            // 2D box center, pixels
  int category = 0;
  Vec2T<S> offset;     // pixels, from c2d to the projected 3D center
  S distance{1.0};     // meters, camera center to 3D center
  Vec3T<S> size{S(1), S(1), S(1)};
  S heading{};
};

template <class S = double>
struct LayoutParamT {
  Vec3T<S> center_offset;  // from LayoutPrior::avg_center
  Vec3T<S> size{S(1), S(1), S(1)};
  S heading{};
};

struct LayoutPrior {
  Vec3 avg_center{0.0, 0.0, 1.5};
};

template <class S = double>
struct SceneParamsT {
  S phi{};
  S psi{};
  LayoutParamT<S> layout;
  std::vector<ObjectParamT<S>> objects;
};

using ObjectParam = ObjectParamT<double>;
using LayoutParam = LayoutParamT<double>;
using SceneParams = SceneParamsT<double>;

// ---------------------------------------------------------------------------
// Hybrid classification + regression codecs

struct AngleCode {
  int cls = 0;
  double residual = 0.0;
};

struct SizeCode {
  int cls = 0;
  Vec3 residual;
};

// Equal-width bins over [lo, hi). A codebook spanning a full turn is
// periodic: values are wrapped into range before binning and decoded values
// are re-normalized to [-pi, pi). Non-periodic codebooks put out-of-range
// values into the nearest edge bin with an oversized residual.
class AngleCodebook {
 public:
  AngleCodebook() = default;
  AngleCodebook(int bins, double lo, double hi) : bins_(bins), lo_(lo), hi_(hi) {
    if (bins <= 0) throw Error(ErrorCode::EmptyCodebook, "angle codebook needs at least one bin");
    if (!(hi > lo)) throw Error(ErrorCode::InvalidArgument, "angle codebook range is empty");
  }

  // 12 bins over [-pi, pi).
  static AngleCodebook heading() { return {12, -kPi, kPi}; }
  // 8 bins over [-pi/3, pi/3].
  static AngleCodebook camera() { return {8, -kPi / 3.0, kPi / 3.0}; }

  int bins() const { return bins_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double width() const { return (hi_ - lo_) / bins_; }
  bool periodic() const { return std::abs((hi_ - lo_) - kTwoPi) < 1e-12; }
  double center(int cls) const { return lo_ + (cls + 0.5) * width(); }

 private:
  int bins_ = 0;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

struct SizeCodebook {
  std::vector<Vec3> templates;
};

inline AngleCode bin_encode(double value, const AngleCodebook& cb) {
  if (cb.bins() <= 0) throw Error(ErrorCode::EmptyCodebook, "angle codebook has no bins");
  if (cb.periodic()) value = normalize_angle(value);
  int cls = static_cast<int>(std::floor((value - cb.lo()) / cb.width()));
  cls = std::clamp(cls, 0, cb.bins() - 1);
  return {cls, value - cb.center(cls)};
}

inline double bin_decode(const AngleCode& code, const AngleCodebook& cb) {
  if (code.cls < 0 || code.cls >= cb.bins()) {
    throw Error(ErrorCode::IndexOutOfRange, "angle class " + std::to_string(code.cls));
  }
  const double v = cb.center(code.cls) + code.residual;
  return cb.periodic() ? normalize_angle(v) : v;
}

// Nearest template by Euclidean distance; ties go to the lower index.
inline SizeCode bin_encode(const Vec3& size, const SizeCodebook& cb) {
  if (cb.templates.empty()) throw Error(ErrorCode::EmptyCodebook, "size codebook has no templates");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(cb.templates.size()); ++i) {
    const Vec3 d = size - cb.templates[i];
    const double dd = dot(d, d);
    if (dd < best_d) {
      best_d = dd;
      best = i;
    }
  }
  return {best, size - cb.templates[best]};
}

inline Vec3 bin_decode(const SizeCode& code, const SizeCodebook& cb) {
  if (code.cls < 0 || code.cls >= static_cast<int>(cb.templates.size())) {
    throw Error(ErrorCode::IndexOutOfRange, "size class " + std::to_string(code.cls));
  }
  return cb.templates[code.cls] + code.residual;
}

// ---------------------------------------------------------------------------
// 2D-3D center parametrization

// K is upper-triangular with K(2,2) = 1.
inline Mat3 invert_intrinsics(const Mat3& K) {
  const double fx = K(0, 0), s = K(0, 1), cx = K(0, 2);
  const double fy = K(1, 1), cy = K(1, 2);
  if (!(std::abs(fx) > 0.0) || !(std::abs(fy) > 0.0) || K(1, 0) != 0.0 || K(2, 0) != 0.0 ||
      K(2, 1) != 0.0 || K(2, 2) != 1.0) {
    throw Error(ErrorCode::SingularIntrinsics, "intrinsics must be upper-triangular with nonzero focal lengths");
  }
  Mat3 inv;
  inv(0, 0) = 1.0 / fx;
  inv(0, 1) = -s / (fx * fy);
  inv(0, 2) = (s * cy - cx * fy) / (fx * fy);
  inv(1, 1) = 1.0 / fy;
  inv(1, 2) = -cy / fy;
  inv(2, 2) = 1.0;
  return inv;
}

// C = T + D * R^T * ray / |ray|, ray = K^-1 [c2d + offset, 1].
template <class S>
Vec3T<S> back_project_center(const Vec2& c2d, const Vec2T<S>& offset, const S& distance,
                             const CameraT<S>& cam) {
  if (!(value_of(distance) > 0.0)) {
    throw Error(ErrorCode::InvalidDistance, "distance " + std::to_string(value_of(distance)) + " must be positive");
  }
  const Mat3 Kinv = invert_intrinsics(cam.K);
  const Vec3T<S> pixel{offset.u + c2d.u, offset.v + c2d.v, S(1.0)};
  const Vec3T<S> ray = lift<S>(Kinv) * pixel;
  if (!(value_of(ray.z) > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "back-projection ray has no forward component");
  }
  const S inv_len = 1.0 / norm(ray);
  const Vec3T<S> dir = cam.rotation().transpose() * ray;
  return lift<S>(cam.T) + (distance * inv_len) * dir;
}

inline ObjectParam encode_object(const OrientedBox3D& gt_box3d, const Box2D& gt_box2d, const Camera& cam,
                                 int category = 0) {
  const Vec2 projected = project_point(cam, gt_box3d.center);
  const Vec2 c2d = gt_box2d.center();
  ObjectParam p;
  p.c2d = c2d;
  p.category = category;
  p.offset = {projected.u - c2d.u, projected.v - c2d.v};
  p.distance = norm(gt_box3d.center - cam.T);
  p.size = gt_box3d.size;
  p.heading = normalize_angle(gt_box3d.heading);
  return p;
}

inline LayoutParam encode_layout(const OrientedBox3D& layout, const LayoutPrior& prior) {
  return {layout.center - prior.avg_center, layout.size, normalize_angle(layout.heading)};
}

template <class S>
BoxT<S> assemble_layout(const LayoutParamT<S>& layout, const LayoutPrior& prior) {
  return {lift<S>(prior.avg_center) + layout.center_offset, layout.size, layout.heading};
}

template <class S>
BoxT<S> assemble_object(const ObjectParamT<S>& obj, const CameraT<S>& cam) {
  return {back_project_center(obj.c2d, obj.offset, obj.distance, cam), obj.size, obj.heading};
}

template <class S = double>
struct AssembledSceneT {
  BoxT<S> layout;
  std::vector<BoxT<S>> objects;
};

using AssembledScene = AssembledSceneT<double>;

template <class S>
AssembledSceneT<S> assemble_scene(const SceneParamsT<S>& params, const Camera& cam, const LayoutPrior& prior) {
  const CameraT<S> c = with_angles(cam, params.phi, params.psi);
  AssembledSceneT<S> out;
  out.layout = assemble_layout(params.layout, prior);
  out.objects.reserve(params.objects.size());
  for (std::size_t j = 0; j < params.objects.size(); ++j) {
    try {
      out.objects.push_back(assemble_object(params.objects[j], c));
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
  }
  return out;
}

}  // namespace coopscene
