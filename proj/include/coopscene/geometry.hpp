#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "coopscene/dual.hpp"
#include "coopscene/errors.hpp"

namespace coopscene {

// Conventions
//   world:  right-handed, z-up.
//   camera: x-right, y-down, z-forward.
// With zero camera angles the camera looks along world +y with world +z
// pointing up in the image.

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDepthEpsilon = 1e-6;

// Records every discrete choice (hull arg-extremum, relu side, Huber branch,
// angle wrap count) taken while evaluating an objective. Two evaluations
// took the same smooth piece iff their logs are equal.
struct BranchLog {
  std::vector<std::int32_t> choices;
  void note(std::int32_t c) { choices.push_back(c); }
  bool operator==(const BranchLog&) const = default;
};

inline void note(BranchLog* log, std::int32_t c) {
  if (log) log->note(c);
}

// [-pi, pi)
inline double normalize_angle(double a) {
  double r = std::fmod(a + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  r -= kPi;
  if (r >= kPi) r -= kTwoPi;
  return r;
}

// Shifts by a multiple of 2*pi chosen from the primal value, so partials
// pass through untouched.
template <class S>
S wrap_angle(const S& a, BranchLog* log = nullptr) {
  const double v = value_of(a);
  const double k = std::round((normalize_angle(v) - v) / kTwoPi);
  note(log, static_cast<std::int32_t>(k));
  if (k == 0.0) return a;
  return a + k * kTwoPi;
}

template <class S = double>
struct Vec2T {
  S u{}, v{};
};

template <class S = double>
struct Vec3T {
  S x{}, y{}, z{};

  S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3T operator+(const Vec3T& a, const Vec3T& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3T operator-(const Vec3T& a, const Vec3T& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3T operator*(const S& s, const Vec3T& a) { return {s * a.x, s * a.y, s * a.z}; }
};

using Vec2 = Vec2T<double>;
using Vec3 = Vec3T<double>;

template <class S>
S dot(const Vec3T<S>& a, const Vec3T<S>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class S>
S norm(const Vec3T<S>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <class To, class From>
Vec3T<To> lift(const Vec3T<From>& a) {
  return {To(a.x), To(a.y), To(a.z)};
}

inline Vec3 value_of(const Vec3T<double>& a) { return a; }
template <std::size_t N>
Vec3 value_of(const Vec3T<Dual<N>>& a) {
  return {a.x.v, a.y.v, a.z.v};
}

// Row-major 3x3.
template <class S = double>
struct Mat3T {
  std::array<S, 9> m{};

  static Mat3T identity() { return {{S(1), S(0), S(0), S(0), S(1), S(0), S(0), S(0), S(1)}}; }

  S& operator()(int r, int c) { return m[3 * r + c]; }
  const S& operator()(int r, int c) const { return m[3 * r + c]; }

  Mat3T transpose() const {
    Mat3T t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
    return t;
  }

  friend Vec3T<S> operator*(const Mat3T& a, const Vec3T<S>& x) {
    return {a(0, 0) * x.x + a(0, 1) * x.y + a(0, 2) * x.z,
            a(1, 0) * x.x + a(1, 1) * x.y + a(1, 2) * x.z,
            a(2, 0) * x.x + a(2, 1) * x.y + a(2, 2) * x.z};
  }

  friend Mat3T operator*(const Mat3T& a, const Mat3T& b) {
    Mat3T r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
  }
};

using Mat3 = Mat3T<double>;

template <class To>
Mat3T<To> lift(const Mat3& a) {
  Mat3T<To> r;
  for (int i = 0; i < 9; ++i) r.m[i] = To(a.m[i]);
  return r;
}

template <class S>
S determinant(const Mat3T<S>& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Counter-clockwise about world +z: maps +x to +y at a quarter turn.
template <class S>
Mat3T<S> rotation_up(const S& theta) {
  using std::cos;
  using std::sin;
  const S c = cos(theta), s = sin(theta);
  return {{c, -s, S(0), s, c, S(0), S(0), S(0), S(1)}};
}

// Pitch about the camera x-axis.
template <class S>
Mat3T<S> rotation_x(const S& a) {
  using std::cos;
  using std::sin;
  const S c = cos(a), s = sin(a);
  return {{S(1), S(0), S(0), S(0), c, -s, S(0), s, c}};
}

// Roll about the camera z-axis (optical axis).
template <class S>
Mat3T<S> rotation_z(const S& a) {
  return rotation_up(a);
}

// R(phi, psi) = R_z(psi) * R_x(phi).
template <class S>
Mat3T<S> camera_rotation(const S& phi, const S& psi) {
  return rotation_z(psi) * rotation_x(phi);
}

// Fixed change of axes from the z-up world to the z-forward camera frame:
// world x -> camera x, world z -> camera -y, world y -> camera z.
inline Mat3 world_to_camera_axes() { return {{1, 0, 0, 0, 0, -1, 0, 1, 0}}; }

template <class S = double>
struct BoxT {
  Vec3T<S> center;
  Vec3T<S> size;  // full extents along the box's local x, y, z
  S heading{};    // yaw about world +z
};

using OrientedBox3D = BoxT<double>;

inline OrientedBox3D normalized(OrientedBox3D b) {
  b.heading = normalize_angle(b.heading);
  return b;
}

template <class S = double>
struct Box2DT {
  Vec2T<S> min;
  Vec2T<S> max;

  Vec2T<S> center() const { return {(min.u + max.u) * 0.5, (min.v + max.v) * 0.5}; }
  S width() const { return max.u - min.u; }
  S height() const { return max.v - min.v; }
};

using Box2D = Box2DT<double>;

template <class S = double>
struct CameraT {
  Mat3 K = Mat3::identity();
  S phi{};
  S psi{};
  Vec3 T{};

  // Full world-to-camera rotation.
  Mat3T<S> rotation() const { return camera_rotation(phi, psi) * lift<S>(world_to_camera_axes()); }
};

using Camera = CameraT<double>;

inline Mat3 make_intrinsics(double fx, double fy, double cx, double cy) {
  return {{fx, 0, cx, 0, fy, cy, 0, 0, 1}};
}

template <class S>
CameraT<S> with_angles(const Camera& cam, const S& phi, const S& psi) {
  CameraT<S> c;
  c.K = cam.K;
  c.T = cam.T;
  c.phi = phi;
  c.psi = psi;
  return c;
}

// Corner i takes the sign triplet (bit2 ? + : -, bit1 ? + : -, bit0 ? + : -)
// for the local (x, y, z) half-extents: ---, --+, -+-, -++, +--, +-+, ++-, +++.
template <class S>
std::array<Vec3T<S>, 8> compose_box_corners(const BoxT<S>& box) {
  const Mat3T<S> R = rotation_up(box.heading);
  std::array<Vec3T<S>, 8> corners;
  for (int i = 0; i < 8; ++i) {
    const double sx = (i & 4) ? 0.5 : -0.5;
    const double sy = (i & 2) ? 0.5 : -0.5;
    const double sz = (i & 1) ? 0.5 : -0.5;
    const Vec3T<S> local{box.size.x * sx, box.size.y * sy, box.size.z * sz};
    corners[i] = box.center + R * local;
  }
  return corners;
}

template <class S>
Vec3T<S> to_camera_frame(const CameraT<S>& cam, const Vec3T<S>& x) {
  return cam.rotation() * (x - lift<S>(cam.T));
}

template <class S>
Vec2T<S> project_camera_point(const Mat3& K, const Vec3T<S>& p) {
  if (value_of(p.z) <= kDepthEpsilon) {
    throw Error(ErrorCode::NonPositiveDepth, "camera-frame depth " + std::to_string(value_of(p.z)));
  }
  const S iz = 1.0 / p.z;
  const S xn = p.x * iz, yn = p.y * iz;
  return {K(0, 0) * xn + K(0, 1) * yn + K(0, 2), K(1, 1) * yn + K(1, 2)};
}

template <class S>
Vec2T<S> project_point(const CameraT<S>& cam, const Vec3T<S>& x) {
  return project_camera_point(cam.K, to_camera_frame(cam, x));
}

// Axis-aligned hull of the projected corners. Ties go to the lowest corner
// index so subgradients are deterministic.
template <class S>
Box2DT<S> project_box_to_2d(const CameraT<S>& cam, const BoxT<S>& box, BranchLog* log = nullptr) {
  const auto corners = compose_box_corners(box);
  const Mat3T<S> R = cam.rotation();
  const Vec3T<S> T = lift<S>(cam.T);
  std::array<Vec2T<S>, 8> px;
  for (int i = 0; i < 8; ++i) {
    const Vec3T<S> p = R * (corners[i] - T);
    if (value_of(p.z) <= kDepthEpsilon) {
      throw Error(ErrorCode::NonPositiveDepth, "box corner " + std::to_string(i) + " behind camera");
    }
    px[i] = project_camera_point(cam.K, p);
  }
  int umin = 0, umax = 0, vmin = 0, vmax = 0;
  for (int i = 1; i < 8; ++i) {
    if (value_of(px[i].u) < value_of(px[umin].u)) umin = i;
    if (value_of(px[i].u) > value_of(px[umax].u)) umax = i;
    if (value_of(px[i].v) < value_of(px[vmin].v)) vmin = i;
    if (value_of(px[i].v) > value_of(px[vmax].v)) vmax = i;
  }
  note(log, umin);
  note(log, umax);
  note(log, vmin);
  note(log, vmax);
  return {{px[umin].u, px[vmin].v}, {px[umax].u, px[vmax].v}};
}

// Point-in-box for a yaw-only box.
inline bool contains(const OrientedBox3D& box, const Vec3& p) {
  const Vec3 d = p - box.center;
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double lx = c * d.x + s * d.y;
  const double ly = -s * d.x + c * d.y;
  return std::abs(lx) <= 0.5 * box.size.x && std::abs(ly) <= 0.5 * box.size.y &&
         std::abs(d.z) <= 0.5 * box.size.z;
}

struct Aabb {
  Vec3 lo, hi;
};

inline Aabb world_bounds(const OrientedBox3D& box) {
  const auto corners = compose_box_corners(box);
  Aabb b{corners[0], corners[0]};
  for (const auto& c : corners) {
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], c[a]);
      b.hi[a] = std::max(b.hi[a], c[a]);
    }
  }
  return b;
}

}  // namespace coopscene
