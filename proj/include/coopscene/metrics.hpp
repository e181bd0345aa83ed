#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coopscene/scene_io.hpp"

namespace coopscene {

// ---------------------------------------------------------------------------
// Overlap

inline double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.max.u, b.max.u) - std::max(a.min.u, b.min.u);
  const double ih = std::min(a.max.v, b.max.v) - std::max(a.min.v, b.min.v);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

using Polygon2 = std::vector<Vec2>;

inline double polygon_area(const Polygon2& p) {
  if (p.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) s += p[j].u * p[i].v - p[i].u * p[j].v;
  return 0.5 * s;
}

// Sutherland-Hodgman: clips `subject` against the convex counter-clockwise
// polygon `clip`. Points on a clip edge count as inside.
inline Polygon2 clip_convex_polygon(const Polygon2& subject, const Polygon2& clip) {
  Polygon2 out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const auto side = [&](const Vec2& p) { return (b.u - a.u) * (p.v - a.v) - (b.v - a.v) * (p.u - a.u); };
    Polygon2 in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2& cur = in[i];
      const Vec2& prev = in[(i + in.size() - 1) % in.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) {
          const double t = sp / (sp - sc);
          out.push_back({prev.u + t * (cur.u - prev.u), prev.v + t * (cur.v - prev.v)});
        }
        out.push_back(cur);
      } else if (sp >= 0.0) {
        const double t = sp / (sp - sc);
        out.push_back({prev.u + t * (cur.u - prev.u), prev.v + t * (cur.v - prev.v)});
      }
    }
  }
  return out;
}

// Counter-clockwise footprint of a yaw-only box in the world xy-plane.
inline Polygon2 footprint(const OrientedBox3D& b) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const double hx = 0.5 * b.size.x, hy = 0.5 * b.size.y;
  Polygon2 p;
  for (auto [lx, ly] : {std::pair{-hx, -hy}, std::pair{hx, -hy}, std::pair{hx, hy}, std::pair{-hx, hy}}) {
    p.push_back({b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly});
  }
  return p;
}

inline double volume(const OrientedBox3D& b) { return b.size.x * b.size.y * b.size.z; }

inline double intersection_volume(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double top = std::min(a.center.z + 0.5 * a.size.z, b.center.z + 0.5 * b.size.z);
  const double bottom = std::max(a.center.z - 0.5 * a.size.z, b.center.z - 0.5 * b.size.z);
  if (top <= bottom) return 0.0;
  const double area = polygon_area(clip_convex_polygon(footprint(a), footprint(b)));
  return std::max(area, 0.0) * (top - bottom);
}

inline double iou_3d(const OrientedBox3D& a, const OrientedBox3D& b) {
  const double inter = intersection_volume(a, b);
  const double uni = volume(a) + volume(b) - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Detection scoring

struct Detection {
  int category = 0;
  OrientedBox3D box;
  double confidence = 1.0;
  std::size_t scene = 0;  // detections only match ground truth of the same scene
};

struct GroundTruth {
  int category = 0;
  OrientedBox3D box;
  std::size_t scene = 0;
};

// Detection indices in descending confidence; ties keep input order.
inline std::vector<std::size_t> confidence_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

// Greedy matching in confidence order: each detection takes the unmatched
// ground truth of highest IoU at or above the threshold. Returns, per
// detection, the matched ground-truth index or -1.
inline std::vector<long> greedy_match(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                      double iou_thresh, bool same_category) {
  std::vector<long> match(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d : confidence_order(dets)) {
    double best = -1.0;
    long best_g = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].scene != dets[d].scene) continue;
      if (same_category && gts[g].category != dets[d].category) continue;
      const double iou = iou_3d(dets[d].box, gts[g].box);
      if (iou >= iou_thresh && iou > best) {
        best = iou;
        best_g = static_cast<long>(g);
      }
    }
    if (best_g >= 0) {
      taken[best_g] = true;
      match[d] = best_g;
    }
  }
  return match;
}

struct PrPoint {
  double recall;
  double precision;
};

inline std::vector<PrPoint> precision_recall(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                             double iou_thresh) {
  const auto match = greedy_match(dets, gts, iou_thresh, false);
  std::vector<PrPoint> pr;
  std::size_t tp = 0, n = 0;
  for (std::size_t d : confidence_order(dets)) {
    ++n;
    if (match[d] >= 0) ++tp;
    pr.push_back({static_cast<double>(tp) / static_cast<double>(gts.size()),
                  static_cast<double>(tp) / static_cast<double>(n)});
  }
  return pr;
}

// Area under the precision envelope of the PR curve (continuous, not
// 11-point). Single category; absent when there is no ground truth.
inline std::optional<double> average_precision(const std::vector<Detection>& dets,
                                               const std::vector<GroundTruth>& gts, double iou_thresh) {
  if (gts.empty()) return std::nullopt;
  const auto pr = precision_recall(dets, gts, iou_thresh);
  if (pr.empty()) return 0.0;
  std::vector<double> envelope(pr.size());
  double running = 0.0;
  for (std::size_t i = pr.size(); i-- > 0;) {
    running = std::max(running, pr[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    ap += (pr[i].recall - prev_recall) * envelope[i];
    prev_recall = pr[i].recall;
  }
  return ap;
}

inline constexpr const char* kApIntegration = "area under precision envelope (continuous)";

struct MapResult {
  std::map<int, std::optional<double>> per_category;  // absent AP: no ground truth
  std::optional<double> map;                          // absent when no category has ground truth
};

inline MapResult map_over_categories(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                     double iou_thresh = 0.15) {
  std::map<int, std::pair<std::vector<Detection>, std::vector<GroundTruth>>> by_cat;
  for (const auto& d : dets) by_cat[d.category].first.push_back(d);
  for (const auto& g : gts) by_cat[g.category].second.push_back(g);
  MapResult r;
  double sum = 0.0;
  int count = 0;
  for (const auto& [cat, dg] : by_cat) {
    const auto ap = average_precision(dg.first, dg.second, iou_thresh);
    r.per_category[cat] = ap;
    if (ap) {
      sum += *ap;
      ++count;
    }
  }
  if (count > 0) r.map = sum / count;
  return r;
}

struct HolisticScores {
  std::optional<double> precision_geometric;  // P_g; absent without detections
  std::optional<double> recall_geometric;     // R_g; absent without ground truth
  std::optional<double> recall_semantic;      // R_r
  std::size_t matched = 0;
  std::size_t class_correct = 0;
  std::size_t detections = 0;
  std::size_t ground_truth = 0;
};

// Class-agnostic greedy matching gives P_g and R_g; R_r counts the matched
// pairs whose categories agree, so R_r <= R_g.
inline HolisticScores holistic_scores(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                      double iou_thresh = 0.15) {
  HolisticScores s;
  s.detections = dets.size();
  s.ground_truth = gts.size();
  const auto match = greedy_match(dets, gts, iou_thresh, false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (match[d] < 0) continue;
    ++s.matched;
    if (gts[match[d]].category == dets[d].category) ++s.class_correct;
  }
  if (!dets.empty()) s.precision_geometric = static_cast<double>(s.matched) / dets.size();
  if (!gts.empty()) {
    s.recall_geometric = static_cast<double>(s.matched) / gts.size();
    s.recall_semantic = static_cast<double>(s.class_correct) / gts.size();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Free space

// Voxels tile the union of both layouts' world-axis bounds with cells of at
// most `resolution` per side. A voxel is free for a scene when its center is
// inside that scene's layout box and outside all its object boxes.
inline double free_space_iou(const OrientedBox3D& est_layout, const std::vector<OrientedBox3D>& est_objects,
                             const OrientedBox3D& gt_layout, const std::vector<OrientedBox3D>& gt_objects,
                             double resolution = 0.1) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  const Aabb a = world_bounds(est_layout), b = world_bounds(gt_layout);
  Vec3 lo, hi;
  int n[3];
  double step[3];
  for (int k = 0; k < 3; ++k) {
    lo[k] = std::min(a.lo[k], b.lo[k]);
    hi[k] = std::max(a.hi[k], b.hi[k]);
    const double extent = hi[k] - lo[k];
    if (!(extent > 0.0)) throw Error(ErrorCode::EmptyDomain, "free-space domain has zero volume");
    n[k] = std::max(1, static_cast<int>(std::ceil(extent / resolution - 1e-9)));
    step[k] = extent / n[k];
  }
  const auto is_free = [](const Vec3& p, const OrientedBox3D& layout, const std::vector<OrientedBox3D>& objects,
                          const std::vector<Aabb>& bounds) {
    if (!contains(layout, p)) return false;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const Aabb& bb = bounds[i];
      if (p.x < bb.lo.x || p.x > bb.hi.x || p.y < bb.lo.y || p.y > bb.hi.y || p.z < bb.lo.z || p.z > bb.hi.z) continue;
      if (contains(objects[i], p)) return false;
    }
    return true;
  };
  std::vector<Aabb> est_bounds, gt_bounds;
  for (const auto& o : est_objects) est_bounds.push_back(world_bounds(o));
  for (const auto& o : gt_objects) gt_bounds.push_back(world_bounds(o));

  std::size_t inter = 0, uni = 0;
  for (int i = 0; i < n[0]; ++i) {
    for (int j = 0; j < n[1]; ++j) {
      for (int k = 0; k < n[2]; ++k) {
        const Vec3 p{lo.x + (i + 0.5) * step[0], lo.y + (j + 0.5) * step[1], lo.z + (k + 0.5) * step[2]};
        const bool fe = is_free(p, est_layout, est_objects, est_bounds);
        const bool fg = is_free(p, gt_layout, gt_objects, gt_bounds);
        inter += (fe && fg);
        uni += (fe || fg);
      }
    }
  }
  // Both free spaces empty: identical.
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Camera pose

struct PoseAngles {
  double phi = 0.0;
  double psi = 0.0;
};

inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Mean absolute wrapped error per angle, in degrees.
inline PoseAngles pose_mae(const std::vector<PoseAngles>& est, const std::vector<PoseAngles>& gt) {
  if (est.size() != gt.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(est.size()) + " estimates vs " +
                                               std::to_string(gt.size()) + " ground-truth poses");
  }
  PoseAngles m;
  if (est.empty()) return m;
  for (std::size_t i = 0; i < est.size(); ++i) {
    m.phi += std::abs(rad_to_deg(normalize_angle(est[i].phi - gt[i].phi)));
    m.psi += std::abs(rad_to_deg(normalize_angle(est[i].psi - gt[i].psi)));
  }
  m.phi /= est.size();
  m.psi /= est.size();
  return m;
}

// ---------------------------------------------------------------------------
// Corpus evaluation

struct EvalOptions {
  double iou_thresh = 0.15;
  double resolution = 0.1;
};

struct EvalReport {
  std::size_t scenes = 0;
  std::map<int, std::optional<double>> ap;
  std::optional<double> map;
  double layout_iou = 0.0;
  double free_space_iou = 0.0;
  PoseAngles pose_mae_deg;
  HolisticScores holistic;
  // Index-aligned box estimation over scenes whose object counts agree.
  std::optional<double> box_iou_3d;
  std::optional<double> box_iou_2d;
  std::size_t box_pairs = 0;
  EvalOptions options;
};

// Scenes are paired by position; callers align them by id first.
inline EvalReport evaluate(const std::vector<Scene>& gt, const std::vector<Scene>& pred, const EvalOptions& opt = {}) {
  if (gt.size() != pred.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(pred.size()) + " predicted vs " +
                                               std::to_string(gt.size()) + " ground-truth scenes");
  }
  EvalReport r;
  r.options = opt;
  r.scenes = gt.size();
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  std::vector<PoseAngles> pose_est, pose_gt;
  double iou3 = 0.0, iou2 = 0.0;
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const Scene& g = gt[s];
    const Scene& p = pred[s];
    for (const auto& o : g.objects) gts.push_back({o.category, o.box, s});
    for (const auto& o : p.objects) dets.push_back({o.category, o.box, o.confidence, s});
    pose_est.push_back({p.camera.phi, p.camera.psi});
    pose_gt.push_back({g.camera.phi, g.camera.psi});
    r.layout_iou += iou_3d(p.layout, g.layout);
    std::vector<OrientedBox3D> po, go;
    for (const auto& o : p.objects) po.push_back(o.box);
    for (const auto& o : g.objects) go.push_back(o.box);
    r.free_space_iou += free_space_iou(p.layout, po, g.layout, go, opt.resolution);
    if (po.size() == go.size()) {
      for (std::size_t j = 0; j < po.size(); ++j) {
        iou3 += iou_3d(po[j], go[j]);
        const Box2D observed = g.objects[j].box2d ? *g.objects[j].box2d : project_box_to_2d(g.camera, go[j]);
        iou2 += iou_2d(project_box_to_2d(p.camera, po[j]), observed);
        ++r.box_pairs;
      }
    }
  }
  if (r.scenes > 0) {
    r.layout_iou /= r.scenes;
    r.free_space_iou /= r.scenes;
  }
  if (r.box_pairs > 0) {
    r.box_iou_3d = iou3 / r.box_pairs;
    r.box_iou_2d = iou2 / r.box_pairs;
  }
  const MapResult m = map_over_categories(dets, gts, opt.iou_thresh);
  r.ap = m.per_category;
  r.map = m.map;
  // No detections at all still scores zero AP on every category with ground truth.
  r.pose_mae_deg = pose_mae(pose_est, pose_gt);
  r.holistic = holistic_scores(dets, gts, opt.iou_thresh);
  return r;
}

inline json report_to_json(const EvalReport& r, const std::vector<std::string>& category_names = {}) {
  const auto opt_num = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json ap = json::object();
  for (const auto& [cat, v] : r.ap) {
    const std::string name = (cat >= 0 && cat < static_cast<int>(category_names.size()))
                                 ? category_names[cat]
                                 : std::to_string(cat);
    ap[name] = opt_num(v);
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "eval_report"},
          {"ap_integration", kApIntegration},
          {"matching", "greedy by confidence"},
          {"iou_thresh", r.options.iou_thresh},
          {"free_space_resolution", r.options.resolution},
          {"scenes", r.scenes},
          {"ap", ap},
          {"map", opt_num(r.map)},
          {"layout_iou", r.layout_iou},
          {"free_space_iou", r.free_space_iou},
          {"pose_mae_deg", {{"phi", r.pose_mae_deg.phi}, {"psi", r.pose_mae_deg.psi}}},
          {"holistic",
           {{"P_g", opt_num(r.holistic.precision_geometric)},
            {"R_g", opt_num(r.holistic.recall_geometric)},
            {"R_r", opt_num(r.holistic.recall_semantic)},
            {"matched", r.holistic.matched},
            {"class_correct", r.holistic.class_correct},
            {"detections", r.holistic.detections},
            {"ground_truth", r.holistic.ground_truth}}},
          {"box_estimation",
           {{"iou_3d", opt_num(r.box_iou_3d)}, {"iou_2d", opt_num(r.box_iou_2d)}, {"pairs", r.box_pairs}}}};
}

inline std::string report_to_text(const EvalReport& r, const std::vector<std::string>& category_names = {}) {
  std::string out;
  char line[160];
  const auto fmt = [](const std::optional<double>& v) {
    char b[32];
    if (!v) return std::string("     -");
    std::snprintf(b, sizeof b, "%6.4f", *v);
    return std::string(b);
  };
  std::snprintf(line, sizeof line, "scenes: %zu   IoU threshold: %.3f   AP: %s\n", r.scenes, r.options.iou_thresh,
                kApIntegration);
  out += line;
  out += "category          AP\n";
  for (const auto& [cat, v] : r.ap) {
    const std::string name = (cat >= 0 && cat < static_cast<int>(category_names.size()))
                                 ? category_names[cat]
                                 : std::to_string(cat);
    std::snprintf(line, sizeof line, "  %-14s %s\n", name.c_str(), fmt(v).c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "mAP               %s\n", fmt(r.map).c_str());
  out += line;
  std::snprintf(line, sizeof line, "layout IoU        %6.4f\nfree-space IoU    %6.4f\n", r.layout_iou,
                r.free_space_iou);
  out += line;
  std::snprintf(line, sizeof line, "pose MAE (deg)    phi %.4f  psi %.4f\n", r.pose_mae_deg.phi, r.pose_mae_deg.psi);
  out += line;
  std::snprintf(line, sizeof line, "P_g %s  R_g %s  R_r %s\n", fmt(r.holistic.precision_geometric).c_str(),
                fmt(r.holistic.recall_geometric).c_str(), fmt(r.holistic.recall_semantic).c_str());
  out += line;
  std::snprintf(line, sizeof line, "box IoU 3D %s  2D %s  (%zu pairs)\n", fmt(r.box_iou_3d).c_str(),
                fmt(r.box_iou_2d).c_str(), r.box_pairs);
  out += line;
  return out;
}

}  // namespace coopscene
