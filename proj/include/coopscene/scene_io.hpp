#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coopscene/losses.hpp"

namespace coopscene {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Scene and observation records

struct SceneObject {
  int category = 0;
  OrientedBox3D box;
  std::optional<Box2D> box2d;
  double confidence = 1.0;
};

struct Scene {
  std::string id;
  Camera camera;
  int image_width = 640;
  int image_height = 480;
  OrientedBox3D layout;
  std::vector<SceneObject> objects;
};

struct Detection2D {
  int category = 0;
  Box2D box;
  double confidence = 1.0;
};

struct Observations {
  std::string id;
  std::optional<Mat3> intrinsics;
  int image_width = 640;
  int image_height = 480;
  std::vector<Detection2D> detections;
};

// Size templates, layout prior and category names shared by a corpus.
struct Priors {
  LayoutPrior layout;
  Codebooks codebooks;
  std::vector<std::string> categories;
};

// ---------------------------------------------------------------------------
// Synthetic generator

struct CategorySpec {
  std::string name;
  Vec3 mean_size;        // meters, local x (width), y (depth), z (height)
  double size_rel_stddev = 0.1;
};

inline std::vector<CategorySpec> default_categories() {
  return {
      {"bed", {1.5, 1.9, 0.6}},    {"chair", {0.5, 0.5, 0.9}},   {"sofa", {1.9, 0.9, 0.85}},
      {"table", {1.2, 0.8, 0.75}}, {"desk", {1.2, 0.6, 0.75}},   {"toilet", {0.4, 0.65, 0.75}},
      {"bin", {0.3, 0.3, 0.4}},    {"sink", {0.55, 0.45, 0.85}}, {"shelf", {0.9, 0.35, 1.6}},
      {"lamp", {0.35, 0.35, 1.4}},
  };
}

struct GenConfig {
  Vec3 room_min{4.5, 4.5, 2.4};
  Vec3 room_max{6.5, 6.5, 3.0};
  double layout_heading_max = 0.3;  // |layout heading| bound, radians
  double camera_height_min = 1.0;   // above the floor
  double camera_height_max = 1.6;
  double camera_back_min = 0.3;     // distance from the back wall
  double camera_back_max = 0.8;
  double phi_min = 0.15;            // positive pitch looks down
  double phi_max = 0.4;
  double psi_min = -0.08;
  double psi_max = 0.08;
  int objects_min = 1;
  int objects_max = 5;
  std::vector<CategorySpec> categories = default_categories();
  int image_width = 640;
  int image_height = 480;
  double focal = 520.0;
  double containment_margin = 0.02;  // meters between object and layout extrema
  double image_margin = 1.0;         // pixels between projected box and image border
  double min_depth = 0.3;            // meters, every corner
  int max_attempts = 1000;           // per object
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (!seed) throw Error(ErrorCode::InvalidArgument, "generator seed is mandatory");
    for (int a = 0; a < 3; ++a) {
      if (!(room_min[a] > 0.0) || room_max[a] < room_min[a]) {
        throw Error(ErrorCode::InvalidArgument, "room size range is empty");
      }
    }
    if (objects_min < 0 || objects_max < objects_min) throw Error(ErrorCode::InvalidArgument, "object count range is empty");
    if (categories.empty()) throw Error(ErrorCode::InvalidArgument, "no object categories");
    if (camera_height_max < camera_height_min || phi_max < phi_min || psi_max < psi_min ||
        camera_back_max < camera_back_min) {
      throw Error(ErrorCode::InvalidArgument, "camera range is empty");
    }
    if (image_width <= 0 || image_height <= 0 || !(focal > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "invalid image geometry");
    }
  }

  Mat3 intrinsics() const { return make_intrinsics(focal, focal, 0.5 * image_width, 0.5 * image_height); }
};

// Per-scene seed derived from a corpus seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Templates and layout prior matching the generator's distribution.
inline Priors default_priors(const GenConfig& cfg = {}) {
  Priors p;
  const Vec3 room = 0.5 * (cfg.room_min + cfg.room_max);
  const double cam_h = 0.5 * (cfg.camera_height_min + cfg.camera_height_max);
  const double back = 0.5 * (cfg.camera_back_min + cfg.camera_back_max);
  p.layout.avg_center = {0.0, 0.5 * room.y - back, 0.5 * room.z - cam_h};
  p.codebooks.layout_sizes.templates = {room};
  p.codebooks.object_sizes.templates.clear();
  for (const auto& c : cfg.categories) {
    p.codebooks.object_sizes.templates.push_back(c.mean_size);
    p.categories.push_back(c.name);
  }
  return p;
}

namespace detail {

inline bool inside_with_margin(const Aabb& inner, const Aabb& outer, double margin) {
  for (int a = 0; a < 3; ++a) {
    if (inner.lo[a] < outer.lo[a] + margin || inner.hi[a] > outer.hi[a] - margin) return false;
  }
  return true;
}

inline bool visible(const Camera& cam, const OrientedBox3D& box, const GenConfig& cfg) {
  for (const auto& c : compose_box_corners(box)) {
    if (to_camera_frame(cam, c).z < cfg.min_depth) return false;
  }
  const Box2D b = project_box_to_2d(cam, box);
  const double m = cfg.image_margin;
  return b.min.u >= m && b.min.v >= m && b.max.u <= cfg.image_width - m && b.max.v <= cfg.image_height - m;
}

}  // namespace detail

// Objects rest on the floor strictly inside the layout extrema and project
// fully inside the image, so the physical loss is zero by construction.
inline Scene generate_scene(const GenConfig& cfg, const std::string& id = "scene") {
  cfg.validate();
  std::mt19937_64 rng(*cfg.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scene s;
  s.id = id;
  s.image_width = cfg.image_width;
  s.image_height = cfg.image_height;
  s.camera.K = cfg.intrinsics();
  s.camera.phi = uniform(cfg.phi_min, cfg.phi_max);
  s.camera.psi = uniform(cfg.psi_min, cfg.psi_max);
  s.camera.T = {0.0, 0.0, 0.0};

  const Vec3 room{uniform(cfg.room_min.x, cfg.room_max.x), uniform(cfg.room_min.y, cfg.room_max.y),
                  uniform(cfg.room_min.z, cfg.room_max.z)};
  const double room_heading = uniform(-cfg.layout_heading_max, cfg.layout_heading_max);
  const double cam_h = uniform(cfg.camera_height_min, cfg.camera_height_max);
  const double cam_x = uniform(-0.15, 0.15) * room.x;
  const double cam_y = -0.5 * room.y + uniform(cfg.camera_back_min, cfg.camera_back_max);
  const Mat3 R = rotation_up(room_heading);
  // The camera sits at the world origin.
  const Vec3 cam_local{cam_x, cam_y, cam_h - 0.5 * room.z};
  s.layout.center = Vec3{0, 0, 0} - R * cam_local;
  s.layout.size = room;
  s.layout.heading = room_heading;
  const Aabb layout_bounds = world_bounds(s.layout);

  const int count = uniform_int(cfg.objects_min, cfg.objects_max);
  for (int k = 0; k < count; ++k) {
    // The category is redrawn per attempt: some (tall shelves under a low,
    // steep camera) cannot be framed at all in a given room.
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      const int cat = uniform_int(0, static_cast<int>(cfg.categories.size()) - 1);
      const CategorySpec& spec = cfg.categories[cat];
      Vec3 size;
      for (int a = 0; a < 3; ++a) {
        const double f = std::clamp(1.0 + spec.size_rel_stddev * gauss(rng), 0.5, 1.5);
        size[a] = spec.mean_size[a] * f;
      }
      const double local_heading = uniform(-kPi, kPi);
      const Vec3 local{uniform(-0.5 * room.x, 0.5 * room.x), uniform(-0.5 * room.y, 0.5 * room.y),
                       -0.5 * room.z + 0.5 * size.z + cfg.containment_margin};
      OrientedBox3D box{s.layout.center + R * local, size, normalize_angle(room_heading + local_heading)};
      if (!detail::inside_with_margin(world_bounds(box), layout_bounds, cfg.containment_margin)) continue;
      if (!detail::visible(s.camera, box, cfg)) continue;
      SceneObject obj;
      obj.category = cat;
      obj.box = box;
      s.objects.push_back(obj);
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::PlacementFailure,
                  "could not place object " + std::to_string(k) + " after " + std::to_string(cfg.max_attempts) + " attempts");
    }
  }
  return s;
}

inline Box2D clamp_to_image(Box2D b, int width, int height) {
  const auto cl = [](double x, double hi) { return std::clamp(x, 0.0, hi); };
  b.min = {cl(b.min.u, width), cl(b.min.v, height)};
  b.max = {cl(b.max.u, width), cl(b.max.v, height)};
  return b;
}

// Ground-truth 2D boxes: projected 3D boxes clamped to the image.
inline Observations observe(const Scene& scene) {
  Observations o;
  o.id = scene.id;
  o.intrinsics = scene.camera.K;
  o.image_width = scene.image_width;
  o.image_height = scene.image_height;
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    try {
      const Box2D b = project_box_to_2d(scene.camera, scene.objects[j].box);
      o.detections.push_back({scene.objects[j].category, clamp_to_image(b, scene.image_width, scene.image_height), 1.0});
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
  }
  return o;
}

// Stores the observed 2D boxes on the scene's objects.
inline Scene with_observed_boxes(Scene scene) {
  const Observations o = observe(scene);
  for (std::size_t j = 0; j < scene.objects.size(); ++j) scene.objects[j].box2d = o.detections[j].box;
  return scene;
}

// Ground-truth parameters of a scene under its own camera.
inline SceneParams encode_scene(const Scene& scene, const LayoutPrior& prior) {
  SceneParams p;
  p.phi = scene.camera.phi;
  p.psi = scene.camera.psi;
  p.layout = encode_layout(scene.layout, prior);
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    const auto& o = scene.objects[j];
    const Box2D b2 = o.box2d ? *o.box2d : project_box_to_2d(scene.camera, o.box);
    try {
      p.objects.push_back(encode_object(o.box, b2, scene.camera, o.category));
    } catch (const Error& e) {
      throw ObjectError(e.code(), j, e.detail());
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path.empty() ? what : ("at '" + path + "': " + what));
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) parse_fail(path, "missing field '" + key + "'");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) parse_fail(path, "expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) parse_fail(path, "expected an integer");
  return j.get<int>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) parse_fail(path, "expected a string");
  return j.get<std::string>();
}

inline const json& array(const json& j, const std::string& path, std::optional<std::size_t> size = std::nullopt) {
  if (!j.is_array()) parse_fail(path, "expected an array");
  if (size && j.size() != *size) parse_fail(path, "expected " + std::to_string(*size) + " elements");
  return j;
}

inline json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json vec(const Vec2& v) { return json::array({v.u, v.v}); }

inline Vec3 vec3(const json& j, const std::string& path) {
  array(j, path, 3);
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

inline Vec2 vec2(const json& j, const std::string& path) {
  array(j, path, 2);
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

inline json mat(const Mat3& m) {
  return json::array({json::array({m(0, 0), m(0, 1), m(0, 2)}), json::array({m(1, 0), m(1, 1), m(1, 2)}),
                      json::array({m(2, 0), m(2, 1), m(2, 2)})});
}

inline Mat3 mat3(const json& j, const std::string& path) {
  array(j, path, 3);
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const Vec3 row = vec3(j[r], path + "[" + std::to_string(r) + "]");
    m(r, 0) = row.x;
    m(r, 1) = row.y;
    m(r, 2) = row.z;
  }
  return m;
}

inline json box3(const OrientedBox3D& b) {
  return {{"center", vec(b.center)}, {"size", vec(b.size)}, {"heading", b.heading}};
}

inline OrientedBox3D box3(const json& j, const std::string& path) {
  OrientedBox3D b;
  b.center = vec3(field(j, "center", path), join(path, "center"));
  b.size = vec3(field(j, "size", path), join(path, "size"));
  b.heading = number(field(j, "heading", path), join(path, "heading"));
  for (int a = 0; a < 3; ++a) {
    if (!(b.size[a] > 0.0)) parse_fail(join(path, "size"), "box size must be positive");
  }
  return b;
}

inline json box2(const Box2D& b) { return {{"min", vec(b.min)}, {"max", vec(b.max)}}; }

inline Box2D box2(const json& j, const std::string& path) {
  Box2D b{vec2(field(j, "min", path), join(path, "min")), vec2(field(j, "max", path), join(path, "max"))};
  if (b.min.u > b.max.u || b.min.v > b.max.v) parse_fail(path, "2D box min exceeds max");
  return b;
}

inline void check_header(const json& j, const char* kind) {
  if (!j.is_object()) parse_fail("", "document must be a JSON object");
  const int version = integer(field(j, "schema_version", ""), "schema_version");
  if (version != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "schema_version " + std::to_string(version) + ", expected " +
                                                      std::to_string(kSchemaVersion));
  }
  const std::string k = string(field(j, "kind", ""), "kind");
  if (k != kind) parse_fail("kind", "expected '" + std::string(kind) + "', found '" + k + "'");
}

inline json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Locate the byte offset as line:column.
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError,
                source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
}

}  // namespace detail

inline json scene_to_json(const Scene& s) {
  using detail::box2;
  using detail::box3;
  json objects = json::array();
  for (const auto& o : s.objects) {
    json jo = {{"category", o.category}, {"box", box3(o.box)}, {"confidence", o.confidence}};
    if (o.box2d) jo["box2d"] = box2(*o.box2d);
    objects.push_back(std::move(jo));
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "scene"},
          {"scene_id", s.id},
          {"camera",
           {{"K", detail::mat(s.camera.K)}, {"phi", s.camera.phi}, {"psi", s.camera.psi}, {"T", detail::vec(s.camera.T)}}},
          {"image", {{"width", s.image_width}, {"height", s.image_height}}},
          {"layout", box3(s.layout)},
          {"objects", std::move(objects)}};
}

inline Scene scene_from_json(const json& j) {
  using namespace detail;
  check_header(j, "scene");
  Scene s;
  s.id = string(field(j, "scene_id", ""), "scene_id");
  const json& cam = field(j, "camera", "");
  s.camera.K = mat3(field(cam, "K", "camera"), "camera.K");
  s.camera.phi = number(field(cam, "phi", "camera"), "camera.phi");
  s.camera.psi = number(field(cam, "psi", "camera"), "camera.psi");
  s.camera.T = vec3(field(cam, "T", "camera"), "camera.T");
  const json& img = field(j, "image", "");
  s.image_width = integer(field(img, "width", "image"), "image.width");
  s.image_height = integer(field(img, "height", "image"), "image.height");
  s.layout = box3(field(j, "layout", ""), "layout");
  const json& objs = array(field(j, "objects", ""), "objects");
  for (std::size_t i = 0; i < objs.size(); ++i) {
    const std::string p = "objects[" + std::to_string(i) + "]";
    SceneObject o;
    o.category = integer(field(objs[i], "category", p), join(p, "category"));
    o.box = box3(field(objs[i], "box", p), join(p, "box"));
    if (objs[i].contains("box2d")) o.box2d = box2(objs[i]["box2d"], join(p, "box2d"));
    if (objs[i].contains("confidence")) {
      o.confidence = number(objs[i]["confidence"], join(p, "confidence"));
      if (o.confidence < 0.0 || o.confidence > 1.0) parse_fail(join(p, "confidence"), "must lie in [0, 1]");
    }
    s.objects.push_back(o);
  }
  return s;
}

inline json observations_to_json(const Observations& o) {
  json dets = json::array();
  for (const auto& d : o.detections) {
    dets.push_back({{"category", d.category}, {"box2d", detail::box2(d.box)}, {"confidence", d.confidence}});
  }
  json j = {{"schema_version", kSchemaVersion},
            {"kind", "observations"},
            {"scene_id", o.id},
            {"image", {{"width", o.image_width}, {"height", o.image_height}}},
            {"detections", std::move(dets)}};
  if (o.intrinsics) j["intrinsics"] = detail::mat(*o.intrinsics);
  return j;
}

inline Observations observations_from_json(const json& j) {
  using namespace detail;
  check_header(j, "observations");
  Observations o;
  o.id = string(field(j, "scene_id", ""), "scene_id");
  if (j.contains("intrinsics")) o.intrinsics = mat3(j["intrinsics"], "intrinsics");
  const json& img = field(j, "image", "");
  o.image_width = integer(field(img, "width", "image"), "image.width");
  o.image_height = integer(field(img, "height", "image"), "image.height");
  const json& dets = array(field(j, "detections", ""), "detections");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string p = "detections[" + std::to_string(i) + "]";
    Detection2D d;
    d.category = integer(field(dets[i], "category", p), join(p, "category"));
    d.box = box2(field(dets[i], "box2d", p), join(p, "box2d"));
    d.confidence = number(field(dets[i], "confidence", p), join(p, "confidence"));
    if (d.confidence < 0.0 || d.confidence > 1.0) parse_fail(join(p, "confidence"), "must lie in [0, 1]");
    o.detections.push_back(d);
  }
  return o;
}

inline json priors_to_json(const Priors& p) {
  const auto& cb = p.codebooks;
  json layout_sizes = json::array(), object_sizes = json::array();
  for (const auto& t : cb.layout_sizes.templates) layout_sizes.push_back(detail::vec(t));
  for (const auto& t : cb.object_sizes.templates) object_sizes.push_back(detail::vec(t));
  const auto angle = [](const AngleCodebook& a) { return json{{"bins", a.bins()}, {"lo", a.lo()}, {"hi", a.hi()}}; };
  return {{"schema_version", kSchemaVersion},
          {"kind", "priors"},
          {"layout_avg_center", detail::vec(p.layout.avg_center)},
          {"heading_bins", angle(cb.heading)},
          {"camera_bins", angle(cb.camera)},
          {"layout_size_templates", std::move(layout_sizes)},
          {"object_size_templates", std::move(object_sizes)},
          {"categories", p.categories}};
}

inline Priors priors_from_json(const json& j) {
  using namespace detail;
  check_header(j, "priors");
  Priors p;
  p.layout.avg_center = vec3(field(j, "layout_avg_center", ""), "layout_avg_center");
  const auto angle = [&](const char* key) {
    const json& a = field(j, key, "");
    const int bins = integer(field(a, "bins", key), join(key, "bins"));
    if (bins <= 0) throw Error(ErrorCode::EmptyCodebook, std::string(key) + " has no bins");
    return AngleCodebook(bins, number(field(a, "lo", key), join(key, "lo")), number(field(a, "hi", key), join(key, "hi")));
  };
  p.codebooks.heading = angle("heading_bins");
  p.codebooks.camera = angle("camera_bins");
  const auto templates = [&](const char* key) {
    const json& arr = array(field(j, key, ""), key);
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(vec3(arr[i], std::string(key) + "[" + std::to_string(i) + "]"));
    if (out.empty()) throw Error(ErrorCode::EmptyCodebook, std::string(key) + " is empty");
    return out;
  };
  p.codebooks.layout_sizes.templates = templates("layout_size_templates");
  p.codebooks.object_sizes.templates = templates("object_size_templates");
  if (j.contains("categories")) {
    const json& c = array(j["categories"], "categories");
    for (std::size_t i = 0; i < c.size(); ++i) p.categories.push_back(string(c[i], "categories[" + std::to_string(i) + "]"));
  }
  return p;
}

// Serialized form used for every file: two-space indent, trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temporary and renames over the target.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json load_json(const std::filesystem::path& path) { return detail::parse_text(read_text(path), path.string()); }

inline Scene load_scene(const std::filesystem::path& path) { return scene_from_json(load_json(path)); }
inline void save_scene(const Scene& s, const std::filesystem::path& path) { write_text_atomic(path, dump(scene_to_json(s))); }

inline Observations load_observations(const std::filesystem::path& path) {
  return observations_from_json(load_json(path));
}
inline void save_observations(const Observations& o, const std::filesystem::path& path) {
  write_text_atomic(path, dump(observations_to_json(o)));
}

inline Priors load_priors(const std::filesystem::path& path) { return priors_from_json(load_json(path)); }
inline void save_priors(const Priors& p, const std::filesystem::path& path) {
  write_text_atomic(path, dump(priors_to_json(p)));
}

}  // namespace coopscene
