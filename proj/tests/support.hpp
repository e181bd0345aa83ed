#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "coopscene/coopscene.hpp"

namespace coopscene::test {

// f = 1, principal point at the origin, level camera at the world origin.
inline Camera unit_camera() { return Camera{}; }

// The level camera looks along world +y with world +z up, so a camera-frame
// point (x, y, z) sits at world (x, z, -y).
inline Vec3 world_from_camera(const Vec3& c) { return {c.x, c.z, -c.y}; }

inline Scene synthetic_scene(std::uint64_t base, std::uint64_t index) {
  GenConfig cfg;
  cfg.seed = derive_seed(base, index);
  return with_observed_boxes(generate_scene(cfg, "scene_" + std::to_string(index)));
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

// Objective over every term of a synthetic scene, with targets and corners
// taken from the scene itself.
inline Objective full_objective(const Scene& s, const Priors& pri, LossMask mask = LossMask::cooperative()) {
  FitConfig cfg;
  cfg.mask = mask;
  return make_objective(observe(s), pri, &s, cfg);
}

}  // namespace coopscene::test
