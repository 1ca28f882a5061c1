#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rldet/geom.hpp"
#include "rldet/rng.hpp"
#include "rldet/types.hpp"

namespace rldet {

struct LidarPoint {
  float x = 0, y = 0, z = 0, intensity = 0;
};

struct RadarPoint {
  float x = 0, y = 0, z = 0;
  float v_rel = 0;  // radial velocity relative to the ego vehicle, receding positive
  float v_abs = 0;  // ego-compensated absolute radial speed, >= 0
  float rcs = 0;
};

struct LidarCloud {
  std::vector<LidarPoint> points;
};

struct RadarCloud {
  std::vector<RadarPoint> points;
};

struct SensorModel {
  double lidar_surface_density = 4.0;  // points per m^2 of object surface
  double lidar_ground_density = 0.18;  // points per m^2 of ground plane
  double lidar_noise_sigma = 0.03;
  double radar_points_per_object = 8.0;  // Poisson mean per object
  double radar_noise_sigma = 0.05;
  int radar_ground_clutter = 5;  // static ground returns per frame
  double ghost_rate = 0.10;      // fraction of radar points that are moving ghosts
  double dropout_rate = 0.15;    // fraction of radar points zeroed inside moving boxes
  double ghost_min_radial_speed = 0.5;
  double baseline_velocity_threshold = 0.1;  // operating point of the naive classifier
  std::array<double, 3> ego_velocity{2.0, 0.0, 0.0};
};

struct GenConfig {
  int min_objects = 4;
  int max_objects = 8;
  std::array<double, kNumClasses> class_probs{0.4, 0.3, 0.3};
  double move_prob = 0.5;
  // speed range (m/s) per class when moving; the lower bounds keep moving
  // objects above the naive velocity threshold by construction
  std::array<std::array<double, 2>, kNumClasses> speed_range{{{2.0, 8.0}, {1.0, 2.0}, {1.5, 6.0}}};
  double size_jitter = 0.10;
  double obj_x_min = 3.0, obj_x_max = 46.0, obj_y_half = 22.0;
  double scene_x_max = 50.0, scene_y_half = 25.0;
  double placement_iou_cap = 0.0;
  int placement_retries = 80;
  // minimum |cos| between object velocity and the ray to every box corner;
  // keeps radial speeds of in-box returns well above the threshold
  double min_radial_cos = 0.25;
  SensorModel sensor;
};

struct SceneFrame {
  int frame_id = 0;
  LidarCloud lidar;
  RadarCloud radar;
  std::vector<ObjectSpec> annotations;
  std::vector<uint8_t> corridor_flags;  // region tag per annotation
  // construction metadata for the radar pathologies (not serialized)
  std::vector<uint8_t> radar_dropped;
  std::vector<uint8_t> radar_ghost;
};

struct DopplerReading {
  double v_rel = 0.0;
  double v_abs = 0.0;
};

// Radial velocity along the sensor-to-point ray. v_rel is relative to the
// moving ego vehicle; v_abs is the ego-compensated |radial| speed of the
// object itself.
inline DopplerReading doppler(const Point3& pos, const std::array<double, 3>& object_velocity,
                              const std::array<double, 3>& ego_velocity) {
  const double r = std::sqrt(pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]);
  if (r < 1e-9) throw std::invalid_argument("doppler: point at sensor origin");
  const double ux = pos[0] / r, uy = pos[1] / r, uz = pos[2] / r;
  DopplerReading out;
  out.v_rel = (object_velocity[0] - ego_velocity[0]) * ux +
              (object_velocity[1] - ego_velocity[1]) * uy +
              (object_velocity[2] - ego_velocity[2]) * uz;
  out.v_abs = std::abs(object_velocity[0] * ux + object_velocity[1] * uy + object_velocity[2] * uz);
  return out;
}

namespace detail {

inline Point3 box_to_world(const Box7& b, double lx, double ly, double lz) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  return {b.x + c * lx - s * ly, b.y + s * lx + c * ly, b.z + lz};
}

inline std::array<Point3, 8> box_corners3d(const Box7& b) {
  std::array<Point3, 8> out;
  int k = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1})
        out[static_cast<size_t>(k++)] =
            box_to_world(b, 0.5 * sx * b.l, 0.5 * sy * b.w, 0.5 * sz * b.h);
  return out;
}

inline bool inside_any_box(const PointXYZ& p, const std::vector<ObjectSpec>& objects,
                           double margin = 0.0) {
  for (const ObjectSpec& o : objects) {
    Box7 b = o.box;
    b.l += 2.0 * margin;
    b.w += 2.0 * margin;
    b.h += 2.0 * margin;
    if (point_in_box(p, b)) return true;
  }
  return false;
}

// Clamps a jittered point back into its source box so position noise cannot
// move a labeled return across a box face.
inline Point3 clamp_into_box(const Box7& b, const Point3& p) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double dx = p[0] - b.x, dy = p[1] - b.y, dz = p[2] - b.z;
  double lx = c * dx + s * dy;
  double ly = -s * dx + c * dy;
  double lz = dz;
  const double eps = 1e-4;
  lx = std::clamp(lx, -0.5 * b.l + eps, 0.5 * b.l - eps);
  ly = std::clamp(ly, -0.5 * b.w + eps, 0.5 * b.w - eps);
  lz = std::clamp(lz, -0.5 * b.h + eps, 0.5 * b.h - eps);
  return box_to_world(b, lx, ly, lz);
}

inline double min_corner_radial_cos(const Box7& b, const std::array<double, 3>& velocity) {
  const double speed = std::sqrt(velocity[0] * velocity[0] + velocity[1] * velocity[1] +
                                 velocity[2] * velocity[2]);
  if (speed == 0.0) return 0.0;
  double worst = 1.0;
  for (const Point3& c : box_corners3d(b)) {
    const double r = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
    const double dot = (velocity[0] * c[0] + velocity[1] * c[1] + velocity[2] * c[2]) / (r * speed);
    worst = std::min(worst, std::abs(dot));
  }
  return worst;
}

inline double class_rcs(ObjClass c) {
  switch (c) {
    case ObjClass::Car: return 1.0;
    case ObjClass::Cyclist: return 0.5;
    case ObjClass::Pedestrian: return 0.2;
  }
  return 0.0;
}

}  // namespace detail

// Surface returns on the four sides and top of every box plus a ground
// plane, with Gaussian position noise. Occlusion is not modeled.
inline LidarCloud sample_lidar(const std::vector<ObjectSpec>& objects, const SensorModel& m,
                               const GenConfig& cfg, Rng& rng) {
  LidarCloud cloud;
  for (const ObjectSpec& o : objects) {
    const Box7& b = o.box;
    // faces: +x side, -x side, +y side, -y side, top
    const std::array<double, 5> areas{b.w * b.h, b.w * b.h, b.l * b.h, b.l * b.h, b.l * b.w};
    double total = 0.0;
    for (double a : areas) total += a;
    const int n = rng.poisson(m.lidar_surface_density * total);
    for (int i = 0; i < n; ++i) {
      double pick = rng.uniform() * total;
      int face = 0;
      while (face < 4 && pick > areas[static_cast<size_t>(face)]) {
        pick -= areas[static_cast<size_t>(face)];
        ++face;
      }
      double lx, ly, lz;
      const double u = rng.uniform(-0.5, 0.5), v = rng.uniform(-0.5, 0.5);
      switch (face) {
        case 0: lx = 0.5 * b.l; ly = u * b.w; lz = v * b.h; break;
        case 1: lx = -0.5 * b.l; ly = u * b.w; lz = v * b.h; break;
        case 2: lx = u * b.l; ly = 0.5 * b.w; lz = v * b.h; break;
        case 3: lx = u * b.l; ly = -0.5 * b.w; lz = v * b.h; break;
        default: lx = u * b.l; ly = v * b.w; lz = 0.5 * b.h; break;
      }
      // pull face samples a hair inside the box so the float narrowing below
      // cannot push a noise-free return across its own face
      Point3 p = detail::clamp_into_box(b, detail::box_to_world(b, lx, ly, lz));
      LidarPoint lp;
      lp.x = static_cast<float>(p[0] + rng.normal(0.0, m.lidar_noise_sigma));
      lp.y = static_cast<float>(p[1] + rng.normal(0.0, m.lidar_noise_sigma));
      lp.z = static_cast<float>(p[2] + rng.normal(0.0, m.lidar_noise_sigma));
      lp.intensity = 1.0f;
      cloud.points.push_back(lp);
    }
  }
  const double ground_area = cfg.scene_x_max * 2.0 * cfg.scene_y_half;
  const int ng = rng.poisson(m.lidar_ground_density * ground_area);
  for (int i = 0; i < ng; ++i) {
    LidarPoint lp;
    lp.x = static_cast<float>(rng.uniform(0.0, cfg.scene_x_max) +
                              rng.normal(0.0, m.lidar_noise_sigma));
    lp.y = static_cast<float>(rng.uniform(-cfg.scene_y_half, cfg.scene_y_half) +
                              rng.normal(0.0, m.lidar_noise_sigma));
    lp.z = static_cast<float>(rng.normal(0.0, m.lidar_noise_sigma));
    lp.intensity = 0.3f;
    cloud.points.push_back(lp);
  }
  return cloud;
}

// Sparse in-box returns with Doppler velocities, static ground clutter,
// moving ghost returns outside every box, and forced zero-velocity dropout
// inside moving boxes. Ghost and dropout counts are constructed so their
// shares of the final cloud match the configured rates.
inline RadarCloud sample_radar(const std::vector<ObjectSpec>& objects, const SensorModel& m,
                               const GenConfig& cfg, Rng& rng,
                               std::vector<uint8_t>* dropped_flags = nullptr,
                               std::vector<uint8_t>* ghost_flags = nullptr) {
  RadarCloud cloud;
  std::vector<int> moving_idx;

  int in_box_count = 0;
  for (const ObjectSpec& o : objects) {
    const Box7& b = o.box;
    const int n = rng.poisson(m.radar_points_per_object);
    for (int i = 0; i < n; ++i) {
      Point3 p{};
      double v_abs = 0.0;
      DopplerReading dr{};
      // resample within the box until the radial speed clears the threshold;
      // the placement-time corner constraint makes retries rare
      for (int attempt = 0; attempt < 20; ++attempt) {
        const double lx = rng.uniform(-0.45, 0.45) * b.l;
        const double ly = rng.uniform(-0.45, 0.45) * b.w;
        const double lz = rng.uniform(-0.45, 0.45) * b.h;
        p = detail::box_to_world(b, lx, ly, lz);
        dr = doppler(p, o.velocity, m.ego_velocity);
        v_abs = dr.v_abs;
        if (!o.moving || v_abs >= 1.5 * m.baseline_velocity_threshold) break;
      }
      p[0] += rng.normal(0.0, m.radar_noise_sigma);
      p[1] += rng.normal(0.0, m.radar_noise_sigma);
      p[2] += rng.normal(0.0, m.radar_noise_sigma);
      p = detail::clamp_into_box(b, p);
      RadarPoint rp;
      rp.x = static_cast<float>(p[0]);
      rp.y = static_cast<float>(p[1]);
      rp.z = static_cast<float>(p[2]);
      rp.v_rel = static_cast<float>(dr.v_rel);
      rp.v_abs = static_cast<float>(v_abs);
      rp.rcs = static_cast<float>(detail::class_rcs(o.cls) + 0.05 * rng.normal());
      if (o.moving) moving_idx.push_back(static_cast<int>(cloud.points.size()));
      cloud.points.push_back(rp);
      ++in_box_count;
    }
  }

  for (int i = 0; i < m.radar_ground_clutter; ++i) {
    Point3 p{};
    for (int attempt = 0; attempt < 50; ++attempt) {
      p = {rng.uniform(0.5, cfg.scene_x_max), rng.uniform(-cfg.scene_y_half, cfg.scene_y_half), 0.0};
      if (!detail::inside_any_box(PointXYZ{p[0], p[1], p[2]}, objects, 0.3)) break;
    }
    const DopplerReading dr = doppler(p, {0.0, 0.0, 0.0}, m.ego_velocity);
    RadarPoint rp;
    rp.x = static_cast<float>(p[0]);
    rp.y = static_cast<float>(p[1]);
    rp.z = static_cast<float>(p[2]);
    rp.v_rel = static_cast<float>(dr.v_rel);
    rp.v_abs = 0.0f;
    rp.rcs = static_cast<float>(0.1 + 0.05 * rng.uniform());
    cloud.points.push_back(rp);
  }

  // multi-path surrogate: returns outside every box that carry velocity
  const int n_ghost =
      static_cast<int>(std::lround(m.ghost_rate / (1.0 - m.ghost_rate) * in_box_count));
  std::vector<uint8_t> is_ghost(cloud.points.size(), 0);
  for (int i = 0; i < n_ghost; ++i) {
    Point3 p{};
    for (int attempt = 0; attempt < 50; ++attempt) {
      p = {rng.uniform(1.0, cfg.scene_x_max), rng.uniform(-cfg.scene_y_half, cfg.scene_y_half),
           rng.uniform(0.0, 2.5)};
      if (!detail::inside_any_box(PointXYZ{p[0], p[1], p[2]}, objects, 0.3)) break;
    }
    std::array<double, 3> gv{};
    DopplerReading dr{};
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double speed = rng.uniform(1.0, 5.0);
      const double phi = rng.uniform(-kPi, kPi);
      gv = {speed * std::cos(phi), speed * std::sin(phi), 0.0};
      dr = doppler(p, gv, m.ego_velocity);
      if (dr.v_abs >= m.ghost_min_radial_speed) break;
    }
    RadarPoint rp;
    rp.x = static_cast<float>(p[0]);
    rp.y = static_cast<float>(p[1]);
    rp.z = static_cast<float>(p[2]);
    rp.v_rel = static_cast<float>(dr.v_rel);
    rp.v_abs = static_cast<float>(dr.v_abs);
    rp.rcs = static_cast<float>(0.1 + 0.05 * rng.uniform());
    is_ghost.push_back(1);
    cloud.points.push_back(rp);
  }

  // forced dropout: zero the velocity of a constructed share of the cloud
  std::vector<uint8_t> is_dropped(cloud.points.size(), 0);
  const int n_total = static_cast<int>(cloud.points.size());
  int n_drop = static_cast<int>(std::lround(m.dropout_rate * n_total));
  n_drop = std::min<int>(n_drop, static_cast<int>(moving_idx.size()));
  for (int i = 0; i < n_drop; ++i) {
    // partial Fisher-Yates over the remaining candidates
    const int j = i + rng.uniform_int(static_cast<int>(moving_idx.size()) - i);
    std::swap(moving_idx[static_cast<size_t>(i)], moving_idx[static_cast<size_t>(j)]);
    RadarPoint& rp = cloud.points[static_cast<size_t>(moving_idx[static_cast<size_t>(i)])];
    rp.v_rel = 0.0f;
    rp.v_abs = 0.0f;
    is_dropped[static_cast<size_t>(moving_idx[static_cast<size_t>(i)])] = 1;
  }

  if (dropped_flags) *dropped_flags = std::move(is_dropped);
  if (ghost_flags) *ghost_flags = std::move(is_ghost);
  return cloud;
}

// Places non-overlapping objects, then renders both sensor clouds.
// Deterministic for a given (seed, config).
inline SceneFrame gen_scene(uint64_t seed, const GenConfig& cfg) {
  SceneFrame frame;
  Rng place_rng(Rng::derive(seed, 1));
  Rng lidar_rng(Rng::derive(seed, 2));
  Rng radar_rng(Rng::derive(seed, 3));

  const int n_objects =
      cfg.min_objects +
      (cfg.max_objects > cfg.min_objects ? place_rng.uniform_int(cfg.max_objects - cfg.min_objects + 1)
                                         : 0);
  for (int k = 0; k < n_objects; ++k) {
    ObjectSpec obj;
    const double cp = place_rng.uniform();
    obj.cls = cp < cfg.class_probs[0]               ? ObjClass::Car
              : cp < cfg.class_probs[0] + cfg.class_probs[1] ? ObjClass::Pedestrian
                                                             : ObjClass::Cyclist;
    obj.moving = place_rng.bernoulli(cfg.move_prob);
    const auto& anchor = kAnchorSizes[static_cast<size_t>(obj.cls)];
    obj.box.l = anchor[0] * (1.0 + cfg.size_jitter * place_rng.uniform(-1.0, 1.0));
    obj.box.w = anchor[1] * (1.0 + cfg.size_jitter * place_rng.uniform(-1.0, 1.0));
    obj.box.h = anchor[2] * (1.0 + cfg.size_jitter * place_rng.uniform(-1.0, 1.0));
    const auto& sr = cfg.speed_range[static_cast<size_t>(obj.cls)];
    const double speed = place_rng.uniform(sr[0], sr[1]);

    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_retries; ++attempt) {
      obj.box.x = place_rng.uniform(cfg.obj_x_min, cfg.obj_x_max);
      obj.box.y = place_rng.uniform(-cfg.obj_y_half, cfg.obj_y_half);
      obj.box.z = 0.5 * obj.box.h;
      obj.box.theta = wrap_angle(place_rng.uniform(-kPi, kPi));
      if (obj.moving) {
        double dir = obj.box.theta;
        if (obj.cls == ObjClass::Pedestrian) dir = place_rng.uniform(-kPi, kPi);
        obj.velocity = {speed * std::cos(dir), speed * std::sin(dir), 0.0};
        if (detail::min_corner_radial_cos(obj.box, obj.velocity) < cfg.min_radial_cos) continue;
      } else {
        obj.velocity = {0.0, 0.0, 0.0};
      }
      bool overlaps = false;
      for (const ObjectSpec& other : frame.annotations) {
        if (bev_iou(obj.box, other.box) > cfg.placement_iou_cap) {
          overlaps = true;
          break;
        }
      }
      if (!overlaps) {
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::runtime_error("gen_scene: object placement failed after " +
                               std::to_string(cfg.placement_retries) + " retries");
    frame.annotations.push_back(obj);
  }

  frame.lidar = sample_lidar(frame.annotations, cfg.sensor, cfg, lidar_rng);
  frame.radar = sample_radar(frame.annotations, cfg.sensor, cfg, radar_rng, &frame.radar_dropped,
                             &frame.radar_ghost);
  frame.corridor_flags.reserve(frame.annotations.size());
  for (const ObjectSpec& o : frame.annotations)
    frame.corridor_flags.push_back(in_corridor(o.box) ? 1 : 0);
  return frame;
}

// Per-frame seeds derived from a base seed by a splittable counter.
inline std::vector<SceneFrame> gen_dataset(uint64_t base_seed, int num_frames,
                                           const GenConfig& cfg) {
  std::vector<SceneFrame> frames;
  frames.reserve(static_cast<size_t>(num_frames));
  for (int i = 0; i < num_frames; ++i) {
    SceneFrame f = gen_scene(Rng::derive(base_seed, static_cast<uint64_t>(i)), cfg);
    f.frame_id = i;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace rldet
