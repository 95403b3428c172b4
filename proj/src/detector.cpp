#include "pairhalo/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "pairhalo/rng.hpp"

namespace pairhalo::detector {

bool ExclusionZone::contains(const Vec3& v) const {
  const double n = norm(v);
  if (n == 0.0) return false;
  return dot(v, normalized(direction)) > n * std::cos(half_angle);
}

double ExclusionZone::sphere_fraction() const {
  return 0.5 * (1.0 - std::cos(std::clamp(half_angle, 0.0, std::numbers::pi)));
}

std::vector<ExclusionZone> standard_exclusion_zones() {
  // 15 % of the sphere around each of +-x, 5 % around each of +-z.
  const double big = std::acos(0.7);
  const double small = std::acos(0.9);
  return {{{1, 0, 0}, big}, {{-1, 0, 0}, big}, {{0, 0, 1}, small}, {{0, 0, -1}, small}};
}

void validate(const DetectorConfig& cfg) {
  if (!(cfg.efficiency > 0.0 && cfg.efficiency <= 1.0))
    throw std::invalid_argument("efficiency must be in (0, 1]");
  if (cfg.pair_resolution < 0.0) throw std::invalid_argument("pair_resolution must be >= 0");
  for (const auto& z : cfg.exclusion_zones)
    if (norm(z.direction) == 0.0 || z.half_angle < 0.0)
      throw std::invalid_argument("invalid exclusion zone");
}

bool excluded(std::span<const ExclusionZone> zones, const Vec3& v) {
  return std::any_of(zones.begin(), zones.end(), [&](const ExclusionZone& z) { return z.contains(v); });
}

double acceptance_fraction(std::span<const ExclusionZone> zones) {
  if (zones.empty()) return 1.0;
  bool overlap = false;
  for (std::size_t i = 0; i < zones.size() && !overlap; ++i)
    for (std::size_t j = i + 1; j < zones.size(); ++j) {
      const double sep = std::acos(std::clamp(
          dot(normalized(zones[i].direction), normalized(zones[j].direction)), -1.0, 1.0));
      if (sep < zones[i].half_angle + zones[j].half_angle) {
        overlap = true;
        break;
      }
    }
  if (!overlap) {
    double covered = 0.0;
    for (const auto& z : zones) covered += z.sphere_fraction();
    return std::max(0.0, 1.0 - covered);
  }
  // Union of overlapping caps: deterministic Fibonacci-lattice quadrature.
  constexpr int kPoints = 2000000;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  long accepted = 0;
#pragma omp parallel for reduction(+ : accepted) schedule(static)
  for (int i = 0; i < kPoints; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / kPoints;
    const double r = std::sqrt(1.0 - z * z);
    const double phi = golden * i;
    if (!excluded(zones, {r * std::cos(phi), r * std::sin(phi), z})) ++accepted;
  }
  return static_cast<double>(accepted) / kPoints;
}

DetectedShot detect_shot(const halo::TrueShot& shot, const DetectorConfig& cfg,
                         const kinematics::DetectorGeometry& geom,
                         const kinematics::PhysicalConstants& consts, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(cfg.efficiency);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double blur = cfg.pair_resolution / std::numbers::sqrt2 * consts.recoil_velocity();
  const double r2 = geom.detector_radius * geom.detector_radius;

  struct Hit {
    kinematics::DetectionEvent event;
    Velocity v;
    int index;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < shot.velocities.size(); ++i) {
    if (!keep(rng)) continue;
    auto e = kinematics::forward_tof(shot.velocities[i], geom, consts, shot.shot_id);
    if (!e) continue;
    if (blur > 0.0) {
      // Position blur sigma_v * t maps to a velocity blur sigma_v after inversion.
      e->x += blur * e->t * normal(rng);
      e->y += blur * e->t * normal(rng);
    }
    if (e->x * e->x + e->y * e->y > r2) continue;
    const Velocity v = kinematics::invert_tof(*e, geom, consts);
    if (excluded(cfg.exclusion_zones, v)) continue;
    hits.push_back({*e, v, static_cast<int>(i)});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.event.t < b.event.t; });

  DetectedShot out;
  out.shot_id = shot.shot_id;
  out.blurred = blur > 0.0;
  out.events.reserve(hits.size());
  out.velocities.reserve(hits.size());
  out.true_index.reserve(hits.size());
  for (const auto& h : hits) {
    out.events.push_back(h.event);
    out.velocities.push_back(h.v);
    out.true_index.push_back(h.index);
  }
  return out;
}

DetectedShot detect_shot(const halo::TrueShot& shot, const DetectorConfig& cfg,
                         const kinematics::DetectorGeometry& geom,
                         const kinematics::PhysicalConstants& consts, std::uint64_t master_seed) {
  auto rng = shot_rng(master_seed, shot.shot_id, Stream::detector);
  return detect_shot(shot, cfg, geom, consts, rng);
}

std::vector<DetectedShot> detect_all(std::span<const halo::TrueShot> shots, const DetectorConfig& cfg,
                                     const kinematics::DetectorGeometry& geom,
                                     const kinematics::PhysicalConstants& consts,
                                     std::uint64_t master_seed) {
  validate(cfg);
  kinematics::validate(geom);
  std::vector<DetectedShot> out(shots.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(shots.size()); ++i)
    out[i] = detect_shot(shots[i], cfg, geom, consts, master_seed);
  return out;
}

std::vector<DetectedShot> shots_from_events(std::span<const kinematics::DetectionEvent> events,
                                            const kinematics::DetectorGeometry& geom,
                                            const kinematics::PhysicalConstants& consts) {
  std::vector<DetectedShot> shots;
  std::map<std::int64_t, std::size_t> slot;
  for (const auto& e : events) {
    auto [it, inserted] = slot.try_emplace(e.shot_id, shots.size());
    if (inserted) {
      shots.emplace_back();
      shots.back().shot_id = e.shot_id;
    }
    auto& s = shots[it->second];
    s.events.push_back(e);
    s.velocities.push_back(kinematics::invert_tof(e, geom, consts));
    s.true_index.push_back(-1);
  }
  return shots;
}

std::vector<kinematics::DetectionEvent> events_of(std::span<const DetectedShot> shots) {
  std::vector<kinematics::DetectionEvent> out;
  for (const auto& s : shots) out.insert(out.end(), s.events.begin(), s.events.end());
  return out;
}

}  // namespace pairhalo::detector
