#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pairhalo/halo_mc.hpp"
#include "pairhalo/kinematics.hpp"

namespace pairhalo::detector {

/// Angular cap on the unit sphere around a direction.
struct ExclusionZone {
  Vec3 direction{1.0, 0.0, 0.0};
  double half_angle = 0.0;  // rad

  bool contains(const Vec3& v) const;
  /// Fraction of the full sphere covered by the cap.
  double sphere_fraction() const;
};

/// Caps around the unscattered condensates on +-x and the two condensates
/// along +-z; they exclude 40 % of the sphere.
std::vector<ExclusionZone> standard_exclusion_zones();

struct DetectorConfig {
  double efficiency = 0.10;
  double pair_resolution = 0.014;  // v_rec, rms of a pair velocity difference in x and y
  std::vector<ExclusionZone> exclusion_zones = standard_exclusion_zones();
};

void validate(const DetectorConfig& cfg);

/// Detected atoms of one shot, ordered by arrival time.
struct DetectedShot {
  std::int64_t shot_id = 0;
  std::vector<kinematics::DetectionEvent> events;
  std::vector<Velocity> velocities;  // reconstructed from events, COM frame
  std::vector<int> true_index;       // index of the source atom in the true shot
  bool blurred = false;

  std::size_t size() const { return velocities.size(); }
};

/// Thinning, time of flight, position blur, aperture and exclusion cuts.
DetectedShot detect_shot(const halo::TrueShot& shot, const DetectorConfig& cfg,
                         const kinematics::DetectorGeometry& geom,
                         const kinematics::PhysicalConstants& consts, std::mt19937_64& rng);

DetectedShot detect_shot(const halo::TrueShot& shot, const DetectorConfig& cfg,
                         const kinematics::DetectorGeometry& geom,
                         const kinematics::PhysicalConstants& consts, std::uint64_t master_seed);

std::vector<DetectedShot> detect_all(std::span<const halo::TrueShot> shots, const DetectorConfig& cfg,
                                     const kinematics::DetectorGeometry& geom,
                                     const kinematics::PhysicalConstants& consts,
                                     std::uint64_t master_seed);

/// Rebuild shots from an event stream (grouped by shot id, first-seen order).
std::vector<DetectedShot> shots_from_events(std::span<const kinematics::DetectionEvent> events,
                                            const kinematics::DetectorGeometry& geom,
                                            const kinematics::PhysicalConstants& consts);

std::vector<kinematics::DetectionEvent> events_of(std::span<const DetectedShot> shots);

/// Fraction of the sphere not covered by any zone (union of caps).
double acceptance_fraction(std::span<const ExclusionZone> zones);

bool excluded(std::span<const ExclusionZone> zones, const Vec3& v);

}  // namespace pairhalo::detector
