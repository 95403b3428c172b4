#pragma once

#include <cstdint>
#include <numbers>
#include <optional>

#include "pairhalo/vec3.hpp"

namespace pairhalo::kinematics {

/// He-4 (2^3S_1) constants. The photon wavevector is that of the 1083 nm
/// cooling transition, so v_rec = hbar*k/m comes out at ~9.2 cm/s.
struct PhysicalConstants {
  double mass = 4.002602 * 1.66053906660e-27;                 // kg
  double gravity = 9.81;                                      // m/s^2
  double hbar = 1.054571817e-34;                              // J s
  double wavevector = 2.0 * std::numbers::pi / 1083.331e-9;   // 1/m

  double recoil_velocity() const { return hbar * wavevector / mass; }
};

/// Drop geometry between the collision point and the detector plane.
struct DetectorGeometry {
  double drop_height = 0.465;      // m
  double detector_radius = 0.04;   // m
  Vec3 com_velocity{};             // m/s, lab frame, z up

  /// Default geometry with the collision centre of mass recoiling upward at v_rec.
  static DetectorGeometry standard(const PhysicalConstants& c) {
    DetectorGeometry g;
    g.com_velocity = {0.0, 0.0, c.recoil_velocity()};
    return g;
  }
};

/// One reconstructed atom hit on the detector.
struct DetectionEvent {
  std::int64_t shot_id = 0;
  double t = 0.0;  // s, arrival time after the collision
  double x = 0.0;  // m
  double y = 0.0;  // m

  bool operator==(const DetectionEvent&) const = default;
};

void validate(const DetectorGeometry& geom);

/// Positive root of H = -vz*t + g*t^2/2. Throws std::domain_error if none exists.
double arrival_time(double drop_height, double vz, double gravity);

double com_arrival_time(const DetectorGeometry& geom, const PhysicalConstants& c);

/// Ballistic map from COM-frame velocity (v_rec units) to the detector plane.
/// Returns nullopt if the atom never reaches the plane.
std::optional<DetectionEvent> forward_tof(const Velocity& v, const DetectorGeometry& geom,
                                          const PhysicalConstants& c, std::int64_t shot_id = 0);

/// Inverse of forward_tof. Throws std::domain_error for t <= 0.
Velocity invert_tof(const DetectionEvent& e, const DetectorGeometry& geom,
                    const PhysicalConstants& c);

}  // namespace pairhalo::kinematics
