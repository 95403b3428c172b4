#include "pairhalo/kinematics.hpp"

#include <cmath>
#include <stdexcept>

namespace pairhalo::kinematics {

void validate(const DetectorGeometry& geom) {
  if (!(geom.drop_height > 0.0)) throw std::invalid_argument("drop_height must be > 0");
  if (!(geom.detector_radius > 0.0)) throw std::invalid_argument("detector_radius must be > 0");
}

double arrival_time(double drop_height, double vz, double gravity) {
  if (!(gravity > 0.0)) {
    // Without downward acceleration only a downward launch reaches the plane.
    if (vz < 0.0 && drop_height > 0.0) return drop_height / -vz;
    throw std::domain_error("no positive time-of-flight root");
  }
  const double disc = vz * vz + 2.0 * gravity * drop_height;
  if (disc < 0.0) throw std::domain_error("no positive time-of-flight root");
  const double s = std::sqrt(disc);
  // Pick the cancellation-free form of the positive root.
  const double t = vz >= 0.0 ? (vz + s) / gravity : 2.0 * drop_height / (s - vz);
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::domain_error("no positive time-of-flight root");
  return t;
}

double com_arrival_time(const DetectorGeometry& geom, const PhysicalConstants& c) {
  validate(geom);
  return arrival_time(geom.drop_height, geom.com_velocity.z, c.gravity);
}

std::optional<DetectionEvent> forward_tof(const Velocity& v, const DetectorGeometry& geom,
                                          const PhysicalConstants& c, std::int64_t shot_id) {
  const Vec3 lab = v * c.recoil_velocity() + geom.com_velocity;
  double t = 0.0;
  try {
    t = arrival_time(geom.drop_height, lab.z, c.gravity);
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  if (!(t > 0.0)) return std::nullopt;
  return DetectionEvent{shot_id, t, lab.x * t, lab.y * t};
}

Velocity invert_tof(const DetectionEvent& e, const DetectorGeometry& geom,
                    const PhysicalConstants& c) {
  if (!(e.t > 0.0)) throw std::domain_error("arrival time must be > 0");
  const Vec3 lab{e.x / e.t, e.y / e.t, (0.5 * c.gravity * e.t * e.t - geom.drop_height) / e.t};
  return (lab - geom.com_velocity) / c.recoil_velocity();
}

}  // namespace pairhalo::kinematics
