#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pairhalo/vec3.hpp"

namespace pairhalo::correlator {

/// SUM bins V1 + V2 (back-to-back pairs), DIFF bins V1 - V2 (collinear pairs).
enum class Variable { sum, diff };

std::string to_string(Variable v);
Variable variable_from_string(const std::string& s);

struct CorrelationConfig {
  Variable variable = Variable::sum;
  Vec3 window{0.1, 0.25, 0.25};      // half width per axis, v_rec
  Vec3 bin_width{0.005, 0.01, 0.01};  // v_rec
  double shell_radius = 1.0;
  double shell_gate = 0.0;  // keep atoms with ||v| - r| <= gate; 0 keeps everything
};

/// Odd number of bins per axis, centred on zero: centres k*b for |k| <= half.
struct BinLayout {
  std::array<int, 3> half{};
  std::array<double, 3> width{};

  static BinLayout from(const CorrelationConfig& cfg);

  int count(int axis) const { return 2 * half[axis] + 1; }
  std::size_t size() const {
    return static_cast<std::size_t>(count(0)) * count(1) * count(2);
  }
  std::size_t index(int kx, int ky, int kz) const {
    return (static_cast<std::size_t>(kx + half[0]) * count(1) + (ky + half[1])) * count(2) + (kz + half[2]);
  }
  std::array<int, 3> offsets(std::size_t index) const;
  Vec3 centre(std::size_t index) const;
  /// Outer edge of the window along an axis.
  double reach(int axis) const { return (half[axis] + 0.5) * width[axis]; }

  /// Bin of a pair variable; false when outside the window.
  bool bin_of(const Vec3& v, std::size_t& out) const {
    const double c[3] = {v.x, v.y, v.z};
    int k[3];
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor(c[a] / width[a] + 0.5);
      if (!(std::abs(f) <= half[a])) return false;
      k[a] = static_cast<int>(f);
    }
    out = index(k[0], k[1], k[2]);
    return true;
  }

  bool operator==(const BinLayout&) const = default;
};

using ShotVelocities = std::vector<std::vector<Velocity>>;

/// Drop atoms off the collision shell.
ShotVelocities gate(const ShotVelocities& shots, const CorrelationConfig& cfg);

struct PairHistogram3D {
  Variable variable = Variable::sum;
  BinLayout layout;
  std::vector<std::uint64_t> counts;
  std::uint64_t in_window = 0;    // pairs that landed in a bin
  std::uint64_t total_pairs = 0;  // all pairs of the kind, in or out of the window
  int shots = 0;                  // shots with at least one atom

  bool operator==(const PairHistogram3D&) const = default;
};

/// Pairs within each shot. SUM counts each unordered pair once; DIFF counts
/// both orientations, so its histogram is exactly inversion symmetric.
PairHistogram3D same_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg);

/// Pairs between atoms of different shots (accidental coincidences).
/// Throws std::invalid_argument for fewer than two shots.
PairHistogram3D cross_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg);

/// Serial all-pairs implementations, kept as the test oracle and benchmark baseline.
namespace reference {
PairHistogram3D same_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg);
PairHistogram3D cross_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg);
}  // namespace reference

struct G2Map {
  Variable variable = Variable::sum;
  BinLayout layout;
  std::vector<double> value;
  std::vector<double> error;
  std::vector<std::uint8_t> valid;
  std::vector<std::uint64_t> same;
  std::vector<std::uint64_t> cross;
  std::uint64_t same_total = 0;
  std::uint64_t cross_total = 0;
  /// Bins k and -k carry the same data (DIFF maps).
  bool mirror_symmetric = false;

  std::size_t valid_bins() const;
};

/// g2 = (same / P_same) / (cross / P_cross) with P the total pair counts.
/// Errors are the Poisson errors at the accidental (g2 = 1) level, so the
/// weights do not depend on the same-shot counts.
G2Map normalize(const PairHistogram3D& same, const PairHistogram3D& cross);

struct Projection {
  int axis = 0;
  std::vector<double> v, g2, err;
};

/// Average g2 over |V_j| <= half_widths[j] for the two axes other than `axis`.
Projection project(const G2Map& map, int axis, const Vec3& half_widths);

void write_g2map(const std::filesystem::path& path, const G2Map& map);
G2Map read_g2map(const std::filesystem::path& path);
void write_projection(std::ostream& out, const Projection& p);
void write_projection(const std::filesystem::path& path, const Projection& p);
Projection read_projection(const std::filesystem::path& path);

}  // namespace pairhalo::correlator
