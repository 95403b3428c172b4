#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pairhalo/rng.hpp"
#include "pairhalo/vec3.hpp"

namespace pairhalo::halo {

/// Velocity-space extent of one mode cell along x and transverse to x, v_rec.
struct ModeWidths {
  double x = 0.0;
  double yz = 0.0;
};

/// One cell on the unit sphere, in polar coordinates about the x axis:
/// direction = (cos t, sin t cos p, sin t sin p).
struct ModeCell {
  double cos_lo = 0.0;  // cos of the larger polar angle
  double cos_hi = 0.0;  // cos of the smaller polar angle
  double phi_lo = 0.0;
  double phi_hi = 0.0;
  int band = 0;
  int partner = -1;  // antipodal cell
  double solid_angle = 0.0;

  bool contains(const Vec3& unit) const;
};

/// Tiling of the sphere into antipodal cell pairs. pairs[i].first < pairs[i].second.
///
/// Cells near +-x cover more solid angle than equatorial ones, because there
/// the narrow x width is radial instead of tangential. Such a cell holds
/// several modes stacked in radius (radial_modes[i] for pair i, about its
/// solid angle over the smallest cell's), so the mode density per solid angle
/// is uniform. Modes are numbered 2*(mode_offset[i] + k) + side, side 0 being
/// the pairs[i].first cell; the partner of mode m is m ^ 1.
struct ModeGrid {
  ModeWidths widths;
  double radius = 1.0;
  std::vector<ModeCell> cells;
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> radial_modes;
  std::vector<int> mode_offset;  // per pair, plus a final sentinel
  std::vector<int> band_offset;  // first cell of each band, plus a final sentinel

  /// Number of antipodal mode pairs (not cell pairs).
  std::size_t mode_pairs() const { return static_cast<std::size_t>(mode_offset.back()); }
  double total_solid_angle() const;
  /// Cell index containing the unit vector.
  int locate(const Vec3& unit) const;
  /// Cell holding mode m.
  int cell_of_mode(int m) const;
};

/// Bands of equal anisotropic arc length in polar angle, each split evenly in
/// azimuth; cells are ~widths.x along x and ~widths.yz transverse on a shell of
/// the given radius. Throws std::invalid_argument when fewer than 8 cells fit.
ModeGrid build_mode_grid(ModeWidths widths, double radius = 1.0);

struct HaloConfig {
  double shell_radius = 1.0;       // v_rec
  double shell_rms_width = 0.0;    // v_rec, radial rms of |v|; saturates at the per-atom smear
  ModeWidths mode_widths{};        // rms of the pair-sum residual per axis, v_rec
  double cell_scale = 1.5;         // cell extent / mode width
  double mean_occupation = 0.0;    // if > 0, used directly and N is derived
  double mean_scattered = 1700.0;  // mean scattered atoms per shot (used when mean_occupation <= 0)
  double shot_number_spread = 0.5; // log-normal sigma of the per-shot scattered number
  int n_shots = 1100;
  double rate_tau = 150e-6;        // s, pair production time constant (reporting only)
};

void validate(const HaloConfig& cfg);

/// Cell widths actually used for the grid: cell_scale times the mode widths.
ModeWidths cell_widths(const HaloConfig& cfg);

/// Mean occupation per mode averaged over modes, from the config and the grid.
double mean_occupation(const HaloConfig& cfg, const ModeGrid& grid);

/// Mean occupation of each mode in cell pair i. Atoms per solid angle are
/// uniform, so this is N * Omega_cell / (4 pi radial_modes[i]).
double pair_occupation(const HaloConfig& cfg, const ModeGrid& grid, std::size_t pair);

/// Mean number of scattered atoms per shot, 2 * n * (mode pairs).
double mean_scattered(const HaloConfig& cfg, const ModeGrid& grid);

struct TrueShot {
  std::int64_t shot_id = 0;
  std::vector<Velocity> velocities;
  std::vector<int> modes;  // mode index for each atom (see ModeGrid)
  double occupation = 0.0; // mean occupation used for this shot

  std::size_t size() const { return velocities.size(); }
};

/// Draw one shot: thermal occupation per antipodal mode pair with exactly
/// matched numbers on both sides. rng is consumed.
TrueShot sample_shot(const ModeGrid& grid, const HaloConfig& cfg, std::int64_t shot_id,
                     std::mt19937_64& rng);

/// Shot from the per-shot stream of master_seed.
TrueShot sample_shot(const ModeGrid& grid, const HaloConfig& cfg, std::int64_t shot_id,
                     std::uint64_t master_seed);

/// Shots 0..n_shots-1, generated in parallel; identical for any thread count.
std::vector<TrueShot> simulate(const ModeGrid& grid, const HaloConfig& cfg, std::uint64_t master_seed);

/// N / total_atoms.
double scattered_fraction(double scattered, double total_atoms);

/// Fraction of the asymptotic number of pairs produced by time t, 1 - exp(-t/tau).
double produced_fraction(double t, double tau);

}  // namespace pairhalo::halo
