#include "pairhalo/halo_mc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pairhalo::halo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double azimuth(const Vec3& u) {
  double phi = std::atan2(u.z, u.y);
  if (phi < 0.0) phi += kTwoPi;
  return phi;
}

/// Cumulative anisotropic arc length s(theta) on [0, pi/2], tabulated.
struct ArcTable {
  static constexpr int kSteps = 20000;
  std::vector<double> theta, s;

  ArcTable(ModeWidths w, double r) : theta(kSteps + 1), s(kSteps + 1) {
    const double h = 0.5 * std::numbers::pi / kSteps;
    auto density = [&](double t) {
      const double a = std::sin(t) / w.x, b = std::cos(t) / w.yz;
      return r * std::sqrt(a * a + b * b);
    };
    theta[0] = 0.0;
    s[0] = 0.0;
    for (int i = 1; i <= kSteps; ++i) {
      const double t0 = (i - 1) * h, t1 = i * h;
      // Simpson on each sub-interval.
      s[i] = s[i - 1] + h / 6.0 * (density(t0) + 4.0 * density(0.5 * (t0 + t1)) + density(t1));
      theta[i] = t1;
    }
  }
  double half_length() const { return s.back(); }
  double invert(double target) const {
    const auto it = std::lower_bound(s.begin(), s.end(), target);
    if (it == s.begin()) return 0.0;
    if (it == s.end()) return theta.back();
    const auto i = static_cast<std::size_t>(it - s.begin());
    const double f = (target - s[i - 1]) / (s[i] - s[i - 1]);
    return theta[i - 1] + f * (theta[i] - theta[i - 1]);
  }
};

double gauss(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  return sigma * n(rng);
}

}  // namespace

bool ModeCell::contains(const Vec3& u) const {
  if (u.x < cos_lo || u.x > cos_hi) return false;
  const double phi = azimuth(u);
  return phi >= phi_lo && phi < phi_hi;
}

double ModeGrid::total_solid_angle() const {
  double s = 0.0;
  for (const auto& c : cells) s += c.solid_angle;
  return s;
}

int ModeGrid::locate(const Vec3& u) const {
  const int bands = static_cast<int>(band_offset.size()) - 1;
  // Bands are ordered by decreasing cos(theta).
  int lo = 0, hi = bands - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (u.x >= cells[band_offset[mid]].cos_lo) hi = mid;
    else lo = mid + 1;
  }
  const int n = band_offset[lo + 1] - band_offset[lo];
  int j = static_cast<int>(azimuth(u) / kTwoPi * n);
  j = std::clamp(j, 0, n - 1);
  return band_offset[lo] + j;
}

ModeGrid build_mode_grid(ModeWidths widths, double radius) {
  if (!(widths.x > 0.0) || !(widths.yz > 0.0) || !(radius > 0.0))
    throw std::invalid_argument("mode widths and radius must be > 0");
  const ArcTable arc(widths, radius);
  const double half = arc.half_length();
  const int bands = std::max(1, static_cast<int>(std::lround(2.0 * half)));
  const double ds = 2.0 * half / bands;

  // Edges in polar angle, mirror-symmetric about the equator.
  std::vector<double> edge(bands + 1);
  for (int k = 0; k <= bands; ++k) {
    if (2 * k < bands) edge[k] = arc.invert(k * ds);
    else if (2 * k == bands) edge[k] = 0.5 * std::numbers::pi;
  }
  for (int k = 0; k <= bands; ++k)
    if (2 * k > bands) edge[k] = std::numbers::pi - edge[bands - k];

  std::vector<int> per_band(bands);
  for (int b = 0; 2 * b < bands; ++b) {
    const double mid = 0.5 * (edge[b] + edge[b + 1]);
    const int half_count = std::max(1, static_cast<int>(std::lround(std::numbers::pi * radius *
                                                                    std::sin(mid) / widths.yz)));
    per_band[b] = per_band[bands - 1 - b] = 2 * half_count;
  }

  ModeGrid g;
  g.widths = widths;
  g.radius = radius;
  g.band_offset.reserve(bands + 1);
  for (int b = 0; b < bands; ++b) {
    g.band_offset.push_back(static_cast<int>(g.cells.size()));
    const double c_hi = std::cos(edge[b]);
    const double c_lo = b + 1 == bands ? -1.0 : std::cos(edge[b + 1]);
    const int n = per_band[b];
    for (int j = 0; j < n; ++j) {
      ModeCell c;
      c.cos_hi = b == 0 ? 1.0 : c_hi;
      c.cos_lo = c_lo;
      c.phi_lo = kTwoPi * j / n;
      c.phi_hi = kTwoPi * (j + 1) / n;
      c.band = b;
      c.solid_angle = kTwoPi * (c.cos_hi - c.cos_lo) / n;
      g.cells.push_back(c);
    }
  }
  g.band_offset.push_back(static_cast<int>(g.cells.size()));
  if (g.cells.size() < 8) throw std::invalid_argument("mode widths too large: fewer than 8 cells");

  for (int b = 0; b < bands; ++b) {
    const int n = per_band[b];
    const int mirror = bands - 1 - b;
    for (int j = 0; j < n; ++j) {
      const int i = g.band_offset[b] + j;
      g.cells[i].partner = g.band_offset[mirror] + (j + n / 2) % n;
    }
  }
  for (int i = 0; i < static_cast<int>(g.cells.size()); ++i)
    if (i < g.cells[i].partner) g.pairs.emplace_back(i, g.cells[i].partner);

  double smallest = g.cells.front().solid_angle;
  for (const auto& c : g.cells) smallest = std::min(smallest, c.solid_angle);
  g.mode_offset.push_back(0);
  for (const auto& [a, b] : g.pairs) {
    const int k = std::max(1, static_cast<int>(std::lround(g.cells[a].solid_angle / smallest)));
    g.radial_modes.push_back(k);
    g.mode_offset.push_back(g.mode_offset.back() + k);
  }
  return g;
}

int ModeGrid::cell_of_mode(int m) const {
  const int pair_mode = m / 2;
  const auto it = std::upper_bound(mode_offset.begin(), mode_offset.end(), pair_mode);
  const auto p = static_cast<std::size_t>(it - mode_offset.begin()) - 1;
  return (m % 2 == 0) ? pairs[p].first : pairs[p].second;
}

void validate(const HaloConfig& cfg) {
  if (!(cfg.shell_radius > 0.0)) throw std::invalid_argument("shell_radius must be > 0");
  if (cfg.shell_rms_width < 0.0) throw std::invalid_argument("shell_rms_width must be >= 0");
  if (cfg.mode_widths.x < 0.0 || cfg.mode_widths.yz < 0.0)
    throw std::invalid_argument("mode widths must be >= 0");
  if (!(cfg.cell_scale > 0.0)) throw std::invalid_argument("cell_scale must be > 0");
  if (cfg.mean_occupation <= 0.0 && !(cfg.mean_scattered >= 0.0))
    throw std::invalid_argument("mean_scattered must be >= 0");
  if (cfg.shot_number_spread < 0.0) throw std::invalid_argument("shot_number_spread must be >= 0");
  if (cfg.n_shots < 0) throw std::invalid_argument("n_shots must be >= 0");
}

ModeWidths cell_widths(const HaloConfig& cfg) {
  return {cfg.cell_scale * cfg.mode_widths.x, cfg.cell_scale * cfg.mode_widths.yz};
}

double mean_occupation(const HaloConfig& cfg, const ModeGrid& grid) {
  if (cfg.mean_occupation > 0.0) return cfg.mean_occupation;
  return cfg.mean_scattered / (2.0 * static_cast<double>(grid.mode_pairs()));
}

double pair_occupation(const HaloConfig& cfg, const ModeGrid& grid, std::size_t pair) {
  const double n = mean_scattered(cfg, grid);
  return n * grid.cells[grid.pairs[pair].first].solid_angle /
         (4.0 * std::numbers::pi * grid.radial_modes[pair]);
}

double mean_scattered(const HaloConfig& cfg, const ModeGrid& grid) {
  return 2.0 * mean_occupation(cfg, grid) * static_cast<double>(grid.mode_pairs());
}

TrueShot sample_shot(const ModeGrid& grid, const HaloConfig& cfg, std::int64_t shot_id,
                     std::mt19937_64& rng) {
  TrueShot shot;
  shot.shot_id = shot_id;
  double scale = 1.0;
  if (cfg.shot_number_spread > 0.0) {
    const double s = cfg.shot_number_spread;
    scale = std::exp(gauss(rng, s) - 0.5 * s * s);
  }
  shot.occupation = scale * mean_occupation(cfg, grid);
  if (!(shot.occupation > 0.0)) return shot;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sx = cfg.mode_widths.x / std::numbers::sqrt2;
  const double syz = cfg.mode_widths.yz / std::numbers::sqrt2;
  const double r = cfg.shell_radius;
  const double var_r = cfg.shell_rms_width * cfg.shell_rms_width;

  for (std::size_t p = 0; p < grid.pairs.size(); ++p) {
    const double occ = scale * pair_occupation(cfg, grid, p);
    std::geometric_distribution<int> occupation(1.0 / (1.0 + occ));
    const ModeCell& cell = grid.cells[grid.pairs[p].first];
    for (int k = 0; k < grid.radial_modes[p]; ++k) {
      const int n = occupation(rng);
      if (n == 0) continue;
      const double ct = cell.cos_lo + (cell.cos_hi - cell.cos_lo) * unit(rng);
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      const double phi = cell.phi_lo + (cell.phi_hi - cell.phi_lo) * unit(rng);
      const Vec3 q{ct, st * std::cos(phi), st * std::sin(phi)};
      // Shared radial offset; together with the smear it gives radial rms = shell width.
      const double smear_radial = q.x * q.x * sx * sx + (q.y * q.y + q.z * q.z) * syz * syz;
      const double rho = gauss(rng, std::sqrt(std::max(0.0, var_r - smear_radial)));
      const Vec3 centre = q * (r + rho);
      const int mode = 2 * (grid.mode_offset[p] + k);
      for (int side = 0; side < 2; ++side) {
        const Vec3 c = side == 0 ? centre : -centre;
        for (int i = 0; i < n; ++i) {
          const Vec3 e{gauss(rng, sx), gauss(rng, syz), gauss(rng, syz)};
          shot.velocities.push_back(c + e);
          shot.modes.push_back(mode + side);
        }
      }
    }
  }
  return shot;
}

TrueShot sample_shot(const ModeGrid& grid, const HaloConfig& cfg, std::int64_t shot_id,
                     std::uint64_t master_seed) {
  auto rng = shot_rng(master_seed, shot_id, Stream::halo);
  return sample_shot(grid, cfg, shot_id, rng);
}

std::vector<TrueShot> simulate(const ModeGrid& grid, const HaloConfig& cfg, std::uint64_t master_seed) {
  validate(cfg);
  std::vector<TrueShot> shots(static_cast<std::size_t>(cfg.n_shots));
#pragma omp parallel for schedule(dynamic, 8)
  for (int s = 0; s < cfg.n_shots; ++s) shots[s] = sample_shot(grid, cfg, s, master_seed);
  return shots;
}

double scattered_fraction(double scattered, double total_atoms) {
  if (!(total_atoms > 0.0)) throw std::invalid_argument("total_atoms must be > 0");
  return scattered / total_atoms;
}

double produced_fraction(double t, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  if (t <= 0.0) return 0.0;
  return -std::expm1(-t / tau);
}

}  // namespace pairhalo::halo
