#include "pairhalo/gp_source.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "pairhalo/parallel.hpp"

namespace pairhalo::gp {

namespace {

using cplx = std::complex<double>;

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

/// In-place forward/backward 3D transforms over one buffer.
class Fft3 {
 public:
  Fft3(int nx, int ny, int nz, std::vector<cplx>& buf) {
    auto* data = reinterpret_cast<fftw_complex*>(buf.data());
    forward_.reset(fftw_plan_dft_3d(nx, ny, nz, data, data, FFTW_FORWARD, FFTW_ESTIMATE));
    backward_.reset(fftw_plan_dft_3d(nx, ny, nz, data, data, FFTW_BACKWARD, FFTW_ESTIMATE));
    if (!forward_ || !backward_) throw std::runtime_error("FFTW plan creation failed");
  }
  void forward() { fftw_execute(forward_.get()); }
  void backward() { fftw_execute(backward_.get()); }

 private:
  Plan forward_;
  Plan backward_;
};

std::vector<double> wavenumbers(int n, double spacing) {
  std::vector<double> k(n);
  const double dk = 2.0 * std::numbers::pi / (n * spacing);
  for (int i = 0; i < n; ++i) k[i] = dk * (i < (n + 1) / 2 ? i : i - n);
  return k;
}

std::vector<double> coordinates(int n, double half_extent) {
  std::vector<double> x(n);
  const double d = 2.0 * half_extent / n;
  for (int i = 0; i < n; ++i) x[i] = -half_extent + d * i;
  return x;
}

/// Everything in oscillator units of the radial trap: length sqrt(hbar/m w_perp),
/// time 1/w_perp, energy hbar w_perp. psi is normalised to one.
struct Workspace {
  int nx, ny, nz;
  std::size_t size;
  double dx, dy, dz, dv;
  double lambda;       // w_x / w_perp
  double interaction;  // 4 pi a N / length
  std::vector<double> potential;
  std::vector<double> kinetic;  // k^2 / 2
  std::vector<cplx> psi;
  std::vector<cplx> scratch;

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * ny + j) * nz + k;
  }
};

struct Energies {
  double kinetic, trap, interaction;
  double total() const { return kinetic + trap + 0.5 * interaction; }
  double chemical_potential() const { return kinetic + trap + interaction; }
};

Energies evaluate(Workspace& w, Fft3& fft_scratch) {
  const std::size_t n = w.size;
  std::copy(w.psi.begin(), w.psi.end(), w.scratch.begin());
  fft_scratch.forward();
  const double knorm = chunked_sum(n, [&](std::size_t i) { return std::norm(w.scratch[i]); });
  const double kin = chunked_sum(n, [&](std::size_t i) { return w.kinetic[i] * std::norm(w.scratch[i]); });
  const double trap = chunked_sum(n, [&](std::size_t i) { return w.potential[i] * std::norm(w.psi[i]); });
  const double quartic = chunked_sum(n, [&](std::size_t i) {
    const double d = std::norm(w.psi[i]);
    return d * d;
  });
  return {kin / knorm, trap * w.dv, w.interaction * quartic * w.dv};
}

void normalise(Workspace& w) {
  const double s = chunked_sum(w.size, [&](std::size_t i) { return std::norm(w.psi[i]); }) * w.dv;
  const double f = 1.0 / std::sqrt(s);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w.size); ++i) w.psi[i] *= f;
}

double boundary_density_ratio(const Workspace& w) {
  double peak = 0.0;
  for (const auto& p : w.psi) peak = std::max(peak, std::norm(p));
  double edge = 0.0;
  for (int j = 0; j < w.ny; ++j)
    for (int k = 0; k < w.nz; ++k) edge = std::max(edge, std::norm(w.psi[w.index(0, j, k)]));
  for (int i = 0; i < w.nx; ++i)
    for (int k = 0; k < w.nz; ++k) edge = std::max(edge, std::norm(w.psi[w.index(i, 0, k)]));
  for (int i = 0; i < w.nx; ++i)
    for (int j = 0; j < w.ny; ++j) edge = std::max(edge, std::norm(w.psi[w.index(i, j, 0)]));
  return peak > 0.0 ? edge / peak : 1.0;
}

}  // namespace

void validate(const TrapConfig& cfg) {
  if (!(cfg.omega_x > 0.0) || !(cfg.omega_perp > 0.0))
    throw std::invalid_argument("trap frequencies must be > 0");
  if (!(cfg.atom_number >= 1.0)) throw std::invalid_argument("atom_number must be >= 1");
  if (!(cfg.scattering_length >= 0.0)) throw std::invalid_argument("scattering_length must be >= 0");
  const auto& g = cfg.grid;
  if (g.nx < 8 || g.ny < 8 || g.nz < 8) throw std::invalid_argument("grid needs >= 8 points per axis");
  if (g.half_extent_x < 0.0 || g.half_extent_perp < 0.0 || !(g.extent_factor >= 3.0))
    throw std::invalid_argument("grid must span at least 6 Thomas-Fermi radii");
}

std::pair<double, double> characteristic_radii(const TrapConfig& cfg,
                                               const kinematics::PhysicalConstants& c) {
  const double length = std::sqrt(c.hbar / (c.mass * cfg.omega_perp));
  const double lambda = cfg.omega_x / cfg.omega_perp;
  if (cfg.scattering_length <= 0.0) return {2.0 * length / std::sqrt(lambda), 2.0 * length};
  const double abar = length * std::pow(lambda, -1.0 / 6.0);
  const double mu = 0.5 * std::cbrt(lambda) *
                    std::pow(15.0 * cfg.atom_number * cfg.scattering_length / abar, 0.4);
  const double r_perp = std::sqrt(2.0 * mu);
  // Never smaller than the oscillator ground state.
  return {std::max(r_perp / lambda, 2.0 / std::sqrt(lambda)) * length,
          std::max(r_perp, 2.0) * length};
}

double GPSolution::norm() const {
  return chunked_sum(psi.size(), [&](std::size_t i) { return std::norm(psi[i]); }) * cell_volume();
}

GPSolution solve_ground_state(const TrapConfig& cfg, const SolverOptions& opts,
                              const kinematics::PhysicalConstants& c) {
  validate(cfg);
  if (!(opts.tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  if (opts.max_iterations < 1 || opts.check_every < 1 || !(opts.time_step > 0.0))
    throw std::invalid_argument("invalid solver options");

  const double length = std::sqrt(c.hbar / (c.mass * cfg.omega_perp));
  const auto [rx, rp] = characteristic_radii(cfg, c);
  const double hx = (cfg.grid.half_extent_x > 0.0 ? cfg.grid.half_extent_x
                                                  : cfg.grid.extent_factor * rx) / length;
  const double hp = (cfg.grid.half_extent_perp > 0.0 ? cfg.grid.half_extent_perp
                                                     : cfg.grid.extent_factor * rp) / length;
  if (hx * length < 3.0 * rx * (1.0 - 1e-12) || hp * length < 3.0 * rp * (1.0 - 1e-12))
    throw GridError("grid must span at least 6 Thomas-Fermi radii");

  Workspace w;
  w.nx = cfg.grid.nx;
  w.ny = cfg.grid.ny;
  w.nz = cfg.grid.nz;
  w.size = static_cast<std::size_t>(w.nx) * w.ny * w.nz;
  w.dx = 2.0 * hx / w.nx;
  w.dy = 2.0 * hp / w.ny;
  w.dz = 2.0 * hp / w.nz;
  w.dv = w.dx * w.dy * w.dz;
  w.lambda = cfg.omega_x / cfg.omega_perp;
  w.interaction = 4.0 * std::numbers::pi * cfg.scattering_length * cfg.atom_number / length;
  w.potential.resize(w.size);
  w.kinetic.resize(w.size);
  w.psi.resize(w.size);
  w.scratch.resize(w.size);

  const auto xs = coordinates(w.nx, hx), ys = coordinates(w.ny, hp), zs = coordinates(w.nz, hp);
  const auto kx = wavenumbers(w.nx, w.dx), ky = wavenumbers(w.ny, w.dy), kz = wavenumbers(w.nz, w.dz);

  // Thomas-Fermi chemical potential in oscillator units, used for the initial guess.
  const double mu_tf = w.interaction > 0.0
                           ? 0.5 * std::cbrt(w.lambda) *
                                 std::pow(15.0 * cfg.atom_number * cfg.scattering_length /
                                              (length * std::pow(w.lambda, -1.0 / 6.0)),
                                          0.4)
                           : 0.0;
  for (int i = 0; i < w.nx; ++i)
    for (int j = 0; j < w.ny; ++j)
      for (int k = 0; k < w.nz; ++k) {
        const std::size_t id = w.index(i, j, k);
        const double v = 0.5 * (w.lambda * w.lambda * xs[i] * xs[i] + ys[j] * ys[j] + zs[k] * zs[k]);
        w.potential[id] = v;
        w.kinetic[id] = 0.5 * (kx[i] * kx[i] + ky[j] * ky[j] + kz[k] * kz[k]);
        const double gauss = std::exp(-0.5 * (w.lambda * xs[i] * xs[i] + ys[j] * ys[j] + zs[k] * zs[k]));
        const double tf = w.interaction > 0.0 ? std::max(mu_tf - v, 0.0) / w.interaction : 0.0;
        w.psi[id] = std::sqrt(tf) + (w.interaction > 0.0 ? 1e-3 : 1.0) * gauss;
      }
  normalise(w);

  Fft3 fft_psi(w.nx, w.ny, w.nz, w.psi);
  Fft3 fft_scratch(w.nx, w.ny, w.nz, w.scratch);

  double dt = opts.time_step;
  std::vector<double> half_trap(w.size), kin_step(w.size);
  auto set_step = [&](double step) {
    const double inv_n = 1.0 / static_cast<double>(w.size);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w.size); ++i) {
      half_trap[i] = std::exp(-0.5 * step * w.potential[i]);
      kin_step[i] = std::exp(-step * w.kinetic[i]) * inv_n;
    }
  };
  set_step(dt);

  auto half_potential_step = [&] {
    const double a = -0.5 * dt * w.interaction;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w.size); ++i)
      w.psi[i] *= half_trap[i] * std::exp(a * std::norm(w.psi[i]));
  };

  GPSolution sol;
  Energies e = evaluate(w, fft_scratch);
  double e_prev = e.total();
  sol.energy_history.push_back(e_prev);
  std::vector<cplx> saved = w.psi;
  double residual = 1.0;
  int it = 0;
  while (it < opts.max_iterations) {
    for (int s = 0; s < opts.check_every && it < opts.max_iterations; ++s, ++it) {
      half_potential_step();
      fft_psi.forward();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w.size); ++i) w.psi[i] *= kin_step[i];
      fft_psi.backward();
      half_potential_step();
      normalise(w);
    }
    e = evaluate(w, fft_scratch);
    const double e_new = e.total();
    if (e_new > e_prev + 1e-12 * std::abs(e_prev)) {
      // Splitting error dominates: roll back and halve the step.
      w.psi = saved;
      dt *= 0.5;
      set_step(dt);
      if (dt < 1e-8 * opts.time_step) break;
      continue;
    }
    residual = (e_prev - e_new) / (std::abs(e_new) * opts.check_every);
    e_prev = e_new;
    sol.energy_history.push_back(e_new);
    saved = w.psi;
    if (residual < opts.tolerance) break;
  }
  sol.iterations = it;
  sol.residual = residual;
  if (residual >= opts.tolerance) {
    std::ostringstream msg;
    msg << "ground state did not converge in " << it << " iterations (residual " << residual << ")";
    throw ConvergenceError(msg.str(), residual);
  }
  const double edge = boundary_density_ratio(w);
  if (edge > 1e-6) {
    std::ostringstream msg;
    msg << "grid too small: boundary density is " << edge << " of peak";
    throw GridError(msg.str());
  }

  const double e_unit = c.hbar * cfg.omega_perp;
  sol.trap = cfg;
  sol.constants = c;
  sol.nx = w.nx;
  sol.ny = w.ny;
  sol.nz = w.nz;
  sol.dx = w.dx * length;
  sol.dy = w.dy * length;
  sol.dz = w.dz * length;
  sol.mu = e.chemical_potential() * e_unit;
  sol.energy = e.total() * e_unit;
  for (double& h : sol.energy_history) h *= e_unit;
  sol.converged = true;
  const double scale = std::sqrt(cfg.atom_number / (length * length * length));
  sol.psi.resize(w.size);
  for (std::size_t i = 0; i < w.size; ++i) sol.psi[i] = w.psi[i] * scale;
  return sol;
}

SourceMoments momentum_widths(const GPSolution& sol) {
  if (!sol.converged || sol.psi.empty()) throw std::invalid_argument("solution is not converged");
  std::vector<cplx> buf = sol.psi;
  Fft3 fft(sol.nx, sol.ny, sol.nz, buf);
  fft.forward();
  const auto kx = wavenumbers(sol.nx, sol.dx), ky = wavenumbers(sol.ny, sol.dy),
             kz = wavenumbers(sol.nz, sol.dz);
  const std::size_t plane = static_cast<std::size_t>(sol.ny) * sol.nz;
  auto kx_of = [&](std::size_t i) { return kx[i / plane]; };
  auto ky_of = [&](std::size_t i) { return ky[(i / sol.nz) % sol.ny]; };
  auto kz_of = [&](std::size_t i) { return kz[i % sol.nz]; };
  const std::size_t n = buf.size();
  const double total = chunked_sum(n, [&](std::size_t i) { return std::norm(buf[i]); });
  auto rms = [&](auto k_of) {
    const double m1 = chunked_sum(n, [&](std::size_t i) { return k_of(i) * std::norm(buf[i]); }) / total;
    const double m2 =
        chunked_sum(n, [&](std::size_t i) { return k_of(i) * k_of(i) * std::norm(buf[i]); }) / total;
    return std::sqrt(std::max(m2 - m1 * m1, 0.0));
  };
  const auto& c = sol.constants;
  const double to_vrec = c.hbar / c.mass / c.recoil_velocity();
  SourceMoments m;
  m.v_x_rms = rms(kx_of) * to_vrec;
  m.v_y_rms = rms(ky_of) * to_vrec;
  m.v_z_rms = rms(kz_of) * to_vrec;
  m.v_yz_rms = std::hypot(m.v_y_rms, m.v_z_rms);
  m.mu = sol.mu;
  m.sound_speed = std::sqrt(std::max(sol.mu, 0.0) / c.mass);
  return m;
}

double harmonic_velocity_width(double omega, const kinematics::PhysicalConstants& c) {
  return std::sqrt(c.hbar * omega / (2.0 * c.mass)) / c.recoil_velocity();
}

double mean_field_broadening(double mu, const kinematics::PhysicalConstants& c) {
  if (mu < 0.0) throw std::invalid_argument("chemical potential must be >= 0");
  const double v = c.recoil_velocity();
  return (std::sqrt(v * v + 2.0 * mu / c.mass) - v) / v;
}

double supersonic_check(const kinematics::PhysicalConstants& c, const SourceMoments& m) {
  if (!(m.sound_speed > 0.0)) throw std::domain_error("sound speed must be > 0");
  return 2.0 * c.recoil_velocity() / m.sound_speed;
}

}  // namespace pairhalo::gp
