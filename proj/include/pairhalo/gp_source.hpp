#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairhalo/kinematics.hpp"

namespace pairhalo::gp {

/// Grid for the ground-state solver. A half extent of 0 means "choose from the
/// Thomas-Fermi (or oscillator) size", scaled by extent_factor.
struct GridSpec {
  int nx = 256;
  int ny = 32;
  int nz = 32;
  double half_extent_x = 0.0;     // m
  double half_extent_perp = 0.0;  // m
  double extent_factor = 3.0;     // half extent / Thomas-Fermi radius
};

/// Cylindrical trap, symmetry axis along x.
struct TrapConfig {
  double omega_x = 2.0 * std::numbers::pi * 47.0;        // rad/s
  double omega_perp = 2.0 * std::numbers::pi * 1150.0;   // rad/s
  double atom_number = 3.0e4;
  double scattering_length = 7.5e-9;                     // m
  GridSpec grid;
};

struct SolverOptions {
  double tolerance = 1e-11;   // relative energy change per step
  int max_iterations = 20000;
  double time_step = 0.1;     // units of 1/omega_perp
  int check_every = 10;
};

/// Ground state on the grid. psi is in SI units (m^-3/2), row-major with x
/// slowest, and sum |psi|^2 dV = atom_number.
struct GPSolution {
  TrapConfig trap;
  kinematics::PhysicalConstants constants;
  int nx = 0, ny = 0, nz = 0;
  double dx = 0.0, dy = 0.0, dz = 0.0;  // m
  std::vector<std::complex<double>> psi;
  double mu = 0.0;        // J
  double energy = 0.0;    // J per atom
  double residual = 0.0;  // relative energy change per step at exit
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy_history;  // J per atom, one per convergence check

  double cell_volume() const { return dx * dy * dz; }
  double norm() const;
};

/// Velocity widths of the source. v_x_rms, v_y_rms and v_z_rms are per-axis
/// rms values; v_yz_rms is the rms of the transverse (y,z) velocity vector,
/// sqrt(v_y_rms^2 + v_z_rms^2).
struct SourceMoments {
  double v_x_rms = 0.0;   // v_rec
  double v_yz_rms = 0.0;  // v_rec
  double v_y_rms = 0.0;
  double v_z_rms = 0.0;
  double mu = 0.0;           // J
  double sound_speed = 0.0;  // m/s
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void validate(const TrapConfig& cfg);

/// Thomas-Fermi radii (x, perp) in metres; falls back to 5 oscillator lengths for a = 0.
std::pair<double, double> characteristic_radii(const TrapConfig& cfg,
                                               const kinematics::PhysicalConstants& c);

/// Imaginary-time split-step Fourier relaxation to the ground state.
GPSolution solve_ground_state(const TrapConfig& cfg, const SolverOptions& opts = {},
                              const kinematics::PhysicalConstants& c = {});

/// Momentum-space rms widths of a converged solution, plus mu and c = sqrt(mu/m).
SourceMoments momentum_widths(const GPSolution& sol);

/// Oscillator ground-state velocity rms sqrt(hbar*omega/2m), in v_rec.
double harmonic_velocity_width(double omega, const kinematics::PhysicalConstants& c);

/// Extra shell width from adding mu to the scattered kinetic energy, in v_rec.
double mean_field_broadening(double mu, const kinematics::PhysicalConstants& c);

/// Relative collision velocity 2 v_rec over the sound speed.
double supersonic_check(const kinematics::PhysicalConstants& c, const SourceMoments& m);

}  // namespace pairhalo::gp
