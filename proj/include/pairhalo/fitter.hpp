#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairhalo/correlator.hpp"

namespace pairhalo::fitter {

/// g2(V) = B + eta * exp(-Vx^2/2sx^2 - (Vy^2+Vz^2)/2syz^2); B = 1 unless fitted.
struct G2FitParams {
  double eta = 0.0;
  double sigma_x = 0.0;   // v_rec
  double sigma_yz = 0.0;  // v_rec
  double baseline = 1.0;
};

void validate(const G2FitParams& p);

double eval_model(const G2FitParams& p, const Vec3& v);

/// d model / d (eta, sigma_x, sigma_yz, baseline).
std::array<double, 4> model_gradient(const G2FitParams& p, const Vec3& v);

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  bool free_baseline = false;
  int max_iterations = 200;
  /// Refits with variances scaled by the current model (err^2 * g2), since
  /// counts inside the peak fluctuate in proportion to g2.
  int reweight_passes = 2;
  /// Hold sigma_x and sigma_yz at their starting values and fit only the
  /// height (and baseline). Used when the widths are known, e.g. for null maps.
  bool fixed_widths = false;
};

struct FitResult {
  G2FitParams params;
  G2FitParams errors;  // baseline error is 0 when it is not fitted
  std::vector<std::vector<double>> covariance;  // 4x4 over eta, sigma_x, sigma_yz, baseline; zero for fixed ones
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> objective_history;  // objective after each accepted step
  std::string variable;

  double reduced_chi2() const { return dof > 0 ? chi2 / dof : 0.0; }
};

/// Moment-based starting point; falls back to default_start with a warning
/// when the map has no positive central excess.
G2FitParams init_from_moments(const correlator::G2Map& map);

/// eta = 0.1 and widths of a fifth of the window.
G2FitParams default_start(const correlator::G2Map& map);

/// Bins used in the objective: valid ones, and for mirror-symmetric maps only
/// one of each pair k, -k.
std::vector<std::size_t> fit_bins(const correlator::G2Map& map);

/// Weighted Levenberg-Marquardt fit. Throws FitError when there are fewer than
/// ten valid bins per parameter or the curvature matrix is singular.
FitResult fit(const correlator::G2Map& map, const G2FitParams& init, const FitOptions& opts = {});
/// Fits from init_from_moments and from default_start and keeps the converged
/// fit with the lower chi2.
FitResult fit(const correlator::G2Map& map, const FitOptions& opts = {});

std::string to_json(const FitResult& r);
void write_fit_result(const std::filesystem::path& path, const FitResult& r);
FitResult read_fit_result(const std::filesystem::path& path);

/// CSV: kx,ky,kz,vx,vy,vz,g2,err,model,pull for every bin in the objective.
void write_residuals(const std::filesystem::path& path, const correlator::G2Map& map, const FitResult& r);

}  // namespace pairhalo::fitter
