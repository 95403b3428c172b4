#pragma once

#include <vector>

#include "pairhalo/correlator.hpp"
#include "pairhalo/detector.hpp"
#include "pairhalo/fitter.hpp"

namespace pairhalo::stats {

/// Ratio of true pairs to random coincidences for a shell of volume V holding
/// N atoms in modes of volume dV. Volumes in v_rec^3.
struct PeakHeightModel {
  double shell_volume = 0.0;
  double correlation_volume = 0.0;
  double scattered = 0.0;
};

void validate(const PeakHeightModel& m);

/// eta = V / (N dV). Throws std::invalid_argument for N = 0.
double peak_height_bb(const PeakHeightModel& m);

/// Gaussian-equivalent volume (2 pi)^(3/2) sx syz^2.
double correlation_volume(const fitter::G2FitParams& p);

/// Shell of radius r whose radial profile is a Gaussian of rms sigma_r: the
/// effective thickness is 2 sqrt(pi) sigma_r, and V = 4 pi r^2 times that.
double shell_thickness(double radial_rms);
double shell_volume(double radius, double thickness);

struct EtaBin {
  double mean_count = 0.0;  // detected atoms per shot in the bin
  int shots = 0;
  std::uint64_t pairs = 0;  // same-shot pairs in the window
  bool ok = false;
  std::string note;
  fitter::FitResult fit;
};

/// Split shots by detected count into n_bins quantile bins and fit the SUM
/// correlation of each. Bins with fewer than min_shots shots or a failed fit
/// come back with ok = false. With `widths`, each bin fits only eta with the
/// widths held at those values; otherwise all three are free.
std::vector<EtaBin> eta_vs_n(const correlator::ShotVelocities& shots, int n_bins,
                             const correlator::CorrelationConfig& cfg, int min_shots = 100,
                             const fitter::G2FitParams* widths = nullptr);

struct CauchySchwarz {
  double ratio = 0.0;         // (1 + eta_BB) / (1 + eta_CL)
  bool violated = false;      // eta_BB > eta_CL
  double significance = 0.0;  // (eta_BB - eta_CL) / combined error
};

/// Throws std::invalid_argument if either fit did not converge.
CauchySchwarz cauchy_schwarz(const fitter::FitResult& bb, const fitter::FitResult& cl);

/// Antipodal zone pairs: each entry is the "+" cap; its partner is the cap
/// around the opposite direction with the same half angle.
using Zone = detector::ExclusionZone;
struct ZonePairSpec {
  std::vector<Zone> zones;
};

/// Zones along directions in the y-z plane clear of the standard exclusions.
ZonePairSpec default_zone_pairs(double half_angle = 0.3);

struct NumberDifference {
  double value = 0.0;  // Var(N+ - N-) / <N+ + N->
  double error = 0.0;  // jackknife over shots
  double mean_sum = 0.0;
  long samples = 0;    // (shot, zone pair) samples
  bool empty = false;  // no atoms in any zone
};

NumberDifference number_difference_variance(const correlator::ShotVelocities& shots, const ZonePairSpec& zones);

}  // namespace pairhalo::stats
