#include "pairhalo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace pairhalo::stats {

void validate(const PeakHeightModel& m) {
  if (!(m.shell_volume > 0.0) || !(m.correlation_volume > 0.0))
    throw std::invalid_argument("volumes must be > 0");
  if (!(m.scattered > 0.0)) throw std::invalid_argument("scattered number must be > 0");
}

double peak_height_bb(const PeakHeightModel& m) {
  validate(m);
  return m.shell_volume / (m.scattered * m.correlation_volume);
}

double correlation_volume(const fitter::G2FitParams& p) {
  if (!(p.sigma_x > 0.0) || !(p.sigma_yz > 0.0)) throw std::invalid_argument("widths must be > 0");
  return std::pow(2.0 * std::numbers::pi, 1.5) * p.sigma_x * p.sigma_yz * p.sigma_yz;
}

double shell_thickness(double radial_rms) {
  if (!(radial_rms > 0.0)) throw std::invalid_argument("radial rms must be > 0");
  return 2.0 * std::sqrt(std::numbers::pi) * radial_rms;
}

double shell_volume(double radius, double thickness) {
  if (!(radius > 0.0) || !(thickness > 0.0)) throw std::invalid_argument("shell radius and thickness must be > 0");
  return 4.0 * std::numbers::pi * radius * radius * thickness;
}

std::vector<EtaBin> eta_vs_n(const correlator::ShotVelocities& shots, int n_bins,
                             const correlator::CorrelationConfig& cfg, int min_shots,
                             const fitter::G2FitParams* widths) {
  if (n_bins < 1) throw std::invalid_argument("n_bins must be >= 1");
  std::vector<std::size_t> order(shots.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return shots[a].size() < shots[b].size(); });

  std::vector<EtaBin> bins(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    const std::size_t lo = order.size() * k / n_bins, hi = order.size() * (k + 1) / n_bins;
    correlator::ShotVelocities sub;
    double count = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sub.push_back(shots[order[i]]);
      count += static_cast<double>(shots[order[i]].size());
    }
    EtaBin& b = bins[k];
    b.shots = static_cast<int>(sub.size());
    b.mean_count = sub.empty() ? 0.0 : count / static_cast<double>(sub.size());
    if (b.shots < min_shots) {
      b.note = "too few shots";
      continue;
    }
    try {
      const auto same = correlator::same_shot_histogram(sub, cfg);
      const auto cross = correlator::cross_shot_histogram(sub, cfg);
      b.pairs = same.in_window;
      if (same.in_window == 0) {
        b.note = "no pairs in window";
        continue;
      }
      const auto map = correlator::normalize(same, cross);
      if (widths) {
        fitter::FitOptions opts;
        opts.fixed_widths = true;
        b.fit = fitter::fit(map, *widths, opts);
      } else {
        b.fit = fitter::fit(map);
      }
      b.ok = b.fit.converged;
      if (!b.ok) b.note = "fit did not converge";
    } catch (const std::exception& e) {
      b.note = e.what();
    }
  }
  return bins;
}

CauchySchwarz cauchy_schwarz(const fitter::FitResult& bb, const fitter::FitResult& cl) {
  if (!bb.converged || !cl.converged) throw std::invalid_argument("both fits must have converged");
  CauchySchwarz r;
  r.ratio = (1.0 + bb.params.eta) / (1.0 + cl.params.eta);
  r.violated = bb.params.eta > cl.params.eta;
  const double err = std::hypot(bb.errors.eta, cl.errors.eta);
  const double diff = bb.params.eta - cl.params.eta;
  r.significance = err > 0.0 ? diff / err : (diff == 0.0 ? 0.0 : std::copysign(HUGE_VAL, diff));
  return r;
}

ZonePairSpec default_zone_pairs(double half_angle) {
  const double s = std::numbers::sqrt2 / 2.0;
  return {{{{0, 1, 0}, half_angle}, {{0, s, s}, half_angle}, {{0, s, -s}, half_angle}}};
}

NumberDifference number_difference_variance(const correlator::ShotVelocities& shots, const ZonePairSpec& spec) {
  if (spec.zones.empty()) throw std::invalid_argument("no zone pairs");
  // Per-shot sums of D, D^2, S over zone pairs, for a leave-one-shot-out jackknife.
  const std::size_t n = shots.size();
  std::vector<double> d1(n, 0.0), d2(n, 0.0), s1(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& z : spec.zones) {
      const Zone minus{-z.direction, z.half_angle};
      long plus_n = 0, minus_n = 0;
      for (const auto& v : shots[s]) {
        if (z.contains(v)) ++plus_n;
        else if (minus.contains(v)) ++minus_n;
      }
      const double d = static_cast<double>(plus_n - minus_n);
      d1[s] += d;
      d2[s] += d * d;
      s1[s] += static_cast<double>(plus_n + minus_n);
    }
  NumberDifference out;
  const double m = static_cast<double>(spec.zones.size());
  out.samples = static_cast<long>(n * spec.zones.size());
  const double D1 = std::accumulate(d1.begin(), d1.end(), 0.0);
  const double D2 = std::accumulate(d2.begin(), d2.end(), 0.0);
  const double S1 = std::accumulate(s1.begin(), s1.end(), 0.0);
  if (n == 0 || S1 == 0.0) {
    out.empty = true;
    return out;
  }
  auto estimate = [&](double a, double b, double c, double count) {
    const double mean_d = a / count;
    const double var = b / count - mean_d * mean_d;
    return var / (c / count);
  };
  const double total = static_cast<double>(n) * m;
  out.value = estimate(D1, D2, S1, total);
  out.mean_sum = S1 / total;
  if (n > 1) {
    double mean_loo = 0.0;
    std::vector<double> loo(n);
    for (std::size_t s = 0; s < n; ++s) {
      const double c = S1 - s1[s];
      loo[s] = c > 0.0 ? estimate(D1 - d1[s], D2 - d2[s], c, total - m) : out.value;
      mean_loo += loo[s];
    }
    mean_loo /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : loo) ss += (x - mean_loo) * (x - mean_loo);
    out.error = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return out;
}

}  // namespace pairhalo::stats
