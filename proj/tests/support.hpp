#pragma once

#include <cmath>
#include <random>

#include "pairhalo/correlator.hpp"
#include "pairhalo/fitter.hpp"

namespace pairhalo::fixtures {

/// Exact model surface on the default layout, every bin valid with error `err`.
inline correlator::G2Map model_map(const fitter::G2FitParams& p, double err = 0.01,
                                   correlator::CorrelationConfig cfg = {}) {
  correlator::G2Map m;
  m.variable = cfg.variable;
  m.layout = correlator::BinLayout::from(cfg);
  const std::size_t n = m.layout.size();
  m.value.resize(n);
  m.error.assign(n, err);
  m.valid.assign(n, 1);
  m.same.assign(n, 0);
  m.cross.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) m.value[i] = fitter::eval_model(p, m.layout.centre(i));
  return m;
}

/// Uniform atoms in a shell of radius 1 and thickness 0.2.
inline correlator::ShotVelocities random_shots(int shots, int atoms, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(0.9, 1.1);
  std::poisson_distribution<int> count(atoms);
  correlator::ShotVelocities out(shots);
  for (auto& s : out) {
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      const Vec3 d = normalized(Vec3{n(rng), n(rng), n(rng)});
      s.push_back(d * r(rng));
    }
  }
  return out;
}

/// Shots of back-to-back pairs with Gaussian pair-sum residual of rms `width`
/// per axis, plus uncorrelated background atoms.
inline correlator::ShotVelocities paired_shots(int shots, int pairs, int background, double width,
                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::poisson_distribution<int> np(pairs), nb(background);
  correlator::ShotVelocities out(shots);
  const double h = width / std::sqrt(2.0);
  for (auto& s : out) {
    for (int i = np(rng); i > 0; --i) {
      const Vec3 d = normalized(Vec3{n(rng), n(rng), n(rng)});
      s.push_back(d + Vec3{h * n(rng), h * n(rng), h * n(rng)});
      s.push_back(-d + Vec3{h * n(rng), h * n(rng), h * n(rng)});
    }
    for (int i = nb(rng); i > 0; --i) s.push_back(normalized(Vec3{n(rng), n(rng), n(rng)}));
  }
  return out;
}

}  // namespace pairhalo::fixtures
