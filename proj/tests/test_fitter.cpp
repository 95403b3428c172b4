#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pairhalo/event_io.hpp"
#include "pairhalo/fitter.hpp"
#include "support.hpp"

using namespace pairhalo;
using namespace pairhalo::fitter;

namespace {

const G2FitParams kCollinear{0.19, 0.017, 0.081};

/// Poisson map at a given accidental count per bin: same ~ Poisson(g * lambda),
/// cross ~ Poisson(lambda * ratio), normalised exactly as the correlator does.
correlator::G2Map poisson_map(const G2FitParams& p, double lambda, double ratio, std::uint64_t seed,
                              correlator::Variable var = correlator::Variable::sum) {
  correlator::CorrelationConfig cfg;
  cfg.variable = var;
  correlator::PairHistogram3D same, cross;
  same.variable = cross.variable = var;
  same.layout = cross.layout = correlator::BinLayout::from(cfg);
  const std::size_t n = same.layout.size();
  same.counts.resize(n);
  cross.counts.resize(n);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    same.counts[i] = std::poisson_distribution<std::uint64_t>(eval_model(p, same.layout.centre(i)) * lambda)(rng);
    cross.counts[i] = std::poisson_distribution<std::uint64_t>(lambda * ratio)(rng);
  }
  same.total_pairs = 1000000;
  cross.total_pairs = static_cast<std::uint64_t>(1000000 * ratio);
  return correlator::normalize(same, cross);
}

}  // namespace

TEST(Fitter, ModelValues) {
  EXPECT_DOUBLE_EQ(eval_model(kCollinear, {0, 0, 0}), 1.19);
  EXPECT_NEAR(eval_model(kCollinear, {5, 5, 5}), 1.0, 1e-15);
  EXPECT_NEAR(eval_model(kCollinear, {0.017, 0, 0}), 1.0 + 0.19 * std::exp(-0.5), 1e-15);
  EXPECT_NEAR(eval_model(kCollinear, {0.017, 0, 0}), 1.1152, 1e-4);
  G2FitParams b = kCollinear;
  b.baseline = 0.9;
  EXPECT_DOUBLE_EQ(eval_model(b, {0, 0, 0}), 1.09);
}

TEST(Fitter, ParameterValidation) {
  EXPECT_THROW(validate(G2FitParams{-1.0, 0.01, 0.01}), std::invalid_argument);
  EXPECT_THROW(validate(G2FitParams{0.1, 0.0, 0.01}), std::invalid_argument);
  EXPECT_THROW(validate(G2FitParams{0.1, 0.01, -0.01}), std::invalid_argument);
  EXPECT_NO_THROW(validate(kCollinear));
}

TEST(Fitter, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> eta(0.05, 2.0), sx(0.005, 0.05), syz(0.02, 0.2), b(0.8, 1.2), v(-0.1, 0.1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const G2FitParams p{eta(rng), sx(rng), syz(rng), b(rng)};
    const Vec3 at{v(rng) * 0.5, v(rng), v(rng)};
    const auto g = model_gradient(p, at);
    const std::array<double, 4> x{p.eta, p.sigma_x, p.sigma_yz, p.baseline};
    for (int a = 0; a < 4; ++a) {
      const double h = 1e-4 * x[a];
      // Differencing the peak term alone avoids cancellation against the
      // baseline far in the tails; the baseline enters additively.
      auto shifted = [&](double d) {
        std::array<double, 4> y = x;
        y[a] += d;
        return eval_model({y[0], y[1], y[2], a == 3 ? y[3] : 0.0}, at);
      };
      // Richardson-extrapolated central differences, error O(h^4).
      auto central = [&](double step) { return (shifted(step) - shifted(-step)) / (2 * step); };
      const double fd = (4.0 * central(h / 2) - central(h)) / 3.0;
      const double scale = std::max(std::abs(g[a]), 1e-6);
      worst = std::max(worst, std::abs(fd - g[a]) / scale);
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Fitter, NoiselessRecovery) {
  const auto map = fixtures::model_map(kCollinear);
  const auto r = fit(map, G2FitParams{0.1, 0.03, 0.05});
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.params.eta / 0.19, 1.0, 1e-6);
  EXPECT_NEAR(r.params.sigma_x / 0.017, 1.0, 1e-6);
  EXPECT_NEAR(r.params.sigma_yz / 0.081, 1.0, 1e-6);
  EXPECT_EQ(r.params.baseline, 1.0);
  EXPECT_LT(r.chi2, 1e-12);
}

TEST(Fitter, NoiselessRecoveryFreeBaseline) {
  G2FitParams truth = kCollinear;
  truth.baseline = 1.03;
  const auto map = fixtures::model_map(truth);
  FitOptions o;
  o.free_baseline = true;
  const auto r = fit(map, o);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.params.baseline, 1.03, 1e-6);
  EXPECT_NEAR(r.params.eta / 0.19, 1.0, 1e-6);
}

TEST(Fitter, MomentStartWithinTwentyPercent) {
  const auto p = init_from_moments(fixtures::model_map(kCollinear));
  EXPECT_NEAR(p.eta / 0.19, 1.0, 0.2);
  EXPECT_NEAR(p.sigma_x / 0.017, 1.0, 0.2);
  EXPECT_NEAR(p.sigma_yz / 0.081, 1.0, 0.2);
}

TEST(Fitter, MomentStartFallsBack) {
  std::vector<std::string> warnings;
  io::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const auto flat = fixtures::model_map({0.0, 0.017, 0.081});
  const auto p = init_from_moments(flat);
  const auto dip = fixtures::model_map({-0.3, 0.017, 0.081});
  const auto q = init_from_moments(dip);
  io::set_warning_sink(nullptr);
  const auto d = default_start(flat);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_DOUBLE_EQ(p.eta, 0.1);
  EXPECT_DOUBLE_EQ(d.sigma_x, 0.1 / 5.0);
  EXPECT_DOUBLE_EQ(p.sigma_x, d.sigma_x);
  EXPECT_DOUBLE_EQ(q.sigma_yz, d.sigma_yz);
}

TEST(Fitter, ObjectiveNonIncreasing) {
  const auto map = poisson_map(kCollinear, 5.0, 1000.0, 3);
  const auto r = fit(map, G2FitParams{0.5, 0.04, 0.03});
  ASSERT_GT(r.objective_history.size(), 2u);
  for (std::size_t i = 1; i < r.objective_history.size(); ++i)
    EXPECT_LE(r.objective_history[i], r.objective_history[i - 1]);
}

TEST(Fitter, CovarianceSymmetricPsd) {
  const auto r = fit(poisson_map(kCollinear, 5.0, 1000.0, 4));
  ASSERT_TRUE(r.converged);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) EXPECT_DOUBLE_EQ(r.covariance[a][b], r.covariance[b][a]);
  for (int a = 0; a < 3; ++a) EXPECT_GT(r.covariance[a][a], 0.0);
  EXPECT_EQ(r.covariance[3][3], 0.0);
  // 3x3 leading block: all principal minors positive.
  const auto& c = r.covariance;
  const double m2 = c[0][0] * c[1][1] - c[0][1] * c[1][0];
  const double m3 = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) -
                    c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0]) +
                    c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
  EXPECT_GT(m2, 0.0);
  EXPECT_GT(m3, 0.0);
  EXPECT_NEAR(r.errors.eta, std::sqrt(c[0][0]), 1e-15);
}

TEST(Fitter, EquivariantUnderRescaling) {
  const auto base = poisson_map(kCollinear, 5.0, 1000.0, 5);
  correlator::CorrelationConfig scaled_cfg;
  const double s = 2.0;
  scaled_cfg.window = scaled_cfg.window * s;
  scaled_cfg.bin_width = scaled_cfg.bin_width * s;
  auto scaled = base;
  scaled.layout = correlator::BinLayout::from(scaled_cfg);
  const G2FitParams start{0.15, 0.02, 0.07};
  const auto a = fit(base, start);
  const auto b = fit(scaled, G2FitParams{start.eta, s * start.sigma_x, s * start.sigma_yz});
  ASSERT_TRUE(a.converged && b.converged);
  EXPECT_NEAR(b.params.eta / a.params.eta, 1.0, 1e-6);
  EXPECT_NEAR(b.params.sigma_x / a.params.sigma_x, s, 1e-6 * s);
  EXPECT_NEAR(b.params.sigma_yz / a.params.sigma_yz, s, 1e-6 * s);
  EXPECT_NEAR(b.chi2, a.chi2, 1e-8 * a.chi2);
}

TEST(Fitter, PoissonRecoveryIsCalibrated) {
  // Accidental pairs per bin at about the level of a 1100-shot run.
  double pull_eta = 0.0, pull_sx = 0.0, pull_syz = 0.0, mean_err = 0.0, mean_err_4x = 0.0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    const auto r = fit(poisson_map(kCollinear, 1.1, 1100.0, 100 + t));
    ASSERT_TRUE(r.converged);
    pull_eta += std::pow((r.params.eta - kCollinear.eta) / r.errors.eta, 2);
    pull_sx += std::pow((r.params.sigma_x - kCollinear.sigma_x) / r.errors.sigma_x, 2);
    pull_syz += std::pow((r.params.sigma_yz - kCollinear.sigma_yz) / r.errors.sigma_yz, 2);
    mean_err += r.errors.eta;
    mean_err_4x += fit(poisson_map(kCollinear, 4.4, 1100.0, 500 + t)).errors.eta;
  }
  EXPECT_NEAR(std::sqrt(pull_eta / trials), 1.0, 0.3);
  EXPECT_NEAR(std::sqrt(pull_sx / trials), 1.0, 0.3);
  EXPECT_NEAR(std::sqrt(pull_syz / trials), 1.0, 0.3);
  // Four times the counts halves the error.
  EXPECT_NEAR(mean_err / mean_err_4x, 2.0, 0.3);
}

TEST(Fitter, FixedWidths) {
  const auto map = poisson_map(kCollinear, 5.0, 1000.0, 6);
  FitOptions o;
  o.fixed_widths = true;
  const auto r = fit(map, kCollinear, o);
  EXPECT_EQ(r.params.sigma_x, kCollinear.sigma_x);
  EXPECT_EQ(r.params.sigma_yz, kCollinear.sigma_yz);
  EXPECT_EQ(r.errors.sigma_x, 0.0);
  EXPECT_GT(r.errors.eta, 0.0);
  EXPECT_EQ(r.dof, static_cast<int>(fit_bins(map).size()) - 1);
}

TEST(Fitter, MirrorMapsUseHalfSpace) {
  const auto map = poisson_map(kCollinear, 5.0, 1000.0, 7, correlator::Variable::diff);
  EXPECT_TRUE(map.mirror_symmetric);
  EXPECT_EQ(fit_bins(map).size(), (map.layout.size() + 1) / 2);
  const auto sum = poisson_map(kCollinear, 5.0, 1000.0, 7);
  EXPECT_EQ(fit_bins(sum).size(), sum.layout.size());
}

TEST(Fitter, TooFewBins) {
  auto map = fixtures::model_map(kCollinear);
  std::fill(map.valid.begin(), map.valid.end(), 0);
  for (int k = 0; k < 20; ++k) map.valid[k] = 1;
  EXPECT_THROW(fit(map, kCollinear), FitError);
}

TEST(Fitter, SingularCurvature) {
  // Only bins on the x axis: sigma_yz has no effect on the model there.
  auto map = fixtures::model_map(kCollinear);
  const auto& L = map.layout;
  std::fill(map.valid.begin(), map.valid.end(), 0);
  for (int k = -L.half[0]; k <= L.half[0]; ++k) map.valid[L.index(k, 0, 0)] = 1;
  EXPECT_THROW(fit(map, G2FitParams{0.1, 0.02, 0.05}), FitError);
}

TEST(Fitter, IterationLimitFlagged) {
  FitOptions o;
  o.max_iterations = 1;
  o.reweight_passes = 0;
  const auto r = fit(fixtures::model_map(kCollinear), G2FitParams{0.5, 0.05, 0.02}, o);
  EXPECT_FALSE(r.converged);
}

TEST(Fitter, ResultFilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pairhalo_fit_io";
  std::filesystem::create_directories(dir);
  const auto map = poisson_map(kCollinear, 5.0, 1000.0, 8);
  const auto r = fit(map);
  write_fit_result(dir / "f.json", r);
  const auto back = read_fit_result(dir / "f.json");
  EXPECT_EQ(back.params.eta, r.params.eta);
  EXPECT_EQ(back.params.sigma_yz, r.params.sigma_yz);
  EXPECT_EQ(back.errors.sigma_x, r.errors.sigma_x);
  EXPECT_EQ(back.covariance, r.covariance);
  EXPECT_EQ(back.chi2, r.chi2);
  EXPECT_EQ(back.dof, r.dof);
  EXPECT_EQ(back.converged, r.converged);
  EXPECT_EQ(back.variable, "sum");
  write_residuals(dir / "res.csv", map, r);
  std::ifstream in(dir / "res.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "kx,ky,kz,vx,vy,vz,g2,err,model,pull");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, fit_bins(map).size());
  std::filesystem::remove_all(dir);
}
