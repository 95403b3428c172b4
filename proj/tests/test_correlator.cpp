#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <omp.h>

#include "pairhalo/correlator.hpp"
#include "support.hpp"

using namespace pairhalo;
using namespace pairhalo::correlator;

namespace {

/// Independent brute-force histogram: every pair, key computed and binned by hand.
struct Brute {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;
};

Brute brute_force(const ShotVelocities& shots, const CorrelationConfig& cfg, bool same) {
  const int hx = static_cast<int>(std::lround(cfg.window.x / cfg.bin_width.x));
  const int hy = static_cast<int>(std::lround(cfg.window.y / cfg.bin_width.y));
  const int hz = static_cast<int>(std::lround(cfg.window.z / cfg.bin_width.z));
  const int nx = 2 * hx + 1, ny = 2 * hy + 1, nz = 2 * hz + 1;
  Brute b;
  b.counts.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
  auto put = [&](const Vec3& key) {
    const long kx = std::lround(std::floor(key.x / cfg.bin_width.x + 0.5));
    const long ky = std::lround(std::floor(key.y / cfg.bin_width.y + 0.5));
    const long kz = std::lround(std::floor(key.z / cfg.bin_width.z + 0.5));
    if (std::abs(kx) > hx || std::abs(ky) > hy || std::abs(kz) > hz) return;
    ++b.counts[((kx + hx) * ny + (ky + hy)) * nz + (kz + hz)];
  };
  for (std::size_t s = 0; s < shots.size(); ++s)
    for (std::size_t t = same ? s : s + 1; t < (same ? s + 1 : shots.size()); ++t)
      for (std::size_t i = 0; i < shots[s].size(); ++i)
        for (std::size_t j = (same ? i + 1 : 0); j < shots[t].size(); ++j) {
          const Vec3& a = shots[s][i];
          const Vec3& c = shots[t][j];
          if (cfg.variable == Variable::sum) {
            put(a + c);
            ++b.total;
          } else {
            put(a - c);
            put(c - a);
            b.total += 2;
          }
        }
  return b;
}

CorrelationConfig config(Variable v) {
  CorrelationConfig c;
  c.variable = v;
  return c;
}

}  // namespace

TEST(Correlator, LayoutIsOddAndCentred) {
  const auto L = BinLayout::from({});
  for (int a = 0; a < 3; ++a) EXPECT_EQ(L.count(a) % 2, 1);
  EXPECT_EQ(L.half[0], 20);
  EXPECT_EQ(L.half[1], 25);
  EXPECT_EQ(L.centre(L.index(0, 0, 0)), (Vec3{0, 0, 0}));
  for (std::size_t i = 0; i < L.size(); i += 97) {
    const auto k = L.offsets(i);
    EXPECT_EQ(L.index(k[0], k[1], k[2]), i);
  }
  CorrelationConfig bad;
  bad.bin_width.x = 0.003;
  EXPECT_THROW(BinLayout::from(bad), std::invalid_argument);
}

TEST(Correlator, OppositeAtomsHitCentre) {
  const ShotVelocities shots{{{0.3, -0.5, 0.8}, {-0.3, 0.5, -0.8}}};
  const auto h = same_shot_histogram(shots, config(Variable::sum));
  EXPECT_EQ(h.in_window, 1u);
  EXPECT_EQ(h.total_pairs, 1u);
  EXPECT_EQ(h.counts[h.layout.index(0, 0, 0)], 1u);
}

TEST(Correlator, SameShotMatchesBruteForce) {
  for (Variable v : {Variable::sum, Variable::diff}) {
    // Dense pairs so that many land in the window.
    const auto shots = fixtures::paired_shots(10, 40, 20, 0.05, 3);
    const auto cfg = config(v);
    const auto h = same_shot_histogram(shots, cfg);
    const auto b = brute_force(shots, cfg, true);
    EXPECT_EQ(h.counts, b.counts) << to_string(v);
    EXPECT_EQ(h.total_pairs, b.total);
    EXPECT_EQ(h, reference::same_shot_histogram(shots, cfg));
    EXPECT_GT(h.in_window, 50u);
  }
}

TEST(Correlator, CrossShotMatchesBruteForce) {
  for (Variable v : {Variable::sum, Variable::diff}) {
    const auto shots = fixtures::paired_shots(5, 5, 0, 0.05, 4);
    const auto cfg = config(v);
    const auto h = cross_shot_histogram(shots, cfg);
    const auto b = brute_force(shots, cfg, false);
    EXPECT_EQ(h.counts, b.counts);
    EXPECT_EQ(h.total_pairs, b.total);
    EXPECT_EQ(h, reference::cross_shot_histogram(shots, cfg));
  }
}

TEST(Correlator, ThousandAtomsBinExact) {
  for (Variable v : {Variable::sum, Variable::diff}) {
    const auto shots = fixtures::paired_shots(8, 60, 5, 0.08, 10);
    const auto cfg = config(v);
    std::size_t atoms = 0;
    for (const auto& s : shots) atoms += s.size();
    ASSERT_LE(atoms, 1000u);
    EXPECT_EQ(same_shot_histogram(shots, cfg).counts, brute_force(shots, cfg, true).counts);
    EXPECT_EQ(cross_shot_histogram(shots, cfg).counts, brute_force(shots, cfg, false).counts);
  }
}

TEST(Correlator, ShotsOutsideSearchCellsAgree) {
  // Coordinates far from the unit shell and keys near bin edges.
  ShotVelocities shots(3);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (auto& s : shots)
    for (int i = 0; i < 200; ++i) s.push_back({u(rng), u(rng), u(rng)});
  shots[0].push_back({0.0025, 0.005, -0.005});
  shots[1].push_back({-0.0025, -0.005, 0.005});
  for (Variable v : {Variable::sum, Variable::diff}) {
    const auto cfg = config(v);
    EXPECT_EQ(same_shot_histogram(shots, cfg).counts, brute_force(shots, cfg, true).counts);
    EXPECT_EQ(cross_shot_histogram(shots, cfg).counts, brute_force(shots, cfg, false).counts);
  }
}

TEST(Correlator, DuplicatedShotCrossCentre) {
  const auto one = fixtures::paired_shots(1, 30, 0, 0.0, 12);
  const ShotVelocities two{one[0], one[0]};
  const auto cfg = config(Variable::sum);
  const auto same = same_shot_histogram(one, cfg);
  const auto cross = cross_shot_histogram(two, cfg);
  const std::size_t c = same.layout.index(0, 0, 0);
  // Each opposite pair (a, b) appears as (a from shot 0, b from shot 1) and the reverse.
  EXPECT_EQ(cross.counts[c], 2 * same.counts[c]);
  EXPECT_EQ(same.counts[c], one[0].size() / 2);
  EXPECT_GT(same.counts[c], 0u);
}

TEST(Correlator, SingleShotCrossIsError) {
  const auto shots = fixtures::random_shots(1, 10, 1);
  EXPECT_THROW(cross_shot_histogram(shots, config(Variable::sum)), std::invalid_argument);
  EXPECT_THROW(reference::cross_shot_histogram(shots, config(Variable::sum)), std::invalid_argument);
}

TEST(Correlator, SumInvariantUnderInversion) {
  auto shots = fixtures::paired_shots(20, 30, 30, 0.05, 14);
  const auto cfg = config(Variable::sum);
  const auto a = same_shot_histogram(shots, cfg);
  for (auto& s : shots)
    for (auto& v : s) v = -v;
  const auto b = same_shot_histogram(shots, cfg);
  // Inversion maps bin k to bin -k; the inverted histogram must be the mirror image.
  const auto& L = a.layout;
  for (std::size_t i = 0; i < L.size(); ++i) {
    const auto k = L.offsets(i);
    const std::size_t j = L.index(-k[0], -k[1], -k[2]);
    // Keys on exact bin edges may round differently after negation; none occur here.
    EXPECT_EQ(a.counts[i], b.counts[j]);
  }
  EXPECT_EQ(a.in_window, b.in_window);
}

TEST(Correlator, DiffSymmetricUnderPairSwap) {
  const auto shots = fixtures::random_shots(30, 40, 15);
  const auto h = same_shot_histogram(shots, config(Variable::diff));
  const auto& L = h.layout;
  for (std::size_t i = 0; i < L.size(); ++i) {
    const auto k = L.offsets(i);
    EXPECT_EQ(h.counts[i], h.counts[L.index(-k[0], -k[1], -k[2])]);
  }
  // Reversing atom order within shots swaps every pair.
  auto rev = shots;
  for (auto& s : rev) std::reverse(s.begin(), s.end());
  EXPECT_EQ(same_shot_histogram(rev, config(Variable::diff)), h);
}

TEST(Correlator, ThreadCountIndependent) {
  const auto shots = fixtures::paired_shots(200, 30, 30, 0.05, 16);
  for (Variable v : {Variable::sum, Variable::diff}) {
    const auto cfg = config(v);
    const int threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = same_shot_histogram(shots, cfg);
    const auto ca = cross_shot_histogram(shots, cfg);
    omp_set_num_threads(4);
    const auto b = same_shot_histogram(shots, cfg);
    const auto cb = cross_shot_histogram(shots, cfg);
    omp_set_num_threads(threads);
    EXPECT_EQ(a, b);
    EXPECT_EQ(ca, cb);
  }
}

TEST(Correlator, ShellGate) {
  CorrelationConfig cfg;
  cfg.shell_gate = 0.05;
  const ShotVelocities shots{{{1.0, 0, 0}, {0, 1.2, 0}, {0, 0, -0.96}}};
  const auto g = gate(shots, cfg);
  ASSERT_EQ(g[0].size(), 2u);
  cfg.shell_gate = 0.0;
  EXPECT_EQ(gate(shots, cfg)[0].size(), 3u);
}

TEST(G2Map, ProportionalGivesUnity) {
  PairHistogram3D same, cross;
  same.layout = cross.layout = BinLayout::from({});
  same.counts.assign(same.layout.size(), 0);
  cross.counts.assign(cross.layout.size(), 0);
  for (std::size_t i = 0; i < same.counts.size(); ++i) {
    same.counts[i] = 3 * (i % 7 + 1);
    cross.counts[i] = 12 * (i % 7 + 1);
  }
  same.total_pairs = 1000;
  cross.total_pairs = 4000;
  const auto m = normalize(same, cross);
  for (std::size_t i = 0; i < m.value.size(); ++i) {
    EXPECT_TRUE(m.valid[i]);
    EXPECT_DOUBLE_EQ(m.value[i], 1.0);
    // Poisson error at the accidental level: (1/c)(1 + P_cross/P_same).
    EXPECT_NEAR(m.error[i], std::sqrt((1.0 + 4.0) / cross.counts[i]), 1e-12);
  }
}

TEST(G2Map, ZeroNormalisationIsInvalid) {
  PairHistogram3D same, cross;
  same.layout = cross.layout = BinLayout::from({});
  same.counts.assign(same.layout.size(), 1);
  cross.counts.assign(cross.layout.size(), 0);
  cross.counts[5] = 2;
  same.total_pairs = cross.total_pairs = 10;
  const auto m = normalize(same, cross);
  EXPECT_EQ(m.valid_bins(), 1u);
  for (std::size_t i = 0; i < m.value.size(); ++i) EXPECT_TRUE(std::isfinite(m.value[i]));
  PairHistogram3D other = cross;
  other.variable = Variable::diff;
  EXPECT_THROW(normalize(same, other), std::invalid_argument);
}

TEST(G2Map, PairedShotsShowPeak) {
  const auto shots = fixtures::paired_shots(400, 20, 40, 0.01, 17);
  const auto cfg = config(Variable::sum);
  const auto m = normalize(same_shot_histogram(shots, cfg), cross_shot_histogram(shots, cfg));
  const auto& L = m.layout;
  EXPECT_GT(m.value[L.index(0, 0, 0)], 1.5);
  // Far from the peak the map sits at 1.
  double chi2 = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    const Vec3 c = L.centre(i);
    if (!m.valid[i] || norm(c) < 0.2 || std::abs(c.x) < 0.08) continue;
    const double p = (m.value[i] - 1.0) / m.error[i];
    chi2 += p * p;
    ++n;
  }
  ASSERT_GT(n, 1000);
  EXPECT_NEAR(chi2 / n, 1.0, 0.1);
}

TEST(G2Map, UncorrelatedShotsAreFlat) {
  const auto shots = fixtures::random_shots(400, 80, 18);
  for (Variable v : {Variable::sum, Variable::diff}) {
    const auto cfg = config(v);
    const auto m = normalize(same_shot_histogram(shots, cfg), cross_shot_histogram(shots, cfg));
    double chi2 = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < m.layout.size(); ++i) {
      if (!m.valid[i] || m.cross[i] < 20) continue;
      const double p = (m.value[i] - 1.0) / m.error[i];
      chi2 += p * p;
      ++n;
    }
    ASSERT_GT(n, 1000);
    EXPECT_NEAR(chi2 / n, 1.0, 0.15) << to_string(v);
  }
}

TEST(G2Map, ProjectionOfModelSurface) {
  const fitter::G2FitParams p{0.19, 0.017, 0.081};
  const auto m = fixtures::model_map(p);
  const auto proj = project(m, 0, {0.017, 0.081, 0.081});
  const std::size_t c = static_cast<std::size_t>(m.layout.half[0]);
  EXPECT_NEAR(proj.v[c], 0.0, 1e-15);
  // Mean of exp(-u^2/2) over the 17 bin centres |k * 0.01| <= 0.081, per transverse axis.
  double discrete = 0.0;
  for (int k = -8; k <= 8; ++k) discrete += std::exp(-0.5 * std::pow(k * 0.01 / 0.081, 2)) / 17.0;
  EXPECT_NEAR(proj.g2[c] - 1.0, 0.19 * discrete * discrete, 1e-12);
  EXPECT_NEAR(proj.g2[c] - 1.0, 0.1352, 1e-4);
  // Continuum average over |u| <= 1 is sqrt(pi/2) erf(1/sqrt2); the centres
  // reach the window edge, so the discrete value sits a few percent lower.
  const double one_axis = std::sqrt(std::numbers::pi / 2.0) * std::erf(1.0 / std::numbers::sqrt2);
  EXPECT_NEAR(one_axis * one_axis, 0.7321, 1e-4);
  EXPECT_NEAR((proj.g2[c] - 1.0) / (0.19 * one_axis * one_axis), 1.0, 0.03);
  // Smaller than the 3D peak.
  EXPECT_LT(proj.g2[c] - 1.0, 0.19);
}

TEST(G2Map, FlatProjection) {
  const auto m = fixtures::model_map({0.0, 0.017, 0.081});
  for (int a = 0; a < 3; ++a) {
    const auto proj = project(m, a, {0.02, 0.08, 0.08});
    for (double g : proj.g2) EXPECT_DOUBLE_EQ(g, 1.0);
  }
  EXPECT_THROW(project(m, 0, {0.02, 0.004, 0.08}), std::invalid_argument);
}

TEST(G2Map, FilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "pairhalo_g2map";
  std::filesystem::create_directories(dir);
  const auto shots = fixtures::paired_shots(50, 20, 20, 0.06, 19);
  const auto cfg = config(Variable::diff);
  const auto m = normalize(same_shot_histogram(shots, cfg), cross_shot_histogram(shots, cfg));
  write_g2map(dir / "m.csv", m);
  const auto back = read_g2map(dir / "m.csv");
  EXPECT_EQ(back.layout, m.layout);
  EXPECT_EQ(back.variable, m.variable);
  EXPECT_EQ(back.value, m.value);
  EXPECT_EQ(back.error, m.error);
  EXPECT_EQ(back.valid, m.valid);
  EXPECT_EQ(back.same, m.same);
  EXPECT_EQ(back.cross, m.cross);
  EXPECT_EQ(back.mirror_symmetric, m.mirror_symmetric);
  const auto proj = project(m, 1, {0.015, 0.09, 0.09});
  write_projection(dir / "p.csv", proj);
  const auto pb = read_projection(dir / "p.csv");
  EXPECT_EQ(pb.v, proj.v);
  EXPECT_EQ(pb.g2, proj.g2);
  EXPECT_EQ(pb.err, proj.err);
  std::filesystem::remove_all(dir);
}
