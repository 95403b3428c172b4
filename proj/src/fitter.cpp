#include "pairhalo/fitter.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <optional>
#include <json.hpp>

#include "pairhalo/event_io.hpp"

namespace pairhalo::fitter {

using correlator::G2Map;

void validate(const G2FitParams& p) {
  if (!(p.eta > -1.0)) throw std::invalid_argument("eta must be > -1");
  if (!(p.sigma_x > 0.0) || !(p.sigma_yz > 0.0)) throw std::invalid_argument("widths must be > 0");
}

double eval_model(const G2FitParams& p, const Vec3& v) {
  const double q = v.x * v.x / (2.0 * p.sigma_x * p.sigma_x) +
                   (v.y * v.y + v.z * v.z) / (2.0 * p.sigma_yz * p.sigma_yz);
  return p.baseline + p.eta * std::exp(-q);
}

std::array<double, 4> model_gradient(const G2FitParams& p, const Vec3& v) {
  const double ax = v.x * v.x / (p.sigma_x * p.sigma_x);
  const double ayz = (v.y * v.y + v.z * v.z) / (p.sigma_yz * p.sigma_yz);
  const double e = std::exp(-0.5 * (ax + ayz));
  return {e, p.eta * e * ax / p.sigma_x, p.eta * e * ayz / p.sigma_yz, 1.0};
}

std::vector<std::size_t> fit_bins(const G2Map& map) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < map.layout.size(); ++i) {
    if (!map.valid[i]) continue;
    if (map.mirror_symmetric) {
      const auto k = map.layout.offsets(i);
      // Keep the lexicographically non-negative half.
      if (k[0] < 0 || (k[0] == 0 && (k[1] < 0 || (k[1] == 0 && k[2] < 0)))) continue;
    }
    out.push_back(i);
  }
  return out;
}

namespace {

G2FitParams fallback(const G2Map& map, const std::string& why) {
  io::warn("init_from_moments: " + why + "; using default start");
  return default_start(map);
}

/// Second moment of the clipped excess along one axis line through the origin,
/// out to where the excess first vanishes.
double axis_width(const G2Map& map, int axis) {
  const auto& L = map.layout;
  double w_sum = 0.0, m2 = 0.0;
  for (int sign : {-1, 1}) {
    for (int k = (sign > 0 ? 0 : -1); std::abs(k) <= L.half[axis]; k += sign) {
      std::array<int, 3> idx{0, 0, 0};
      idx[axis] = k;
      const std::size_t i = L.index(idx[0], idx[1], idx[2]);
      if (!map.valid[i]) break;
      const double w = map.value[i] - 1.0;
      if (w <= 0.0) break;
      const double v = k * L.width[axis];
      w_sum += w;
      m2 += w * v * v;
    }
  }
  if (!(w_sum > 0.0) || !(m2 > 0.0)) return 0.0;
  return std::sqrt(m2 / w_sum);
}

}  // namespace

G2FitParams default_start(const G2Map& map) {
  const auto& L = map.layout;
  G2FitParams p;
  p.eta = 0.1;
  p.sigma_x = L.half[0] * L.width[0] / 5.0;
  p.sigma_yz = (L.half[1] * L.width[1] + L.half[2] * L.width[2]) / 10.0;
  return p;
}

G2FitParams init_from_moments(const G2Map& map) {
  const std::size_t c = map.layout.index(0, 0, 0);
  if (!map.valid[c]) return fallback(map, "central bin is invalid");
  const double excess = map.value[c] - 1.0;
  if (!(excess > 0.0)) return fallback(map, "no positive central excess");
  G2FitParams p;
  p.eta = excess;
  p.sigma_x = axis_width(map, 0);
  const double sy = axis_width(map, 1), sz = axis_width(map, 2);
  p.sigma_yz = 0.5 * (sy + sz);
  const auto& L = map.layout;
  // A peak one bin wide has no measurable moment; start at half a bin.
  if (!(p.sigma_x > 0.0)) p.sigma_x = 0.5 * L.width[0];
  if (!(p.sigma_yz > 0.0)) p.sigma_yz = 0.25 * (L.width[1] + L.width[2]);
  return p;
}

namespace {

/// Free parameters are a subset of (eta, sigma_x, sigma_yz, baseline) in that order.
struct Problem {
  std::vector<Vec3> v;
  std::vector<double> y, err;
  std::vector<double> w;  // 1 / variance
  std::vector<int> free;  // indices into the full parameter list
  G2FitParams fixed;      // values of the parameters that are not free

  int n_par() const { return static_cast<int>(free.size()); }

  G2FitParams unpack(const Eigen::VectorXd& x) const {
    std::array<double, 4> full{fixed.eta, fixed.sigma_x, fixed.sigma_yz, fixed.baseline};
    for (int a = 0; a < n_par(); ++a) full[free[a]] = x[a];
    return {full[0], full[1], full[2], full[3]};
  }

  Eigen::VectorXd pack(const G2FitParams& p) const {
    const std::array<double, 4> full{p.eta, p.sigma_x, p.sigma_yz, p.baseline};
    Eigen::VectorXd x(n_par());
    for (int a = 0; a < n_par(); ++a) x[a] = full[free[a]];
    return x;
  }

  double objective(const Eigen::VectorXd& x) const {
    const auto p = unpack(x);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = y[i] - eval_model(p, v[i]);
      s += w[i] * r * r;
    }
    return s;
  }

  /// Normal equations A = J^T W J and gradient g = J^T W r.
  void normal(const Eigen::VectorXd& x, Eigen::MatrixXd& A, Eigen::VectorXd& g) const {
    const auto p = unpack(x);
    const int n = n_par();
    A.setZero(n, n);
    g.setZero(n);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto full = model_gradient(p, v[i]);
      const double r = y[i] - eval_model(p, v[i]);
      for (int a = 0; a < n; ++a) {
        const double da = full[free[a]];
        g[a] += w[i] * da * r;
        for (int b = 0; b <= a; ++b) A(a, b) += w[i] * da * full[free[b]];
      }
    }
    A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  }

  bool admissible(const Eigen::VectorXd& x) const {
    if (!x.allFinite()) return false;
    const auto p = unpack(x);
    return p.eta > -1.0 && p.sigma_x > 0.0 && p.sigma_yz > 0.0;
  }
};

struct LMOutcome {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
  std::vector<double> history;
};

LMOutcome levenberg_marquardt(const Problem& pb, Eigen::VectorXd x, int max_iter) {
  LMOutcome out;
  double f = pb.objective(x);
  out.history.push_back(f);
  double lambda = 1e-3;
  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    pb.normal(x, A, g);
    if (g.norm() < 1e-10) {
      out.converged = true;
      break;
    }
    bool accepted = false;
    double rel_change = 0.0;
    while (lambda < 1e16) {
      Eigen::MatrixXd D = A;
      for (int a = 0; a < pb.n_par(); ++a) D(a, a) += lambda * std::max(A(a, a), 1e-300);
      const Eigen::VectorXd step = D.ldlt().solve(g);
      const Eigen::VectorXd trial = x + step;
      if (pb.admissible(trial)) {
        const double ft = pb.objective(trial);
        if (ft <= f) {
          rel_change = (step.array().abs() / trial.array().abs().max(1e-300)).maxCoeff();
          x = trial;
          f = ft;
          out.history.push_back(f);
          lambda = std::max(lambda / 10.0, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No downhill step at any damping: x is a minimum to working precision.
      out.converged = true;
      break;
    }
    if (rel_change < 1e-8) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  return out;
}

}  // namespace

FitResult fit(const G2Map& map, const G2FitParams& init, const FitOptions& opts) {
  validate(init);
  Problem pb;
  pb.fixed = init;
  if (!opts.free_baseline) pb.fixed.baseline = 1.0;
  pb.free = opts.fixed_widths ? std::vector<int>{0} : std::vector<int>{0, 1, 2};
  if (opts.free_baseline) pb.free.push_back(3);
  for (std::size_t i : fit_bins(map)) {
    if (!(map.error[i] > 0.0)) continue;
    pb.v.push_back(map.layout.centre(i));
    pb.y.push_back(map.value[i]);
    pb.err.push_back(map.error[i]);
  }
  const int n = static_cast<int>(pb.v.size());
  if (n < 10 * pb.n_par())
    throw FitError("too few valid bins for the fit (" + std::to_string(n) + ")");

  const Eigen::VectorXd x = pb.pack(pb.fixed);

  pb.w.resize(n);
  for (int i = 0; i < n; ++i) pb.w[i] = 1.0 / (pb.err[i] * pb.err[i]);

  LMOutcome lm = levenberg_marquardt(pb, x, opts.max_iterations);
  int total_iter = lm.iterations;
  std::vector<double> history = lm.history;
  for (int pass = 0; pass < opts.reweight_passes; ++pass) {
    const auto p = pb.unpack(lm.x);
    for (int i = 0; i < n; ++i) {
      const double g = std::max(eval_model(p, pb.v[i]), 1e-3);
      pb.w[i] = 1.0 / (pb.err[i] * pb.err[i] * g);
    }
    lm = levenberg_marquardt(pb, lm.x, opts.max_iterations);
    total_iter += lm.iterations;
    // The objective changes with the weights, so only the last pass's history is monotone.
    history = lm.history;
  }

  FitResult r;
  r.params = pb.unpack(lm.x);
  r.converged = lm.converged;
  r.iterations = total_iter;
  r.objective_history = history;
  r.chi2 = pb.objective(lm.x);
  r.dof = n - pb.n_par();
  r.variable = correlator::to_string(map.variable);

  Eigen::MatrixXd A;
  Eigen::VectorXd g;
  pb.normal(lm.x, A, g);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) throw FitError("singular curvature matrix");
  const Eigen::MatrixXd cov = lu.inverse() * r.reduced_chi2();
  // Covariance over the full parameter list; fixed parameters get zero rows.
  r.covariance.assign(4, std::vector<double>(4, 0.0));
  std::array<double, 4> err{};
  for (int a = 0; a < pb.n_par(); ++a) {
    err[pb.free[a]] = std::sqrt(std::max(0.0, cov(a, a)));
    for (int b = 0; b < pb.n_par(); ++b) r.covariance[pb.free[a]][pb.free[b]] = 0.5 * (cov(a, b) + cov(b, a));
  }
  r.errors = {err[0], err[1], err[2], err[3]};
  return r;
}

FitResult fit(const G2Map& map, const FitOptions& opts) {
  std::vector<G2FitParams> starts{init_from_moments(map), default_start(map)};
  std::optional<FitResult> best;
  std::optional<FitError> last_error;
  for (const auto& s : starts) {
    try {
      FitResult r = fit(map, s, opts);
      const bool better = !best || (r.converged && !best->converged) ||
                          (r.converged == best->converged && r.chi2 < best->chi2);
      if (better) best = std::move(r);
    } catch (const FitError& e) {
      last_error = e;
    }
  }
  if (!best) throw *last_error;
  return *best;
}

std::string to_json(const FitResult& r) {
  nlohmann::ordered_json j;
  j["variable"] = r.variable;
  j["eta"] = r.params.eta;
  j["sigma_x"] = r.params.sigma_x;
  j["sigma_yz"] = r.params.sigma_yz;
  j["baseline"] = r.params.baseline;
  j["eta_err"] = r.errors.eta;
  j["sigma_x_err"] = r.errors.sigma_x;
  j["sigma_yz_err"] = r.errors.sigma_yz;
  j["baseline_err"] = r.errors.baseline;
  j["covariance"] = r.covariance;
  j["chi2"] = r.chi2;
  j["dof"] = r.dof;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  return j.dump(2);
}

void write_fit_result(const std::filesystem::path& path, const FitResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(r) << '\n';
}

FitResult read_fit_result(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto j = nlohmann::json::parse(in);
  FitResult r;
  r.variable = j.at("variable").get<std::string>();
  r.params = {j.at("eta").get<double>(), j.at("sigma_x").get<double>(), j.at("sigma_yz").get<double>(),
              j.at("baseline").get<double>()};
  r.errors = {j.at("eta_err").get<double>(), j.at("sigma_x_err").get<double>(),
              j.at("sigma_yz_err").get<double>(), j.at("baseline_err").get<double>()};
  r.covariance = j.at("covariance").get<std::vector<std::vector<double>>>();
  r.chi2 = j.at("chi2").get<double>();
  r.dof = j.at("dof").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  return r;
}

void write_residuals(const std::filesystem::path& path, const G2Map& map, const FitResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "kx,ky,kz,vx,vy,vz,g2,err,model,pull\n";
  for (std::size_t i : fit_bins(map)) {
    const auto k = map.layout.offsets(i);
    const Vec3 c = map.layout.centre(i);
    const double m = eval_model(r.params, c);
    const double pull = map.error[i] > 0.0 ? (map.value[i] - m) / map.error[i] : 0.0;
    out << k[0] << ',' << k[1] << ',' << k[2] << ',' << io::format_double(c.x) << ','
        << io::format_double(c.y) << ',' << io::format_double(c.z) << ',' << io::format_double(map.value[i])
        << ',' << io::format_double(map.error[i]) << ',' << io::format_double(m) << ','
        << io::format_double(pull) << '\n';
  }
}

}  // namespace pairhalo::fitter
