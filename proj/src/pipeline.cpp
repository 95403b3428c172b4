#include "pairhalo/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "pairhalo/detector.hpp"
#include "pairhalo/event_io.hpp"
#include "pairhalo/halo_mc.hpp"

namespace pairhalo::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;
using config::Stage;
using correlator::Variable;
using json = nlohmann::ordered_json;

namespace files {
std::string g2map(Variable v) { return "g2_" + correlator::to_string(v) + ".csv"; }
std::string fit(Variable v) { return "fit_" + correlator::to_string(v) + ".json"; }
std::string residuals(Variable v) { return "residuals_" + correlator::to_string(v) + ".csv"; }
}  // namespace files

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 unavailable");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

std::vector<double> slice_edges(double t0, double width, double t_min, double t_max) {
  if (!(width > 0.0)) throw std::invalid_argument("slice width must be > 0");
  if (t_max < t_min) return {};
  const auto k_lo = static_cast<long>(std::floor((t_min - t0) / width + 0.5));
  const auto k_hi = static_cast<long>(std::floor((t_max - t0) / width + 0.5));
  std::vector<double> edges;
  for (long k = k_lo; k <= k_hi + 1; ++k) edges.push_back(t0 + (static_cast<double>(k) - 0.5) * width);
  return edges;
}

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

/// Path of an input artifact; throws naming it when absent.
fs::path need(const RunConfig& cfg, Stage stage, const std::string& name) {
  const fs::path p = cfg.out / name;
  if (!fs::exists(p)) throw StageError(stage, "missing upstream artifact " + name);
  return p;
}

/// Halo config with zero widths filled in from the gp stage output.
halo::HaloConfig resolved_halo(const RunConfig& cfg, Stage stage) {
  halo::HaloConfig h = cfg.halo;
  const bool need_gp = h.mode_widths.x <= 0.0 || h.mode_widths.yz <= 0.0 || h.shell_rms_width <= 0.0;
  if (!need_gp) return h;
  const json g = read_json(need(cfg, stage, files::gp));
  const double vx = g.at("v_x_rms").get<double>(), vyz = g.at("v_yz_rms").get<double>();
  const double mf = g.at("mean_field_broadening").get<double>();
  if (h.mode_widths.x <= 0.0) h.mode_widths.x = vx;
  if (h.mode_widths.yz <= 0.0) h.mode_widths.yz = vyz;
  if (h.shell_rms_width <= 0.0) h.shell_rms_width = std::hypot(vyz, mf);
  return h;
}

correlator::ShotVelocities load_shots(const RunConfig& cfg, Stage stage) {
  const kinematics::PhysicalConstants c;
  const auto events = io::read_events(need(cfg, stage, files::events));
  const auto shots = detector::shots_from_events(events, cfg.geometry(c), c);
  // Shots without detected atoms leave no events; restore them from the
  // simulated shot count so per-shot statistics see every shot.
  std::size_t n = 0;
  const fs::path sim = cfg.out / files::simulate;
  if (fs::exists(sim)) n = read_json(sim).at("n_shots").get<std::size_t>();
  for (const auto& s : shots) n = std::max(n, static_cast<std::size_t>(s.shot_id) + 1);
  correlator::ShotVelocities out(n);
  for (const auto& s : shots) out[static_cast<std::size_t>(s.shot_id)] = s.velocities;
  return out;
}

double shell_rms_width(const RunConfig& cfg, Stage stage) {
  const fs::path p = cfg.out / files::simulate;
  if (fs::exists(p)) return read_json(p).at("shell_rms_width").get<double>();
  return resolved_halo(cfg, stage).shell_rms_width;
}

correlator::CorrelationConfig correlation_config(const RunConfig& cfg, Stage stage) {
  correlator::CorrelationConfig cc = cfg.correlation;
  if (!(cc.shell_gate > 0.0) && cfg.shell_gate_sigmas > 0.0)
    cc.shell_gate = cfg.shell_gate_sigmas * shell_rms_width(cfg, stage);
  return cc;
}

json fit_json(const fitter::FitResult& r) { return json::parse(fitter::to_json(r)); }

void run_gp(const RunConfig& cfg, RunReport& report) {
  const kinematics::PhysicalConstants c;
  const auto sol = gp::solve_ground_state(cfg.trap_config(), cfg.solver, c);
  const auto m = gp::momentum_widths(sol);
  const double hw = c.hbar * cfg.trap_config().omega_perp;
  json j;
  j["v_x_rms"] = m.v_x_rms;
  j["v_yz_rms"] = m.v_yz_rms;
  j["v_y_rms"] = m.v_y_rms;
  j["v_z_rms"] = m.v_z_rms;
  j["mu_J"] = m.mu;
  j["mu_hbar_omega_perp"] = m.mu / hw;
  j["sound_speed"] = m.sound_speed;
  j["mean_field_broadening"] = gp::mean_field_broadening(m.mu, c);
  j["supersonic_ratio"] = gp::supersonic_check(c, m);
  j["iterations"] = sol.iterations;
  j["residual"] = sol.residual;
  j["converged"] = sol.converged;
  write_json(cfg.out / files::gp, j);
  report.source = m;
}

void run_simulate(const RunConfig& cfg) {
  const halo::HaloConfig h = resolved_halo(cfg, Stage::simulate);
  const auto grid = halo::build_mode_grid(halo::cell_widths(h), h.shell_radius);
  const auto shots = halo::simulate(grid, h, cfg.seed);
  io::write_true_shots(cfg.out / files::truth, shots);
  double total = 0.0;
  for (const auto& s : shots) total += static_cast<double>(s.size());
  json j;
  j["mode_width_x"] = h.mode_widths.x;
  j["mode_width_yz"] = h.mode_widths.yz;
  j["shell_rms_width"] = h.shell_rms_width;
  j["cell_scale"] = h.cell_scale;
  j["cells"] = grid.cells.size();
  j["mode_pairs"] = grid.mode_pairs();
  j["mean_occupation"] = halo::mean_occupation(h, grid);
  j["mean_scattered"] = halo::mean_scattered(h, grid);
  j["n_shots"] = shots.size();
  j["mean_true_atoms"] = shots.empty() ? 0.0 : total / static_cast<double>(shots.size());
  write_json(cfg.out / files::simulate, j);
}

void run_detect(const RunConfig& cfg) {
  const kinematics::PhysicalConstants c;
  const auto truth = io::read_true_shots(need(cfg, Stage::detect, files::truth));
  const auto det = detector::detect_all(truth, cfg.detector, cfg.geometry(c), c, cfg.seed);
  io::write_events(cfg.out / files::events, detector::events_of(det));
}

void run_correlate(const RunConfig& cfg) {
  const auto cc_base = correlation_config(cfg, Stage::correlate);
  const auto shots = correlator::gate(load_shots(cfg, Stage::correlate), cc_base);
  for (Variable v : cfg.variables) {
    auto cc = cc_base;
    cc.variable = v;
    const auto map = correlator::normalize(correlator::same_shot_histogram(shots, cc),
                                           correlator::cross_shot_histogram(shots, cc));
    correlator::write_g2map(cfg.out / files::g2map(v), map);
  }
}

void run_fit(const RunConfig& cfg, RunReport& report) {
  for (Variable v : cfg.variables) {
    const auto map = correlator::read_g2map(need(cfg, Stage::fit, files::g2map(v)));
    const auto r = fitter::fit(map, cfg.fit);
    fitter::write_fit_result(cfg.out / files::fit(v), r);
    fitter::write_residuals(cfg.out / files::residuals(v), map, r);
    (v == Variable::sum ? report.fit_sum : report.fit_diff) = r;
  }
}

void write_eta_table(const fs::path& path, const std::vector<stats::EtaBin>& bins) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "bin,mean_count,shots,eta,eta_err,sigma_x,sigma_yz,ok\n";
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    out << i << ',' << io::format_double(b.mean_count) << ',' << b.shots << ','
        << io::format_double(b.fit.params.eta) << ',' << io::format_double(b.fit.errors.eta) << ','
        << io::format_double(b.fit.params.sigma_x) << ',' << io::format_double(b.fit.params.sigma_yz) << ','
        << (b.ok ? 1 : 0) << '\n';
  }
}

void run_stats(const RunConfig& cfg, RunReport& report) {
  const auto bb = fitter::read_fit_result(need(cfg, Stage::stats, files::fit(Variable::sum)));
  const json sim = read_json(need(cfg, Stage::stats, files::simulate));
  StatsSummary s;
  const double radius = cfg.halo.shell_radius;
  s.shell_volume = stats::shell_volume(radius, stats::shell_thickness(sim.at("shell_rms_width").get<double>()));
  s.correlation_volume = stats::correlation_volume(bb.params);
  s.scattered = sim.at("mean_scattered").get<double>();
  s.eta_bb_predicted = stats::peak_height_bb({s.shell_volume, s.correlation_volume, s.scattered});

  const fs::path cl_path = cfg.out / files::fit(Variable::diff);
  if (fs::exists(cl_path)) {
    const auto cl = fitter::read_fit_result(cl_path);
    if (bb.converged && cl.converged) s.cauchy_schwarz = stats::cauchy_schwarz(bb, cl);
  }

  const auto raw = load_shots(cfg, Stage::stats);
  auto cc = correlation_config(cfg, Stage::stats);
  cc.variable = Variable::sum;
  const bool fixed = cfg.eta_fixed_widths && bb.converged;
  s.eta_vs_n = stats::eta_vs_n(correlator::gate(raw, cc), cfg.eta_bins, cc, cfg.min_shots_per_bin,
                               fixed ? &bb.params : nullptr);
  write_eta_table(cfg.out / files::eta_vs_n, s.eta_vs_n);
  s.number_difference = stats::number_difference_variance(raw, stats::default_zone_pairs(cfg.zone_half_angle));

  json j;
  j["shell_volume"] = s.shell_volume;
  j["correlation_volume"] = s.correlation_volume;
  j["volume_ratio"] = s.shell_volume / s.correlation_volume;
  j["scattered"] = s.scattered;
  j["eta_bb_predicted"] = s.eta_bb_predicted;
  j["eta_bb_fitted"] = bb.params.eta;
  if (s.cauchy_schwarz) {
    j["cauchy_schwarz"] = {{"ratio", s.cauchy_schwarz->ratio},
                           {"violated", s.cauchy_schwarz->violated},
                           {"significance", s.cauchy_schwarz->significance}};
  }
  json bins = json::array();
  for (const auto& b : s.eta_vs_n)
    bins.push_back({{"mean_count", b.mean_count}, {"shots", b.shots}, {"eta", b.fit.params.eta},
                    {"eta_err", b.fit.errors.eta}, {"ok", b.ok}, {"note", b.note}});
  j["eta_vs_n"] = bins;
  j["number_difference"] = {{"value", s.number_difference.value},
                            {"error", s.number_difference.error},
                            {"mean_sum", s.number_difference.mean_sum},
                            {"samples", s.number_difference.samples},
                            {"empty", s.number_difference.empty}};
  write_json(cfg.out / files::stats, j);
  report.stats = std::move(s);
}

void write_report(const RunConfig& cfg, const RunReport& r) {
  json j;
  json stages = json::array();
  for (Stage s : r.stages_run) stages.push_back(config::to_string(s));
  j["stages"] = stages;
  if (r.source) j["source"] = {{"v_x_rms", r.source->v_x_rms}, {"v_yz_rms", r.source->v_yz_rms}};
  if (r.fit_sum) j["back_to_back"] = fit_json(*r.fit_sum);
  if (r.fit_diff) j["collinear"] = fit_json(*r.fit_diff);
  if (r.stats) {
    j["eta_bb_predicted"] = r.stats->eta_bb_predicted;
    if (r.stats->cauchy_schwarz) j["cauchy_schwarz_violated"] = r.stats->cauchy_schwarz->violated;
    j["number_difference_variance"] = r.stats->number_difference.value;
  }
  write_json(cfg.out / files::report, j);
}

void write_manifest(const RunConfig& cfg) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(cfg.out))
    if (e.is_regular_file() && e.path().filename() != files::manifest) paths.push_back(e.path());
  std::vector<std::string> names;
  for (const auto& p : paths) names.push_back(fs::relative(p, cfg.out).generic_string());
  std::sort(names.begin(), names.end());
  json j;
  j["version"] = kVersion;
  j["seed"] = cfg.seed;
  json list = json::array();
  for (const auto& n : names)
    list.push_back({{"file", n}, {"sha256", sha256_file(cfg.out / n)}, {"bytes", fs::file_size(cfg.out / n)}});
  j["files"] = list;
  write_json(cfg.out / files::manifest, j);
}

// ---- figures -------------------------------------------------------------

void write_slices(const RunConfig& cfg, const fs::path& dir) {
  const kinematics::PhysicalConstants c;
  const auto events = io::read_events(need(cfg, Stage::figures, files::events));
  const auto geom = cfg.geometry(c);
  std::ofstream summary(dir / "fig2_slices.csv", std::ios::binary);
  std::ofstream image(dir / "fig2_images.csv", std::ios::binary);
  summary << "slice,t_lo_s,t_hi_s,atoms\n";
  image << "slice,ix,iy,x_m,y_m,count\n";
  if (events.empty()) return;
  double t_min = events.front().t, t_max = t_min;
  for (const auto& e : events) {
    t_min = std::min(t_min, e.t);
    t_max = std::max(t_max, e.t);
  }
  const auto edges = slice_edges(kinematics::com_arrival_time(geom, c), cfg.slice_width, t_min, t_max);
  const int nb = cfg.image_bins;
  const double R = geom.detector_radius, w = 2.0 * R / nb;
  const std::size_t n_slices = edges.size() - 1;
  std::vector<long> atoms(n_slices, 0);
  std::vector<long> counts(n_slices * nb * nb, 0);
  for (const auto& e : events) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), e.t);
    if (it == edges.begin() || it == edges.end()) continue;
    const auto k = static_cast<std::size_t>(it - edges.begin()) - 1;
    ++atoms[k];
    const int ix = std::clamp(static_cast<int>(std::floor((e.x + R) / w)), 0, nb - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((e.y + R) / w)), 0, nb - 1);
    ++counts[(k * nb + ix) * nb + iy];
  }
  for (std::size_t k = 0; k < n_slices; ++k) {
    summary << k << ',' << io::format_double(edges[k]) << ',' << io::format_double(edges[k + 1]) << ','
            << atoms[k] << '\n';
    for (int ix = 0; ix < nb; ++ix)
      for (int iy = 0; iy < nb; ++iy) {
        const long n = counts[(k * nb + ix) * nb + iy];
        if (n == 0) continue;
        image << k << ',' << ix << ',' << iy << ',' << io::format_double(-R + (ix + 0.5) * w) << ','
              << io::format_double(-R + (iy + 0.5) * w) << ',' << n << '\n';
      }
  }
}

std::vector<std::string> write_projections(const RunConfig& cfg, const fs::path& dir) {
  std::vector<std::string> out;
  for (Variable v : cfg.variables) {
    const auto map = correlator::read_g2map(need(cfg, Stage::figures, files::g2map(v)));
    const auto fit = fitter::read_fit_result(need(cfg, Stage::figures, files::fit(v)));
    // Average over one correlation length, but never less than one bin.
    const Vec3 half{std::max(fit.params.sigma_x, 0.5 * map.layout.width[0]),
                    std::max(fit.params.sigma_yz, 0.5 * map.layout.width[1]),
                    std::max(fit.params.sigma_yz, 0.5 * map.layout.width[2])};
    const char* axes[] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
      const std::string name = "fig3_" + correlator::to_string(v) + "_" + axes[a] + ".csv";
      correlator::write_projection(dir / name, correlator::project(map, a, half));
      out.push_back(name);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> emit_figure_data(const RunConfig& cfg) {
  const fs::path dir = cfg.out / files::figures;
  const fs::path table = need(cfg, Stage::figures, files::eta_vs_n);
  fs::create_directories(dir);
  std::vector<std::string> names{"fig2_slices.csv", "fig2_images.csv"};
  write_slices(cfg, dir);
  for (auto& n : write_projections(cfg, dir)) names.push_back(std::move(n));
  fs::copy_file(table, dir / "fig4_eta_vs_n.csv", fs::copy_options::overwrite_existing);
  names.push_back("fig4_eta_vs_n.csv");
  return names;
}

RunReport run_pipeline(const RunConfig& cfg) {
  try {
    config::validate(cfg);
  } catch (const config::ConfigError& e) {
    throw StageError(cfg.stages.empty() ? Stage::gp : cfg.stages.front(), e.what());
  }
  fs::create_directories(cfg.out);
  config::save(cfg.out / files::config, cfg);

  RunReport report;
  for (Stage stage : config::all_stages()) {
    if (!cfg.has_stage(stage)) continue;
    try {
      switch (stage) {
        case Stage::gp: run_gp(cfg, report); break;
        case Stage::simulate: run_simulate(cfg); break;
        case Stage::detect: run_detect(cfg); break;
        case Stage::correlate: run_correlate(cfg); break;
        case Stage::fit: run_fit(cfg, report); break;
        case Stage::stats: run_stats(cfg, report); break;
        case Stage::figures: report.figure_files = emit_figure_data(cfg); break;
      }
    } catch (const StageError&) {
      write_manifest(cfg);
      throw;
    } catch (const std::exception& e) {
      write_manifest(cfg);
      throw StageError(stage, e.what());
    }
    report.stages_run.push_back(stage);
  }
  write_report(cfg, report);
  write_manifest(cfg);
  return report;
}

}  // namespace pairhalo::pipeline
