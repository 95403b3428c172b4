#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "pairhalo/config.hpp"
#include "pairhalo/event_io.hpp"
#include "pairhalo/pipeline.hpp"

namespace {

using namespace pairhalo;
using config::Stage;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kStageFailure = 2;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> shots;
  std::optional<std::string> variable;
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--out", o.out, "run directory");
  app.add_option("--shots", o.shots, "number of shots")->check(CLI::PositiveNumber);
  app.add_option("--variable", o.variable, "pair variable")->check(CLI::IsMember({"sum", "diff"}));
}

/// Defaults, then the config file, then command-line flags.
config::RunConfig resolve(const Overrides& o, std::vector<Stage> stages) {
  config::RunConfig cfg = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out = *o.out;
  if (o.shots) cfg.halo.n_shots = *o.shots;
  if (o.variable) cfg.variables = {correlator::variable_from_string(*o.variable)};
  cfg.stages = std::move(stages);
  config::validate(cfg);
  return cfg;
}

void print_summary(const pipeline::RunReport& r) {
  if (r.source)
    std::printf("source: v_x_rms %.5g  v_yz_rms %.5g  (v_rec)\n", r.source->v_x_rms, r.source->v_yz_rms);
  auto show = [](const char* name, const fitter::FitResult& f) {
    std::printf("%s: eta %.4g +- %.2g  sigma_x %.4g  sigma_yz %.4g  chi2/dof %.3f%s\n", name, f.params.eta,
                f.errors.eta, f.params.sigma_x, f.params.sigma_yz, f.reduced_chi2(),
                f.converged ? "" : "  (not converged)");
  };
  if (r.fit_sum) show("back-to-back", *r.fit_sum);
  if (r.fit_diff) show("collinear", *r.fit_diff);
  if (r.stats) {
    std::printf("predicted eta_BB %.4g\n", r.stats->eta_bb_predicted);
    if (r.stats->cauchy_schwarz)
      std::printf("Cauchy-Schwarz: %s (%.1f sigma)\n", r.stats->cauchy_schwarz->violated ? "violated" : "satisfied",
                  r.stats->cauchy_schwarz->significance);
    for (const auto& b : r.stats->eta_vs_n)
      std::printf("  <N> %.1f: eta %.4g +- %.2g%s\n", b.mean_count, b.fit.params.eta, b.fit.errors.eta,
                  b.ok ? "" : ("  [" + b.note + "]").c_str());
    std::printf("number-difference variance %.4g +- %.2g\n", r.stats->number_difference.value,
                r.stats->number_difference.error);
  }
  for (const auto& f : r.figure_files) std::printf("wrote figures/%s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pair-correlation analysis of a simulated collision halo"};
  app.set_version_flag("--version", pipeline::kVersion);
  app.require_subcommand(1);

  Overrides o;
  std::vector<Stage> stages;
  const std::pair<const char*, const char*> stage_cmds[] = {
      {"gp", "ground state and momentum widths of the source"},
      {"simulate", "Monte Carlo halo shots"},
      {"detect", "detector response, writes the event list"},
      {"correlate", "g2 maps from the events"},
      {"fit", "Gaussian fits of the g2 maps"},
      {"stats", "peak-height model, Cauchy-Schwarz test, eta vs N, number difference"},
      {"figures", "figure data from a finished run"},
  };
  for (const auto& [name, help] : stage_cmds) {
    auto* sub = app.add_subcommand(name, help);
    add_common(*sub, o);
    sub->callback([&stages, n = std::string(name)] { stages = {config::stage_from_string(n)}; });
  }
  auto* all = app.add_subcommand("run-all", "all stages in order");
  add_common(*all, o);
  all->callback([&stages] { stages = config::all_stages(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  io::set_warning_sink([](const std::string& m) { std::cerr << "warning: " << m << '\n'; });

  config::RunConfig cfg;
  try {
    cfg = resolve(o, stages);
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    print_summary(pipeline::run_pipeline(cfg));
  } catch (const pipeline::StageError& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << '\n';
    return kStageFailure;
  }
  return kOk;
}
