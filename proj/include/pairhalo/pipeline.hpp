#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairhalo/config.hpp"
#include "pairhalo/fitter.hpp"
#include "pairhalo/gp_source.hpp"
#include "pairhalo/stats.hpp"

namespace pairhalo::pipeline {

inline constexpr const char* kVersion = "pairhalo 1.0.0";

/// A stage failed; partial outputs of earlier stages are kept on disk.
class StageError : public std::runtime_error {
 public:
  StageError(config::Stage stage, const std::string& what)
      : std::runtime_error(config::to_string(stage) + ": " + what), stage_(stage) {}
  config::Stage stage() const { return stage_; }

 private:
  config::Stage stage_;
};

/// Artifact file names inside the run directory.
namespace files {
inline constexpr const char* config = "config.ini";
inline constexpr const char* gp = "gp.json";
inline constexpr const char* truth = "truth.csv";
inline constexpr const char* simulate = "simulate.json";
inline constexpr const char* events = "events.csv";
inline constexpr const char* stats = "stats.json";
inline constexpr const char* eta_vs_n = "eta_vs_n.csv";
inline constexpr const char* report = "report.json";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* figures = "figures";
std::string g2map(correlator::Variable v);
std::string fit(correlator::Variable v);
std::string residuals(correlator::Variable v);
}  // namespace files

struct StatsSummary {
  double shell_volume = 0.0;
  double correlation_volume = 0.0;
  double scattered = 0.0;
  double eta_bb_predicted = 0.0;
  std::optional<stats::CauchySchwarz> cauchy_schwarz;
  std::vector<stats::EtaBin> eta_vs_n;
  stats::NumberDifference number_difference;
};

struct RunReport {
  std::vector<config::Stage> stages_run;
  std::optional<gp::SourceMoments> source;
  std::optional<fitter::FitResult> fit_sum, fit_diff;
  std::optional<StatsSummary> stats;
  std::vector<std::string> figure_files;
};

/// Runs the requested stages in order. Each stage reads its inputs from the
/// run directory, so any stage can be rerun on stored artifacts. Throws
/// StageError naming the failing stage.
RunReport run_pipeline(const config::RunConfig& cfg);

/// Figure data from a completed run directory: detector images in time slices,
/// g2 projections and the eta-vs-N table. Throws StageError(figures) naming a
/// missing upstream artifact.
std::vector<std::string> emit_figure_data(const config::RunConfig& cfg);

/// Time-slice edges t0 + (k - 1/2) w covering [t_min, t_max].
std::vector<double> slice_edges(double t0, double width, double t_min, double t_max);

/// SHA-256 of a file, lowercase hex.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace pairhalo::pipeline
