#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairhalo/correlator.hpp"
#include "pairhalo/detector.hpp"
#include "pairhalo/fitter.hpp"
#include "pairhalo/gp_source.hpp"
#include "pairhalo/halo_mc.hpp"
#include "pairhalo/kinematics.hpp"

namespace pairhalo::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Stage { gp, simulate, detect, correlate, fit, stats, figures };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
/// All stages in execution order.
const std::vector<Stage>& all_stages();

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";
  std::vector<Stage> stages = all_stages();  // executed in canonical order

  /// Trap frequencies in Hz; they override trap.omega_* (see trap_config).
  double trap_frequency_x = 47.0;
  double trap_frequency_perp = 1150.0;
  gp::TrapConfig trap;
  gp::SolverOptions solver;

  /// Zero widths (mode widths, shell width) are filled in from the gp stage.
  halo::HaloConfig halo;

  double drop_height = 0.465;       // m
  double detector_radius = 0.04;    // m
  Vec3 com_velocity{0.0, 0.0, 1.0}; // v_rec, lab frame
  detector::DetectorConfig detector;

  /// Its variable field is ignored; `variables` lists what is computed.
  correlator::CorrelationConfig correlation;
  std::vector<correlator::Variable> variables{correlator::Variable::sum, correlator::Variable::diff};
  double shell_gate_sigmas = 3.0;  // used when correlation.shell_gate is 0

  fitter::FitOptions fit;

  int eta_bins = 3;
  int min_shots_per_bin = 100;
  /// Per-bin eta fits hold the widths at the full-sample SUM fit.
  bool eta_fixed_widths = true;
  double zone_half_angle = 0.3;  // rad, for number-difference statistics

  double slice_width = 2.4e-3;  // s, time slices of the detector image
  int image_bins = 40;          // per axis of the detector image

  bool has_stage(Stage s) const;
  gp::TrapConfig trap_config() const;
  kinematics::DetectorGeometry geometry(const kinematics::PhysicalConstants& c) const;
};

void validate(const RunConfig& cfg);

/// INI-style text: [section] headers, key = value lines, '#' comments.
RunConfig parse(std::istream& in);
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);

/// Canonical text; parse(serialize(c)) reproduces c and serializes identically.
std::string serialize(const RunConfig& cfg);
void save(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace pairhalo::config
