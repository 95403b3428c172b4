#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pairhalo/halo_mc.hpp"
#include "pairhalo/kinematics.hpp"

namespace pairhalo::io {

/// Malformed input; the message names the line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Non-fatal diagnostics (e.g. shot ids out of order). Defaults to stderr.
void set_warning_sink(std::function<void(const std::string&)> sink);
void warn(const std::string& message);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

inline constexpr const char* kEventHeader = "shot_id,t_s,x_m,y_m";

void write_events(std::ostream& out, std::span<const kinematics::DetectionEvent> events);
void write_events(const std::filesystem::path& path, std::span<const kinematics::DetectionEvent> events);
std::vector<kinematics::DetectionEvent> read_events(std::istream& in);
std::vector<kinematics::DetectionEvent> read_events(const std::filesystem::path& path);

/// True (pre-detection) shots as velocities in the collision COM frame.
inline constexpr const char* kTruthFrameTag = "# frame=com_velocity_units";
inline constexpr const char* kTruthHeader = "shot_id,vx,vy,vz,mode";

void write_true_shots(const std::filesystem::path& path, std::span<const halo::TrueShot> shots);
std::vector<halo::TrueShot> read_true_shots(const std::filesystem::path& path);

}  // namespace pairhalo::io
