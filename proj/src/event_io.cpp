#include "pairhalo/event_io.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace pairhalo::io {

namespace {

std::function<void(const std::string&)>& sink() {
  static std::function<void(const std::string&)> s = [](const std::string& m) {
    std::cerr << "warning: " << m << '\n';
  };
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse(std::string_view s, T& value) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  return ec == std::errc{} && ptr == end;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void set_warning_sink(std::function<void(const std::string&)> s) { sink() = std::move(s); }
void warn(const std::string& message) {
  if (sink()) sink()(message);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_events(std::ostream& out, std::span<const kinematics::DetectionEvent> events) {
  out << kEventHeader << '\n';
  for (const auto& e : events)
    out << e.shot_id << ',' << format_double(e.t) << ',' << format_double(e.x) << ','
        << format_double(e.y) << '\n';
}

void write_events(const std::filesystem::path& path, std::span<const kinematics::DetectionEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_events(out, events);
}

std::vector<kinematics::DetectionEvent> read_events(std::istream& in) {
  std::vector<kinematics::DetectionEvent> events;
  std::string line;
  std::size_t lineno = 0;
  bool warned = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    if (lineno == 1 && line == kEventHeader) continue;
    const auto f = split(line, ',');
    kinematics::DetectionEvent e;
    if (f.size() != 4 || !parse(f[0], e.shot_id) || !parse(f[1], e.t) || !parse(f[2], e.x) ||
        !parse(f[3], e.y))
      throw FormatError("line " + std::to_string(lineno) + ": malformed event row '" + line + "'", lineno);
    if (!(e.t > 0.0))
      throw FormatError("line " + std::to_string(lineno) + ": arrival time must be > 0", lineno);
    if (!warned && !events.empty() && e.shot_id < events.back().shot_id) {
      warn("line " + std::to_string(lineno) + ": shot ids are not monotone");
      warned = true;
    }
    events.push_back(e);
  }
  return events;
}

std::vector<kinematics::DetectionEvent> read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_events(in);
}

void write_true_shots(const std::filesystem::path& path, std::span<const halo::TrueShot> shots) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kTruthFrameTag << '\n' << kTruthHeader << '\n';
  for (const auto& s : shots)
    for (std::size_t i = 0; i < s.velocities.size(); ++i) {
      const auto& v = s.velocities[i];
      out << s.shot_id << ',' << format_double(v.x) << ',' << format_double(v.y) << ','
          << format_double(v.z) << ',' << s.modes[i] << '\n';
    }
}

std::vector<halo::TrueShot> read_true_shots(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<halo::TrueShot> shots;
  std::map<std::int64_t, std::size_t> slot;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(std::move(line));
    if (line.empty() || line[0] == '#' || line == kTruthHeader) continue;
    const auto f = split(line, ',');
    std::int64_t id = 0;
    Velocity v;
    int mode = 0;
    if (f.size() != 5 || !parse(f[0], id) || !parse(f[1], v.x) || !parse(f[2], v.y) ||
        !parse(f[3], v.z) || !parse(f[4], mode))
      throw FormatError("line " + std::to_string(lineno) + ": malformed truth row", lineno);
    auto [it, inserted] = slot.try_emplace(id, shots.size());
    if (inserted) {
      shots.emplace_back();
      shots.back().shot_id = id;
    }
    shots[it->second].velocities.push_back(v);
    shots[it->second].modes.push_back(mode);
  }
  return shots;
}

}  // namespace pairhalo::io
