#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pairhalo/correlator.hpp"
#include "pairhalo/event_io.hpp"

namespace pairhalo::correlator {

std::size_t G2Map::valid_bins() const {
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  return n;
}

G2Map normalize(const PairHistogram3D& same, const PairHistogram3D& cross) {
  if (!(same.layout == cross.layout) || same.variable != cross.variable)
    throw std::invalid_argument("same and cross histograms differ in binning or variable");
  if (same.total_pairs == 0 || cross.total_pairs == 0)
    throw std::invalid_argument("histogram has no pairs to normalize by");

  G2Map m;
  m.variable = same.variable;
  m.layout = same.layout;
  m.same = same.counts;
  m.cross = cross.counts;
  m.same_total = same.total_pairs;
  m.cross_total = cross.total_pairs;
  m.mirror_symmetric = same.variable == Variable::diff;

  const std::size_t n = same.counts.size();
  m.value.assign(n, 0.0);
  m.error.assign(n, 0.0);
  m.valid.assign(n, 0);
  const double scale = static_cast<double>(cross.total_pairs) / static_cast<double>(same.total_pairs);
  const std::size_t centre = m.layout.index(0, 0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(cross.counts[i]);
    if (c <= 0.0) continue;
    m.valid[i] = 1;
    m.value[i] = scale * static_cast<double>(same.counts[i]) / c;
    // Ordered DIFF pairs put both orientations of a pair in the central bin.
    const double mult = (m.mirror_symmetric && i == centre) ? 2.0 : 1.0;
    m.error[i] = std::sqrt(mult * (scale + 1.0) / c);
  }
  return m;
}

Projection project(const G2Map& map, int axis, const Vec3& half_widths) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis must be 0, 1 or 2");
  const auto& L = map.layout;
  for (int a = 0; a < 3; ++a)
    if (a != axis && !(2.0 * half_widths[a] >= L.width[a]))
      throw std::invalid_argument("averaging window is smaller than one bin");

  const int n = L.count(axis);
  std::vector<double> sum(n, 0.0), var(n, 0.0);
  std::vector<int> used(n, 0);
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!map.valid[i]) continue;
    const auto k = L.offsets(i);
    bool inside = true;
    for (int a = 0; a < 3; ++a)
      if (a != axis && std::abs(k[a] * L.width[a]) > half_widths[a] * (1.0 + 1e-12)) inside = false;
    if (!inside) continue;
    const int j = k[axis] + L.half[axis];
    sum[j] += map.value[i];
    var[j] += map.error[i] * map.error[i];
    ++used[j];
  }
  Projection p;
  p.axis = axis;
  for (int j = 0; j < n; ++j) {
    if (used[j] == 0) continue;
    p.v.push_back((j - L.half[axis]) * L.width[axis]);
    p.g2.push_back(sum[j] / used[j]);
    p.err.push_back(std::sqrt(var[j]) / used[j]);
  }
  return p;
}

namespace {

template <class T>
T field(std::string_view s, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw io::FormatError("line " + std::to_string(line) + ": bad field '" + std::string(s) + "'", line);
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

constexpr const char* kMapHeader = "kx,ky,kz,vx,vy,vz,g2,err,valid,same,cross";

}  // namespace

void write_g2map(const std::filesystem::path& path, const G2Map& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  nlohmann::ordered_json meta;
  meta["variable"] = to_string(map.variable);
  meta["half_bins"] = map.layout.half;
  meta["bin_width"] = map.layout.width;
  meta["same_total"] = map.same_total;
  meta["cross_total"] = map.cross_total;
  meta["mirror_symmetric"] = map.mirror_symmetric;
  out << "# " << meta.dump() << '\n' << kMapHeader << '\n';
  for (std::size_t i = 0; i < map.layout.size(); ++i) {
    const auto k = map.layout.offsets(i);
    const Vec3 c = map.layout.centre(i);
    out << k[0] << ',' << k[1] << ',' << k[2] << ',' << io::format_double(c.x) << ','
        << io::format_double(c.y) << ',' << io::format_double(c.z) << ',' << io::format_double(map.value[i])
        << ',' << io::format_double(map.error[i]) << ',' << int(map.valid[i]) << ',' << map.same[i] << ','
        << map.cross[i] << '\n';
  }
}

G2Map read_g2map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    throw io::FormatError("line 1: missing metadata header", 1);
  G2Map m;
  try {
    const auto meta = nlohmann::json::parse(line.substr(2));
    m.variable = variable_from_string(meta.at("variable").get<std::string>());
    m.layout.half = meta.at("half_bins").get<std::array<int, 3>>();
    m.layout.width = meta.at("bin_width").get<std::array<double, 3>>();
    m.same_total = meta.at("same_total").get<std::uint64_t>();
    m.cross_total = meta.at("cross_total").get<std::uint64_t>();
    m.mirror_symmetric = meta.at("mirror_symmetric").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("line 1: bad metadata: ") + e.what(), 1);
  }
  const std::size_t n = m.layout.size();
  m.value.assign(n, 0.0);
  m.error.assign(n, 0.0);
  m.valid.assign(n, 0);
  m.same.assign(n, 0);
  m.cross.assign(n, 0);
  std::vector<bool> seen(n, false);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == kMapHeader) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw io::FormatError("line " + std::to_string(lineno) + ": expected 11 fields", lineno);
    const int kx = field<int>(f[0], lineno), ky = field<int>(f[1], lineno), kz = field<int>(f[2], lineno);
    if (std::abs(kx) > m.layout.half[0] || std::abs(ky) > m.layout.half[1] || std::abs(kz) > m.layout.half[2])
      throw io::FormatError("line " + std::to_string(lineno) + ": bin outside the window", lineno);
    const std::size_t i = m.layout.index(kx, ky, kz);
    m.value[i] = field<double>(f[6], lineno);
    m.error[i] = field<double>(f[7], lineno);
    m.valid[i] = static_cast<std::uint8_t>(field<int>(f[8], lineno) != 0);
    m.same[i] = field<std::uint64_t>(f[9], lineno);
    m.cross[i] = field<std::uint64_t>(f[10], lineno);
    seen[i] = true;
  }
  for (bool s : seen)
    if (!s) throw io::FormatError("map is missing bins", lineno);
  return m;
}

void write_projection(std::ostream& out, const Projection& p) {
  out << "v,g2,err\n";
  for (std::size_t i = 0; i < p.v.size(); ++i)
    out << io::format_double(p.v[i]) << ',' << io::format_double(p.g2[i]) << ','
        << io::format_double(p.err[i]) << '\n';
}

void write_projection(const std::filesystem::path& path, const Projection& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_projection(out, p);
}

Projection read_projection(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Projection p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "v,g2,err") continue;
    const auto f = split_csv(line);
    if (f.size() != 3) throw io::FormatError("line " + std::to_string(lineno) + ": expected 3 fields", lineno);
    p.v.push_back(field<double>(f[0], lineno));
    p.g2.push_back(field<double>(f[1], lineno));
    p.err.push_back(field<double>(f[2], lineno));
  }
  return p;
}

}  // namespace pairhalo::correlator
