#include "pairhalo/correlator.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pairhalo::correlator {

std::string to_string(Variable v) { return v == Variable::sum ? "sum" : "diff"; }

Variable variable_from_string(const std::string& s) {
  if (s == "sum") return Variable::sum;
  if (s == "diff") return Variable::diff;
  throw std::invalid_argument("variable must be 'sum' or 'diff', got '" + s + "'");
}

BinLayout BinLayout::from(const CorrelationConfig& cfg) {
  BinLayout l;
  for (int a = 0; a < 3; ++a) {
    const double w = cfg.window[a], b = cfg.bin_width[a];
    if (!(w > 0.0) || !(b > 0.0)) throw std::invalid_argument("window and bin width must be > 0");
    const double ratio = w / b;
    const double k = std::round(ratio);
    if (std::abs(ratio - k) > 1e-6 * std::max(1.0, ratio) || k < 1.0)
      throw std::invalid_argument("window must be an integral number of bins");
    l.half[a] = static_cast<int>(k);
    l.width[a] = b;
  }
  return l;
}

std::array<int, 3> BinLayout::offsets(std::size_t i) const {
  const int kz = static_cast<int>(i % count(2));
  i /= count(2);
  const int ky = static_cast<int>(i % count(1));
  const int kx = static_cast<int>(i / count(1));
  return {kx - half[0], ky - half[1], kz - half[2]};
}

Vec3 BinLayout::centre(std::size_t i) const {
  const auto k = offsets(i);
  return {k[0] * width[0], k[1] * width[1], k[2] * width[2]};
}

ShotVelocities gate(const ShotVelocities& shots, const CorrelationConfig& cfg) {
  if (!(cfg.shell_gate > 0.0)) return shots;
  ShotVelocities out(shots.size());
  for (std::size_t s = 0; s < shots.size(); ++s)
    for (const auto& v : shots[s])
      if (std::abs(norm(v) - cfg.shell_radius) <= cfg.shell_gate) out[s].push_back(v);
  return out;
}

namespace {

/// All atoms of all shots in a uniform cell grid, cell edge = window reach.
/// Within a cell atoms are sorted by shot, so the same-shot partners of an
/// atom are one contiguous range.
class CellList {
 public:
  CellList(const ShotVelocities& shots, const BinLayout& layout) {
    for (int a = 0; a < 3; ++a) {
      edge_[a] = layout.reach(a);
      lo_[a] = std::numeric_limits<double>::infinity();
    }
    std::size_t n = 0;
    for (const auto& s : shots) n += s.size();
    std::array<double, 3> hi{};
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& s : shots)
      for (const auto& v : s)
        for (int a = 0; a < 3; ++a) {
          lo_[a] = std::min(lo_[a], v[a]);
          hi[a] = std::max(hi[a], v[a]);
        }
    for (int a = 0; a < 3; ++a)
      dims_[a] = n == 0 ? 1 : static_cast<int>(std::floor((hi[a] - lo_[a]) / edge_[a])) + 1;

    std::vector<std::size_t> cell_of(n);
    std::vector<int> shot_of(n);
    std::vector<Vec3> flat(n);
    std::size_t i = 0;
    for (std::size_t s = 0; s < shots.size(); ++s)
      for (const auto& v : shots[s]) {
        flat[i] = v;
        shot_of[i] = static_cast<int>(s);
        cell_of[i] = linear(coord(v, 0), coord(v, 1), coord(v, 2));
        ++i;
      }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return cell_of[a] != cell_of[b] ? cell_of[a] < cell_of[b] : shot_of[a] < shot_of[b];
    });
    start_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] + 1, 0);
    for (std::size_t k : cell_of) ++start_[k + 1];
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    pos_.resize(n);
    shot_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      pos_[k] = flat[order[k]];
      shot_[k] = shot_of[order[k]];
    }
  }

  std::size_t size() const { return pos_.size(); }
  const Vec3& pos(std::size_t i) const { return pos_[i]; }
  int shot(std::size_t i) const { return shot_[i]; }

  /// Visit every cell overlapping the box centre +- edge.
  template <class F>
  void for_cells_near(const Vec3& centre, F&& f) const {
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::floor((centre[a] - edge_[a] - lo_[a]) / edge_[a])));
      hi[a] = std::min(dims_[a] - 1, static_cast<int>(std::floor((centre[a] + edge_[a] - lo_[a]) / edge_[a])));
      if (lo[a] > hi[a]) return;
    }
    for (int x = lo[0]; x <= hi[0]; ++x)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int z = lo[2]; z <= hi[2]; ++z) {
          const std::size_t c = linear(x, y, z);
          f(start_[c], start_[c + 1]);
        }
  }

 private:
  int coord(const Vec3& v, int a) const {
    return std::clamp(static_cast<int>(std::floor((v[a] - lo_[a]) / edge_[a])), 0, dims_[a] - 1);
  }
  std::size_t linear(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * dims_[1] + y) * dims_[2] + z;
  }

  std::array<double, 3> edge_{}, lo_{};
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<Vec3> pos_;
  std::vector<int> shot_;
};

enum class Pairing { same, cross };

std::uint64_t combinatorial_total(const ShotVelocities& shots, Variable var, Pairing kind) {
  std::uint64_t same = 0, all = 0, sum = 0;
  for (const auto& s : shots) {
    const std::uint64_t n = s.size();
    same += n * (n - (n > 0 ? 1 : 0)) / 2;
    sum += n;
  }
  all = sum * (sum - (sum > 0 ? 1 : 0)) / 2;
  const std::uint64_t unordered = kind == Pairing::same ? same : all - same;
  return var == Variable::diff ? 2 * unordered : unordered;
}

int nonempty(const ShotVelocities& shots) {
  return static_cast<int>(std::count_if(shots.begin(), shots.end(), [](const auto& s) { return !s.empty(); }));
}

PairHistogram3D windowed(const ShotVelocities& shots, const CorrelationConfig& cfg, Pairing kind) {
  PairHistogram3D h;
  h.variable = cfg.variable;
  h.layout = BinLayout::from(cfg);
  h.counts.assign(h.layout.size(), 0);
  h.total_pairs = combinatorial_total(shots, cfg.variable, kind);
  h.shots = nonempty(shots);

  const CellList cells(shots, h.layout);
  const bool is_sum = cfg.variable == Variable::sum;
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
  const BinLayout& layout = h.layout;

#pragma omp parallel
  {
    std::vector<std::uint64_t> local(layout.size(), 0);
#pragma omp for schedule(dynamic, 256)
    for (std::ptrdiff_t ia = 0; ia < n; ++ia) {
      const Vec3 va = cells.pos(ia);
      const int sa = cells.shot(ia);
      auto visit = [&](std::size_t b) {
        if (is_sum ? b <= static_cast<std::size_t>(ia) : b == static_cast<std::size_t>(ia)) return;
        const Vec3 v = is_sum ? va + cells.pos(b) : va - cells.pos(b);
        std::size_t bin;
        if (layout.bin_of(v, bin)) ++local[bin];
      };
      cells.for_cells_near(is_sum ? -va : va, [&](std::size_t begin, std::size_t end) {
        // Atoms in a cell are sorted by shot: find this shot's range.
        std::size_t mid_lo = begin, mid_hi = begin;
        {
          std::size_t lo = begin, hi = end;
          while (lo < hi) {
            const std::size_t m = (lo + hi) / 2;
            if (cells.shot(m) < sa) lo = m + 1;
            else hi = m;
          }
          mid_lo = lo;
          hi = end;
          while (lo < hi) {
            const std::size_t m = (lo + hi) / 2;
            if (cells.shot(m) <= sa) lo = m + 1;
            else hi = m;
          }
          mid_hi = lo;
        }
        if (kind == Pairing::same) {
          for (std::size_t b = mid_lo; b < mid_hi; ++b) visit(b);
        } else {
          for (std::size_t b = begin; b < mid_lo; ++b) visit(b);
          for (std::size_t b = mid_hi; b < end; ++b) visit(b);
        }
      });
    }
#pragma omp critical
    for (std::size_t i = 0; i < local.size(); ++i) h.counts[i] += local[i];
  }
  h.in_window = std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0});
  return h;
}

}  // namespace

PairHistogram3D same_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg) {
  return windowed(shots, cfg, Pairing::same);
}

PairHistogram3D cross_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg) {
  if (shots.size() < 2) throw std::invalid_argument("cross-shot histogram needs at least two shots");
  return windowed(shots, cfg, Pairing::cross);
}

namespace reference {

namespace {

PairHistogram3D all_pairs(const ShotVelocities& shots, const CorrelationConfig& cfg, bool same) {
  PairHistogram3D h;
  h.variable = cfg.variable;
  h.layout = BinLayout::from(cfg);
  h.counts.assign(h.layout.size(), 0);
  h.shots = nonempty(shots);
  std::uint64_t total = 0;
  auto add = [&](const Vec3& a, const Vec3& b) {
    std::size_t bin;
    if (cfg.variable == Variable::sum) {
      ++total;
      if (h.layout.bin_of(a + b, bin)) ++h.counts[bin];
    } else {
      total += 2;
      if (h.layout.bin_of(a - b, bin)) ++h.counts[bin];
      if (h.layout.bin_of(b - a, bin)) ++h.counts[bin];
    }
  };
  for (std::size_t s = 0; s < shots.size(); ++s) {
    const auto& A = shots[s];
    if (same) {
      for (std::size_t i = 0; i < A.size(); ++i)
        for (std::size_t j = i + 1; j < A.size(); ++j) add(A[i], A[j]);
    } else {
      for (std::size_t t = s + 1; t < shots.size(); ++t)
        for (const auto& a : A)
          for (const auto& b : shots[t]) add(a, b);
    }
  }
  h.total_pairs = total;
  h.in_window = std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0});
  return h;
}

}  // namespace

PairHistogram3D same_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg) {
  return all_pairs(shots, cfg, true);
}

PairHistogram3D cross_shot_histogram(const ShotVelocities& shots, const CorrelationConfig& cfg) {
  if (shots.size() < 2) throw std::invalid_argument("cross-shot histogram needs at least two shots");
  return all_pairs(shots, cfg, false);
}

}  // namespace reference

}  // namespace pairhalo::correlator
