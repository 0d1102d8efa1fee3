#pragma once

// Grid-binned probability measures on T^d or [0,1] x T^(d-1).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "phdyn/torus.hpp"

namespace phdyn {

enum class DomainTag : std::uint32_t { torus = 0, interval_torus = 1 };

template <int D>
class HistogramMeasure {
 public:
  HistogramMeasure() = default;

  HistogramMeasure(std::array<int, D> res, DomainTag tag = DomainTag::torus) : res_(res), tag_(tag) {
    std::size_t n = 1;
    for (int r : res) {
      if (r < 1) throw InvalidArgument("histogram resolution must be positive");
      n *= static_cast<std::size_t>(r);
    }
    mass_.assign(n, 0.0);
  }

  static HistogramMeasure cube(int res, DomainTag tag = DomainTag::torus) {
    std::array<int, D> r;
    r.fill(res);
    return HistogramMeasure(r, tag);
  }

  /// Normalized Lebesgue (Haar) measure on the grid.
  static HistogramMeasure uniform(int res, DomainTag tag = DomainTag::torus) {
    auto h = cube(res, tag);
    const double m = 1.0 / static_cast<double>(h.cells());
    std::fill(h.mass_.begin(), h.mass_.end(), m);
    return h;
  }

  const std::array<int, D>& resolution() const { return res_; }
  DomainTag tag() const { return tag_; }
  std::size_t cells() const { return mass_.size(); }
  const std::vector<double>& masses() const { return mass_; }
  std::vector<double>& masses() { return mass_; }
  double operator[](std::size_t i) const { return mass_[i]; }

  std::size_t cell_index(const TorusPoint<D>& p) const {
    std::size_t idx = 0;
    for (int i = 0; i < D; ++i) {
      int c = static_cast<int>(std::floor(p[i] * res_[static_cast<std::size_t>(i)]));
      c = std::clamp(c, 0, res_[static_cast<std::size_t>(i)] - 1);
      idx = idx * static_cast<std::size_t>(res_[static_cast<std::size_t>(i)]) + static_cast<std::size_t>(c);
    }
    return idx;
  }

  std::array<int, D> cell_coords(std::size_t idx) const {
    std::array<int, D> c;
    for (int i = D - 1; i >= 0; --i) {
      const auto r = static_cast<std::size_t>(res_[static_cast<std::size_t>(i)]);
      c[static_cast<std::size_t>(i)] = static_cast<int>(idx % r);
      idx /= r;
    }
    return c;
  }

  TorusPoint<D> cell_center(std::size_t idx) const {
    const auto c = cell_coords(idx);
    Vec<D> v;
    for (int i = 0; i < D; ++i)
      v[i] = (c[static_cast<std::size_t>(i)] + 0.5) / res_[static_cast<std::size_t>(i)];
    return TorusPoint<D>::wrap(v, tag_ == DomainTag::interval_torus);
  }

  void deposit(const TorusPoint<D>& p, double m) { mass_[cell_index(p)] += m; }

  double total() const { return std::accumulate(mass_.begin(), mass_.end(), 0.0); }

  void normalize() {
    const double t = total();
    if (!(t > 0.0)) throw NumericalError("cannot normalize an empty histogram");
    for (double& m : mass_) m /= t;
  }

  /// Cell-wise sum, used to merge per-worker partial histograms in a fixed order.
  void add(const HistogramMeasure& o) {
    require_same_grid(o);
    for (std::size_t i = 0; i < mass_.size(); ++i) mass_[i] += o.mass_[i];
  }

  void scale(double s) {
    for (double& m : mass_) m *= s;
  }

  /// Merge each 2^D block of cells into one (every axis must be even).
  HistogramMeasure coarsen() const {
    std::array<int, D> r;
    for (int i = 0; i < D; ++i) {
      if (res_[static_cast<std::size_t>(i)] % 2 != 0) throw InvalidArgument("coarsen needs even resolutions");
      r[static_cast<std::size_t>(i)] = res_[static_cast<std::size_t>(i)] / 2;
    }
    HistogramMeasure out(r, tag_);
    for (std::size_t idx = 0; idx < mass_.size(); ++idx) {
      const auto c = cell_coords(idx);
      std::size_t j = 0;
      for (int i = 0; i < D; ++i)
        j = j * static_cast<std::size_t>(r[static_cast<std::size_t>(i)]) +
            static_cast<std::size_t>(c[static_cast<std::size_t>(i)] / 2);
      out.mass_[j] += mass_[idx];
    }
    return out;
  }

  void require_same_grid(const HistogramMeasure& o) const {
    if (res_ != o.res_ || tag_ != o.tag_) throw InvalidArgument("histogram grids differ");
  }

  /// Total-variation distance (1/2) sum |mu_i - nu_i|.
  friend double tv_distance(const HistogramMeasure& a, const HistogramMeasure& b) {
    a.require_same_grid(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.mass_.size(); ++i) s += std::abs(a.mass_[i] - b.mass_[i]);
    return 0.5 * s;
  }

  /// CSV with one row per cell: cell indices, cell center, mass.
  void write_csv(std::ostream& os, std::uint64_t config_hash) const {
    os << "# config_hash=" << hex_hash(config_hash) << '\n';
    for (int i = 0; i < D; ++i) os << 'i' << i << ',';
    for (int i = 0; i < D; ++i) os << 'x' << i << ',';
    os << "mass\n";
    os << std::setprecision(17);
    for (std::size_t idx = 0; idx < mass_.size(); ++idx) {
      const auto c = cell_coords(idx);
      const auto p = cell_center(idx);
      for (int i = 0; i < D; ++i) os << c[static_cast<std::size_t>(i)] << ',';
      for (int i = 0; i < D; ++i) os << p[i] << ',';
      os << mass_[idx] << '\n';
    }
  }

  /// Binary layout (little-endian): "PHDH", u32 version=1, u32 dims, u32 tag,
  /// u32 res[dims], u64 config hash, f64 masses in row-major order.
  void write_binary(std::ostream& os, std::uint64_t config_hash) const {
    os.write("PHDH", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(D));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(tag_));
    for (int r : res_) put<std::uint32_t>(os, static_cast<std::uint32_t>(r));
    put<std::uint64_t>(os, config_hash);
    for (double m : mass_) put<double>(os, m);
  }

  static HistogramMeasure read_binary(std::istream& is, std::uint64_t* config_hash = nullptr) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "PHDH", 4) != 0) throw InvalidArgument("not a PHDH histogram");
    if (get<std::uint32_t>(is) != 1) throw InvalidArgument("unsupported histogram version");
    if (get<std::uint32_t>(is) != static_cast<std::uint32_t>(D)) throw InvalidArgument("dimension mismatch");
    const auto tag = static_cast<DomainTag>(get<std::uint32_t>(is));
    std::array<int, D> res;
    for (int& r : res) r = static_cast<int>(get<std::uint32_t>(is));
    HistogramMeasure h(res, tag);
    const auto hash = get<std::uint64_t>(is);
    if (config_hash) *config_hash = hash;
    for (double& m : h.mass_) m = get<double>(is);
    if (!is) throw InvalidArgument("truncated histogram payload");
    return h;
  }

  static std::string hex_hash(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
  }

 private:
  template <typename T>
  static void put(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
  }
  template <typename T>
  static T get(std::istream& is) {
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

  std::array<int, D> res_{};
  DomainTag tag_ = DomainTag::torus;
  std::vector<double> mass_;
};

template <int D>
double measure_distance(const HistogramMeasure<D>& a, const HistogramMeasure<D>& b) {
  return tv_distance(a, b);
}

}  // namespace phdyn
