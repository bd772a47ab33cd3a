#pragma once

#include "latfit/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace latfit {

enum class AtomKind { Interior, Boundary };

/// Axis-aligned box Ω = [lo, hi].
template <int Dim>
struct Box {
  Vec<Dim> lo = Vec<Dim>::Zero();
  Vec<Dim> hi = Vec<Dim>::Zero();

  bool contains(const Vec<Dim>& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }

  /// Euclidean distance from x to the box (0 inside).
  double distance(const Vec<Dim>& x) const {
    const Vec<Dim> below = (lo - x).cwiseMax(0.0);
    const Vec<Dim> above = (x - hi).cwiseMax(0.0);
    return (below + above).norm();
  }
};

/// Atom positions with interior/boundary tags and a uniform cell index for
/// fixed-radius queries. Immutable after construction.
template <int Dim>
class Configuration {
 public:
  Configuration() = default;

  Configuration(std::vector<Vec<Dim>> positions, std::vector<AtomKind> kinds, Box<Dim> box,
                double cell_edge)
      : positions_(std::move(positions)), kinds_(std::move(kinds)), box_(box),
        cell_edge_(cell_edge) {
    if (positions_.size() != kinds_.size()) throw Error("configuration: kinds/positions size mismatch");
    if (!(cell_edge_ > 0.0)) throw Error("configuration: cell edge must be positive");
    build_index();
  }

  std::size_t size() const { return positions_.size(); }
  const Vec<Dim>& position(std::size_t i) const { return positions_[i]; }
  AtomKind kind(std::size_t i) const { return kinds_[i]; }
  const std::vector<Vec<Dim>>& positions() const { return positions_; }
  const std::vector<AtomKind>& kinds() const { return kinds_; }
  const Box<Dim>& box() const { return box_; }
  double cell_edge() const { return cell_edge_; }

  /// Indices of atoms with |x_i − x| < radius, in increasing order.
  std::vector<std::size_t> query(const Vec<Dim>& x, double radius) const {
    std::vector<std::size_t> out;
    if (positions_.empty()) return out;
    const int reach = static_cast<int>(std::ceil(radius / cell_edge_));
    std::array<int, Dim> center{}, lo{}, hi{};
    for (int k = 0; k < Dim; ++k) {
      center[k] = cell_coord(x(k), k);
      lo[k] = std::max(0, center[k] - reach);
      hi[k] = std::min(dims_[k] - 1, center[k] + reach);
      if (lo[k] > hi[k]) return out;
    }
    const double r2 = radius * radius;
    std::array<int, Dim> c = lo;
    for (;;) {
      const std::size_t cell = flat(c);
      for (std::size_t p = cell_start_[cell]; p < cell_start_[cell + 1]; ++p) {
        const std::size_t i = cell_atoms_[p];
        if ((positions_[i] - x).squaredNorm() < r2) out.push_back(i);
      }
      int k = 0;
      while (k < Dim) {
        if (++c[k] <= hi[k]) break;
        c[k] = lo[k];
        ++k;
      }
      if (k == Dim) break;
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Checks that interior atoms lie in Ω and boundary atoms in B_{4λ}(Ω)∖Ω.
  /// Returns the index of the first offending atom, or size() if none.
  std::size_t first_misplaced(double lambda) const {
    for (std::size_t i = 0; i < size(); ++i) {
      const bool inside = box_.contains(positions_[i]);
      if (kinds_[i] == AtomKind::Interior && !inside) return i;
      if (kinds_[i] == AtomKind::Boundary && (inside || box_.distance(positions_[i]) >= 4.0 * lambda))
        return i;
    }
    return size();
  }

 private:
  int cell_coord(double v, int k) const {
    const double c = std::floor((v - origin_(k)) / cell_edge_);
    return static_cast<int>(std::clamp(c, -1.0e9, 1.0e9));
  }

  std::size_t flat(const std::array<int, Dim>& c) const {
    std::size_t f = 0;
    for (int k = Dim - 1; k >= 0; --k) f = f * static_cast<std::size_t>(dims_[k]) + c[k];
    return f;
  }

  void build_index() {
    dims_.fill(1);
    origin_.setZero();
    if (positions_.empty()) {
      cell_start_.assign(2, 0);
      return;
    }
    Vec<Dim> lo = positions_.front(), hi = positions_.front();
    for (const auto& p : positions_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    origin_ = lo;
    std::size_t ncell = 1;
    for (int k = 0; k < Dim; ++k) {
      dims_[k] = static_cast<int>(std::floor((hi(k) - lo(k)) / cell_edge_)) + 1;
      ncell *= static_cast<std::size_t>(dims_[k]);
    }
    std::vector<std::size_t> cell_of(positions_.size());
    cell_start_.assign(ncell + 1, 0);
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      std::array<int, Dim> c{};
      for (int k = 0; k < Dim; ++k) c[k] = std::min(dims_[k] - 1, cell_coord(positions_[i](k), k));
      cell_of[i] = flat(c);
      ++cell_start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) cell_start_[c + 1] += cell_start_[c];
    cell_atoms_.resize(positions_.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < positions_.size(); ++i) cell_atoms_[fill[cell_of[i]]++] = i;
  }

  std::vector<Vec<Dim>> positions_;
  std::vector<AtomKind> kinds_;
  Box<Dim> box_{};
  double cell_edge_ = 1.0;
  Vec<Dim> origin_ = Vec<Dim>::Zero();
  std::array<int, Dim> dims_{};
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_atoms_;
};

}  // namespace latfit
