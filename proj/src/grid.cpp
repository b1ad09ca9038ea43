#include "geomap/grid.hpp"

#include <cmath>
#include <limits>

#include "geomap/errors.hpp"

namespace geomap {

GridSpec::GridSpec(Vec lower, Vec upper, std::vector<int> cells)
    : lower_(std::move(lower)), upper_(std::move(upper)), cells_(std::move(cells)) {
  if (lower_.size() != upper_.size() || static_cast<std::size_t>(lower_.size()) != cells_.size() || cells_.empty())
    throw PreconditionError("grid: inconsistent dimensions");
  size_ = 1;
  for (std::size_t a = 0; a < cells_.size(); ++a) {
    if (cells_[a] < 1) throw PreconditionError("grid: need at least one cell per axis");
    if (!(upper_[static_cast<Eigen::Index>(a)] > lower_[static_cast<Eigen::Index>(a)]))
      throw PreconditionError("grid: empty box");
    size_ *= static_cast<std::size_t>(cells_[a]);
  }
}

GridSpec GridSpec::covering(std::span<const ChartPoint> points, int cells_per_axis, double expand) {
  if (points.empty()) throw PreconditionError("grid: no points to cover");
  const Eigen::Index d = points.front().dim();
  Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(d, -std::numeric_limits<double>::infinity());
  for (const auto& p : points) {
    lo = lo.cwiseMin(p.coords);
    hi = hi.cwiseMax(p.coords);
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    double extent = hi[a] - lo[a];
    if (extent <= 0.0) extent = 1.0;
    lo[a] -= 0.5 * expand * extent;
    hi[a] += 0.5 * expand * extent;
  }
  return GridSpec(lo, hi, std::vector<int>(static_cast<std::size_t>(d), cells_per_axis));
}

Vec GridSpec::spacing() const {
  Vec h(dim());
  for (Eigen::Index a = 0; a < dim(); ++a) h[a] = spacing(a);
  return h;
}

std::optional<std::size_t> GridSpec::cell_of(const Vec& p) const {
  std::size_t flat_index = 0;
  std::size_t stride = 1;
  for (Eigen::Index a = 0; a < dim(); ++a) {
    const double x = p[a];
    if (!(x >= lower_[a] && x <= upper_[a])) return std::nullopt;
    const int n = cells_[static_cast<std::size_t>(a)];
    int i = static_cast<int>(std::floor((x - lower_[a]) / spacing(a)));
    if (i >= n) i = n - 1;
    if (i < 0) i = 0;
    flat_index += static_cast<std::size_t>(i) * stride;
    stride *= static_cast<std::size_t>(n);
  }
  return flat_index;
}

std::size_t GridSpec::flat(std::span<const int> index) const {
  std::size_t flat_index = 0;
  std::size_t stride = 1;
  for (std::size_t a = 0; a < cells_.size(); ++a) {
    flat_index += static_cast<std::size_t>(index[a]) * stride;
    stride *= static_cast<std::size_t>(cells_[a]);
  }
  return flat_index;
}

std::vector<int> GridSpec::unflatten(std::size_t flat_index) const {
  std::vector<int> index(cells_.size());
  for (std::size_t a = 0; a < cells_.size(); ++a) {
    index[a] = static_cast<int>(flat_index % static_cast<std::size_t>(cells_[a]));
    flat_index /= static_cast<std::size_t>(cells_[a]);
  }
  return index;
}

Vec GridSpec::center(std::size_t flat_index) const {
  const auto index = unflatten(flat_index);
  Vec c(dim());
  for (Eigen::Index a = 0; a < dim(); ++a)
    c[a] = lower_[a] + (index[static_cast<std::size_t>(a)] + 0.5) * spacing(a);
  return c;
}

bool GridSpec::operator==(const GridSpec& other) const {
  return cells_ == other.cells_ && lower_ == other.lower_ && upper_ == other.upper_;
}

}  // namespace geomap
