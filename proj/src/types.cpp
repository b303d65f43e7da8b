#include "dcsflow/types.hpp"

#include <algorithm>
#include <cmath>

#include "dcsflow/errors.hpp"

namespace dcsflow {

Vec2 GridSpec::clamp(const Vec2& p) const {
  return {std::clamp(p.x(), x_range.lo, x_range.hi),
          std::clamp(p.y(), y_range.lo, y_range.hi)};
}

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw ValidationError("grid: nx and ny must be at least 2");
  if (!(x_range.lo < x_range.hi) || !(y_range.lo < y_range.hi))
    throw ValidationError("grid: ranges must be nonempty intervals");
}

int TimeGrid::nearest_index(double t) const {
  const int k = static_cast<int>(std::lround((t - t0) / dt));
  return std::clamp(k, 0, count - 1);
}

void TimeGrid::validate() const {
  if (!(dt > 0.0)) throw ValidationError("time grid: dt must be positive");
  if (count < 1) throw ValidationError("time grid: need at least one snapshot");
  if (!std::isfinite(t0)) throw ValidationError("time grid: t0 must be finite");
}

}  // namespace dcsflow
