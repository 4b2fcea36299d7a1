#include "mfje/piecewise.hpp"

#include <algorithm>
#include <cmath>

#include "mfje/error.hpp"

namespace mfje {

PiecewiseLinear::PiecewiseLinear(std::vector<double> times, std::vector<double> values)
    : t_(std::move(times)), v_(std::move(values)) {
  if (t_.empty() || t_.size() != v_.size())
    throw InvalidArgument("piecewise", "knot times and values must be nonempty and of equal length");
  for (std::size_t i = 1; i < t_.size(); ++i)
    if (!(t_[i] > t_[i - 1])) throw InvalidArgument("piecewise", "knot times must be strictly increasing");
  for (double v : v_)
    if (!std::isfinite(v)) throw InvalidArgument("piecewise", "knot values must be finite");
}

double PiecewiseLinear::operator()(double t) const {
  if (t <= t_.front()) return v_.front();
  if (t >= t_.back()) return v_.back();
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - t_.begin());
  const double w = (t - t_[k - 1]) / (t_[k] - t_[k - 1]);
  return v_[k - 1] + w * (v_[k] - v_[k - 1]);
}

double PiecewiseLinear::integral(double a, double b) const {
  if (b < a) return -integral(b, a);
  if (v_.size() == 1) return v_[0] * (b - a);
  // Trapezoid between consecutive breakpoints is exact for linear pieces.
  double total = 0.0;
  double x = a;
  double fx = (*this)(a);
  auto it = std::upper_bound(t_.begin(), t_.end(), a);
  for (; it != t_.end() && *it < b; ++it) {
    const double f = (*this)(*it);
    total += 0.5 * (fx + f) * (*it - x);
    x = *it;
    fx = f;
  }
  total += 0.5 * (fx + (*this)(b)) * (b - x);
  return total;
}

double PiecewiseLinear::max() const { return *std::max_element(v_.begin(), v_.end()); }
double PiecewiseLinear::min() const { return *std::min_element(v_.begin(), v_.end()); }
double PiecewiseLinear::sup_abs() const { return std::max(std::abs(max()), std::abs(min())); }

bool PiecewiseLinear::is_constant() const {
  return std::all_of(v_.begin(), v_.end(), [&](double v) { return v == v_.front(); });
}

}  // namespace mfje
