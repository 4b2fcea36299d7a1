#pragma once

#include <cstddef>
#include <vector>

namespace mfje {

// Piecewise-linear function through knots (t_i, v_i), constant beyond the
// first and last knot.
class PiecewiseLinear {
 public:
  PiecewiseLinear(double constant = 0.0) : t_{0.0}, v_{constant} {}
  PiecewiseLinear(std::vector<double> times, std::vector<double> values);

  double operator()(double t) const;
  // Exact integral over [a, b] (a <= b).
  double integral(double a, double b) const;
  double max() const;
  double min() const;
  double sup_abs() const;
  bool is_constant() const;

  const std::vector<double>& times() const noexcept { return t_; }
  const std::vector<double>& values() const noexcept { return v_; }

 private:
  std::vector<double> t_;
  std::vector<double> v_;
};

}  // namespace mfje
