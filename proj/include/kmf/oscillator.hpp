#pragma once

#include <array>
#include <cmath>

namespace kmf {

// exp(M t) for M = [[0, 1], [-stiffness, -friction]], i.e. the flow of
// x' = v, v' = -friction v - stiffness x. Row-major.
inline std::array<double, 4> damped_oscillator_flow(double friction, double stiffness, double t) {
  const double mu = -0.5 * friction;
  const double s2 = mu * mu - stiffness;
  double ch;
  double sh;  // sinh(s t)/s in the generalised sense
  if (s2 > 0.0) {
    const double s = std::sqrt(s2);
    ch = std::cosh(s * t);
    sh = std::sinh(s * t) / s;
  } else if (s2 < 0.0) {
    const double w = std::sqrt(-s2);
    ch = std::cos(w * t);
    sh = std::sin(w * t) / w;
  } else {
    ch = 1.0;
    sh = t;
  }
  // (M - mu I)^2 = s2 I, so exp(M t) = e^{mu t} (ch I + sh (M - mu I)).
  const double e = std::exp(mu * t);
  return {e * (ch - sh * mu), e * sh, -e * sh * stiffness, e * (ch + sh * (-friction - mu))};
}

}  // namespace kmf
