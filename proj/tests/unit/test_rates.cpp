#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "kmf/error.hpp"
#include "kmf/rates.hpp"

using namespace kmf;

namespace {

Coefficients coeffs(double alpha, double alpha_prime, double beta) {
  Coefficients c;
  c.alpha = alpha;
  c.alpha_prime = alpha_prime;
  c.beta = beta;
  return c;
}

// Smaller root of p eta^2 + q eta + r by the textbook formula.
double smaller_root(double p, double q, double r) {
  return (-q - std::sqrt(q * q - 4.0 * p * r)) / (2.0 * p);
}

double threshold_polynomial(const Coefficients& c, double a, double eta) {
  return 2.0 * eta * eta - eta * (2.0 + a * a / c.beta + c.beta + 4.0 * c.alpha_prime) +
         2.0 * c.alpha_prime * c.beta;
}

// First sign change of the polynomial on [0, 2 alpha'], located by scanning.
double scanned_root(const Coefficients& c, double a) {
  const int n = 200000;
  const double hi = 2.0 * c.alpha_prime;
  double prev = threshold_polynomial(c, a, 0.0);
  for (int i = 1; i <= n; ++i) {
    const double eta = hi * i / n;
    const double cur = threshold_polynomial(c, a, eta);
    if ((prev > 0.0) != (cur > 0.0)) return eta - 0.5 * hi / n;
    prev = cur;
  }
  return hi;
}

double lambda_max_closed(double b, double beta) {
  return 0.5 * (b * (beta + 1.0) + std::sqrt(b * b * (beta - 1.0) * (beta - 1.0) + 4.0));
}

// Objective of the two-step route written out directly from c1, c2 and Q.
double two_step_rate(const Coefficients& c, double eta, double b, double eps, double k) {
  const double c1 = 2.0 * c.beta - 2.0 * eta - eps - eta * b;
  const double c2 = (2.0 * c.alpha_prime - eta) * b - 2.0 - k * c.alpha * c.alpha / eps;
  if (c1 <= 0.0 || c2 <= 0.0 || b * b * c.beta <= 1.0) return 0.0;
  return std::min(c1, c2) / lambda_max_closed(b, c.beta);
}

// Largest C with (c1 - C b beta)(c2 - C b) >= C^2 and both factors nonnegative,
// by bisection on the closed-form 2x2 condition.
double lmi_oracle(const Coefficients& c, double eta, double b, double eps) {
  const double c1 = 2.0 * c.beta - 2.0 * eta - eps - eta * b;
  const double c2 = (2.0 * c.alpha_prime - eta) * b - 2.0 - c.alpha * c.alpha / eps;
  if (c1 <= 0.0 || c2 <= 0.0 || b * b * c.beta <= 1.0) return 0.0;
  auto psd = [&](double C) {
    const double p = c1 - C * b * c.beta;
    const double q = c2 - C * b;
    return p >= 0.0 && q >= 0.0 && p * q >= C * C;
  };
  double lo = 0.0, hi = std::min(c1 / (b * c.beta), c2 / b);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (psd(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace

TEST_SUITE("rates") {
  TEST_CASE("eta0 closed forms") {
    const Coefficients c = coeffs(1, 1, 1);
    CHECK(eta0(c) == doctest::Approx(2.0 - std::sqrt(3.0)).epsilon(1e-13));
    CHECK(eta0(c, RateVariant::doubled_alpha) ==
          doctest::Approx(smaller_root(2, -11, 2)).epsilon(1e-13));
    CHECK_THROWS(eta0(coeffs(0, 0, 1)));
    CHECK_THROWS(eta0(coeffs(1, 1, 0)));
  }

  TEST_CASE("eta0 for alpha = 0") {
    // 2 eta^2 - 7 eta + 2; the root lies below the cap 1/3.
    const double root = smaller_root(2, -7, 2);
    CHECK(threshold_polynomial(coeffs(0, 1, 1), 0.0, root) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(root == doctest::Approx(scanned_root(coeffs(0, 1, 1), 0.0)).epsilon(1e-5));
    CHECK(eta0(coeffs(0, 1, 1)) == doctest::Approx(root).epsilon(1e-13));
  }

  TEST_CASE("eta0 agrees with the sign scan and the cap over a grid") {
    for (double alpha : {0.5, 1.0, 2.0, 3.0}) {
      for (double ap_frac : {0.25, 0.5, 1.0}) {
        for (double beta : {0.25, 1.0, 4.0}) {
          const Coefficients c = coeffs(alpha, alpha * ap_frac, beta);
          for (RateVariant v : {RateVariant::contraction, RateVariant::doubled_alpha}) {
            const double a = v == RateVariant::contraction ? alpha : 2.0 * alpha;
            const double cap = beta * std::sqrt(beta) / (1.0 + 2.0 * std::sqrt(beta));
            const double root = scanned_root(c, a);
            CAPTURE(alpha);
            CAPTURE(beta);
            const double expected = std::min(root, cap);
            CHECK(eta0(c, v) == doctest::Approx(expected).epsilon(2e-5));
            CHECK(eta0(c, v) > 0.0);
            CHECK(eta0(c, v) < 2.0 * c.alpha_prime);
          }
        }
      }
    }
  }

  TEST_CASE("eta0 monotone in alpha and alpha'") {
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha = 1.0; alpha <= 4.0; alpha += 0.25) {
      const double e = eta0(coeffs(alpha, 1.0, 1.0));
      CHECK(e <= prev);
      prev = e;
    }
    prev = 0.0;
    for (double ap = 0.25; ap <= 3.0; ap += 0.25) {
      const double e = eta0(coeffs(3.0, ap, 1.0));
      CHECK(e >= prev);
      prev = e;
    }
  }

  TEST_CASE("admissible b interval examples") {
    const Coefficients c = coeffs(1, 1, 1);
    const OpenInterval i1 = admissible_b_interval(c, 0.1, 1.0);
    CHECK(i1.lo == doctest::Approx(3.0 / 1.9).epsilon(1e-14));
    CHECK(i1.hi == doctest::Approx(8.0).epsilon(1e-14));
    // Endpoint substitution: both dissipation coefficients positive just
    // inside, one of them non-positive just outside.
    for (double eps_b : {1e-6}) {
      const Dissipation in_lo = dissipation(c, 0.1, i1.lo + eps_b, 1.0);
      const Dissipation out_lo = dissipation(c, 0.1, i1.lo - eps_b, 1.0);
      const Dissipation in_hi = dissipation(c, 0.1, i1.hi - eps_b, 1.0);
      const Dissipation out_hi = dissipation(c, 0.1, i1.hi + eps_b, 1.0);
      CHECK((in_lo.c1 > 0 && in_lo.c2 > 0));
      CHECK((in_hi.c1 > 0 && in_hi.c2 > 0));
      CHECK(out_lo.c2 <= 0.0);
      CHECK(out_hi.c1 <= 0.0);
    }
    const OpenInterval i0 = admissible_b_interval(c, 0.0, 1.0);
    CHECK(i0.lo == doctest::Approx(1.5));
    CHECK(std::isinf(i0.hi));
    CHECK_THROWS_AS(admissible_b_interval(c, 0.3, 1.0), InadmissibleError);
    CHECK_THROWS_AS(admissible_b_interval(c, 0.1, 0.0), std::invalid_argument);
  }

  TEST_CASE("dissipation coefficients") {
    const Coefficients c = coeffs(1, 1, 1);
    const Dissipation d = dissipation(c, 0.1, 2.0, 1.0);
    CHECK(d.c1 == doctest::Approx(2 - 0.2 - 1 - 0.2));
    CHECK(d.c2 == doctest::Approx(1.9 * 2 - 2 - 1));
    const Dissipation dd = dissipation(c, 0.1, 2.0, 1.0, RateVariant::doubled_alpha);
    CHECK(dd.c2 == doctest::Approx(1.9 * 2 - 2 - 4));
  }

  TEST_CASE("paper route at eta = 0 gives 1/3 at (2, 1)") {
    const RateReport r = contraction_rate(coeffs(1, 1, 1), 0.0);
    CHECK(r.rate_C == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(r.b_star == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(r.eps_star == 1.0);
    CHECK(r.equivalence_Cprime == doctest::Approx(std::sqrt(3.0)).epsilon(1e-6));
  }

  TEST_CASE("paper route matches a direct grid search") {
    for (double eta : {0.0, 0.05, 0.1, 0.2, 0.25}) {
      const Coefficients c = coeffs(1, 1, 1);
      // Coarse scan, then a fine scan around the coarse winner.
      double best = 0.0, best_b = 1.0;
      for (int i = 1; i <= 100000; ++i) {
        const double b = 1.0 + 9.0 * i / 100000.0;
        const double v = two_step_rate(c, eta, b, 1.0, 1.0);
        if (v > best) {
          best = v;
          best_b = b;
        }
      }
      for (int i = -100000; i <= 100000; ++i) {
        best = std::max(best, two_step_rate(c, eta, best_b + 9e-5 * i / 100000.0, 1.0, 1.0));
      }
      const RateReport r = contraction_rate(c, eta);
      CAPTURE(eta);
      CHECK(r.rate_C == doctest::Approx(best).epsilon(1e-6));
      CHECK(r.rate_C >= best - 1e-12);
    }
    // The paper-route value at eta = 0.1 from the same oracle.
    const RateReport r = contraction_rate(coeffs(1, 1, 1), 0.1);
    CHECK(r.rate_C == doctest::Approx(0.21034).epsilon(1e-4));
  }

  TEST_CASE("full_lmi matches a dense (b, eps) grid oracle") {
    const Coefficients c = coeffs(1, 1, 1);
    double best = 0.0;
    double best_b = 0.0, best_eps = 0.0;
    for (int i = 1; i <= 900; ++i) {
      const double b = 1.0 + 9.0 * i / 900.0;
      for (int j = 1; j <= 400; ++j) {
        const double eps = 2.0 * j / 400.0;
        const double v = lmi_oracle(c, 0.0, b, eps);
        if (v > best) {
          best = v;
          best_b = b;
          best_eps = eps;
        }
      }
    }
    const RateReport r = contraction_rate(c, 0.0, RateVariant::contraction, SearchMode::full_lmi);
    CHECK(r.rate_C >= best - 1e-9);
    CHECK(r.rate_C == doctest::Approx(best).epsilon(5e-3));
    CHECK(r.b_star == doctest::Approx(best_b).epsilon(0.05));
    CHECK(r.eps_star == doctest::Approx(best_eps).epsilon(0.05));
    CHECK(lmi_rate(r.c1, r.c2, r.b_star, 1.0) ==
          doctest::Approx(lmi_oracle(c, 0.0, r.b_star, r.eps_star)).epsilon(1e-9));
  }

  TEST_CASE("full route matches a dense (b, eps) grid oracle") {
    const Coefficients c = coeffs(1, 1, 1);
    double best = 0.0;
    for (int i = 1; i <= 2000; ++i) {
      const double b = 1.0 + 9.0 * i / 2000.0;
      for (int j = 1; j <= 1000; ++j) {
        best = std::max(best, two_step_rate(c, 0.0, b, 2.0 * j / 1000.0, 1.0));
      }
    }
    const RateReport r = contraction_rate(c, 0.0, RateVariant::contraction, SearchMode::full);
    CHECK(r.rate_C >= best - 1e-9);
    CHECK(r.rate_C == doctest::Approx(best).epsilon(1e-3));
    CHECK(r.rate_C == doctest::Approx(0.4).epsilon(1e-3));
    CHECK(r.b_star == doctest::Approx(2.75).epsilon(1e-3));
    CHECK(r.eps_star == doctest::Approx(0.5).epsilon(1e-3));
  }

  TEST_CASE("search modes are ordered and reproducible") {
    for (double eta : {0.0, 0.1, 0.2}) {
      const Coefficients c = coeffs(1, 1, 1);
      const double p = contraction_rate(c, eta).rate_C;
      const double f = contraction_rate(c, eta, RateVariant::contraction, SearchMode::full).rate_C;
      const double l = contraction_rate(c, eta, RateVariant::contraction, SearchMode::full_lmi).rate_C;
      CHECK(p <= f + 1e-10);
      CHECK(f <= l + 1e-10);
      CHECK(contraction_rate(c, eta).rate_C == p);
    }
  }

  TEST_CASE("reported constants satisfy their invariants") {
    for (double alpha : {1.0, 2.0}) {
      for (double beta : {0.5, 1.0, 3.0}) {
        const Coefficients c = coeffs(alpha, 1.0, beta);
        for (RateVariant v : {RateVariant::contraction, RateVariant::doubled_alpha}) {
          const double e0 = eta0(c, v);
          for (double frac : {0.0, 0.3, 0.6, 0.9}) {
            for (SearchMode m : {SearchMode::paper, SearchMode::full, SearchMode::full_lmi}) {
              RateReport r;
              try {
                r = contraction_rate(c, frac * e0, v, m);
              } catch (const std::invalid_argument&) {
                continue;  // eps = beta can leave no admissible b in the paper route
              }
              CHECK(r.c1 > 0.0);
              CHECK(r.c2 > 0.0);
              CHECK(r.rate_C > 0.0);
              if (m == SearchMode::full_lmi) {
                // Only the matrix inequality holds: diag(c1, c2) - C Q stays semidefinite.
                const double p = r.c1 - r.rate_C * r.b_star * beta;
                const double q = r.c2 - r.rate_C * r.b_star;
                CHECK(p >= -1e-10);
                CHECK(q >= -1e-10);
                CHECK(p * q - r.rate_C * r.rate_C >= -1e-9);
              } else {
                CHECK(r.rate_C * r.lambda_max <= std::min(r.c1, r.c2) + 1e-10);
              }
              CHECK(r.equivalence_Cprime >= 1.0);
            }
          }
        }
      }
    }
    CHECK_THROWS_AS(contraction_rate(coeffs(1, 1, 1), 0.3), InadmissibleError);
  }

  TEST_CASE("equivalence constants") {
    const SpectralBounds s = equivalence_constants(QForm(2.0, 1.0));
    CHECK(s.lambda_min == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.lambda_max == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(s.cprime == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
    CHECK_THROWS_AS(equivalence_constants(QForm(1.0, 1.0)), std::invalid_argument);
    const SpectralBounds t = equivalence_constants(QForm(2.0, 4.0));
    CHECK(t.lambda_min == doctest::Approx((10.0 - std::sqrt(40.0)) / 2.0).epsilon(1e-14));
    CHECK(t.lambda_max == doctest::Approx((10.0 + std::sqrt(40.0)) / 2.0).epsilon(1e-14));
  }

  TEST_CASE("QForm trace, determinant and sandwich") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ub(0.3, 5.0);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
      const double beta = ub(rng);
      const double b = 1.0 / std::sqrt(beta) + ub(rng);
      const QForm q(b, beta);
      REQUIRE(q.positive_definite());
      CHECK(q.lambda_min() * q.lambda_max() == doctest::Approx(b * b * beta - 1.0).epsilon(1e-12));
      CHECK(q.lambda_min() + q.lambda_max() == doctest::Approx(b * (beta + 1.0)).epsilon(1e-12));
    }
    const QForm q(2.0, 1.0);
    double below = 0.0, above = 0.0;
    for (int s = 0; s < 100000; ++s) {
      const double x[2] = {g(rng), g(rng)};
      const double v[2] = {g(rng), g(rng)};
      const double norm = x[0] * x[0] + x[1] * x[1] + v[0] * v[0] + v[1] * v[1];
      const double val = q(std::span<const double>(x, 2), std::span<const double>(v, 2));
      below = std::max(below, (q.lambda_min() * norm - val) / norm);
      above = std::max(above, (val - q.lambda_max() * norm) / norm);
    }
    CHECK(below <= 1e-12);
    CHECK(above <= 1e-12);
    CHECK_FALSE(QForm(0.9, 1.0).positive_definite());
    CHECK(QForm(1.01, 1.0).positive_definite());
  }
}
