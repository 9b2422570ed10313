#pragma once

#include <limits>
#include <span>
#include <string_view>

#include "kmf/model.hpp"

namespace kmf {

// contraction: the coupling argument for two solutions.
// doubled_alpha: the second-moment argument, where alpha enters as 2 alpha.
enum class RateVariant { contraction, doubled_alpha };

// paper:    eps fixed to beta, rate = min(c1, c2) / lambda_max(Q), maximised over b.
// full:     same objective, maximised over (b, eps) with eps in (0, 2 beta].
// full_lmi: largest C with diag(c1, c2) - C Q >= 0, maximised over (b, eps).
enum class SearchMode { paper, full, full_lmi };

RateVariant rate_variant_from_string(std::string_view name);
SearchMode search_mode_from_string(std::string_view name);
std::string_view to_string(RateVariant v);
std::string_view to_string(SearchMode m);

struct OpenInterval {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double b) const { return b > lo && b < hi; }
  bool empty() const { return !(lo < hi); }
};

// Q(x, v) = b beta |x|^2 + 2 x.v + b |v|^2, i.e. [[b beta, 1], [1, b]] on each
// coordinate pair (x_k, v_k).
class QForm {
 public:
  QForm(double b, double beta);

  double b() const { return b_; }
  double beta() const { return beta_; }
  bool positive_definite() const { return b_ * b_ * beta_ > 1.0; }

  double lambda_min() const;
  double lambda_max() const;

  double operator()(std::span<const double> x, std::span<const double> v) const;
  double operator()(double x, double v) const { return b_ * beta_ * x * x + 2.0 * x * v + b_ * v * v; }

 private:
  double b_;
  double beta_;
};

struct SpectralBounds {
  double lambda_min;
  double lambda_max;
  double cprime;  // sqrt(lambda_max / lambda_min)
};

// Throws std::invalid_argument when Q is not positive definite.
SpectralBounds equivalence_constants(const QForm& q);

// Smallness threshold on eta = gamma + delta: the smaller root of
//   2 eta^2 - eta (2 + a^2/beta + beta + 4 alpha') + 2 alpha' beta,
// a = alpha or 2 alpha by variant, capped at beta sqrt(beta) / (1 + 2 sqrt(beta)).
double eta0(const Coefficients& coeffs, RateVariant variant = RateVariant::contraction);

struct Dissipation {
  double c1;  // |x|^2 coefficient: 2 beta - 2 eta - eps - eta b
  double c2;  // |v|^2 coefficient: (2 alpha' - eta) b - 2 - k alpha^2 / eps
};

Dissipation dissipation(const Coefficients& coeffs, double eta, double b, double eps,
                        RateVariant variant = RateVariant::contraction);

// Values of b with c1 > 0, c2 > 0 and Q positive definite. Throws
// InadmissibleError if eta >= eta0 and std::invalid_argument if the interval is
// empty or eps <= 0.
OpenInterval admissible_b_interval(const Coefficients& coeffs, double eta, double eps,
                                   RateVariant variant = RateVariant::contraction);

// Largest C with diag(c1, c2) - C [[b beta, 1], [1, b]] positive semidefinite.
double lmi_rate(double c1, double c2, double b, double beta);

struct RateReport {
  double eta = 0.0;
  double eta0 = 0.0;
  OpenInterval b_interval;  // at eps_star
  double b_star = 0.0;
  double eps_star = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double rate_C = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double equivalence_Cprime = 0.0;
  RateVariant variant = RateVariant::contraction;
  SearchMode mode = SearchMode::paper;
  double beta = 1.0;

  QForm qform() const { return QForm(b_star, beta); }
};

RateReport contraction_rate(const Coefficients& coeffs, double gamma_delta_sum,
                            RateVariant variant = RateVariant::contraction,
                            SearchMode mode = SearchMode::paper);

// Validates the field's declared constants first; throws kmf::Error listing the
// violations when they do not hold.
RateReport rate_report_for_field(const ForceField& field,
                                 RateVariant variant = RateVariant::contraction,
                                 SearchMode mode = SearchMode::paper,
                                 std::size_t validation_samples = 20000);

}  // namespace kmf
