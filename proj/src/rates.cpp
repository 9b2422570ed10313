#include "kmf/rates.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kmf/error.hpp"

namespace kmf {

namespace {

constexpr int kGridPoints = 2000;
constexpr int kEpsGridPoints = 200;
// Upper end of the b search when the admissible interval is unbounded.
constexpr double kUnboundedSpan = 64.0;

struct Argmax {
  double x;
  double value;
};

// Grid scan followed by golden-section refinement around the best grid cell.
// Assumes f is unimodal on (lo, hi); ties go to the smaller abscissa.
template <typename F>
Argmax maximize(F&& f, double lo, double hi, int grid_points) {
  const double h = (hi - lo) / grid_points;
  int best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double value = f(x);
    if (value > best_value) {
      best_value = value;
      best = i;
    }
  }
  double a = std::max(lo, lo + (best - 0.5) * h);
  double b = std::min(hi, lo + (best + 1.5) * h);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > 1e-13 * (1.0 + std::abs(a))) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  const double x = 0.5 * (a + b);
  const double value = f(x);
  const double grid_x = lo + (best + 0.5) * h;
  if (best_value > value) return {grid_x, best_value};
  return {x, value};
}

double alpha_factor(RateVariant variant) {
  return variant == RateVariant::contraction ? 1.0 : 4.0;
}

// Admissible interval or an empty one, without throwing.
OpenInterval interval_or_empty(const Coefficients& c, double eta, double eps, RateVariant variant) {
  const double k = alpha_factor(variant);
  OpenInterval iv;
  iv.lo = std::max((2.0 + k * c.alpha * c.alpha / eps) / (2.0 * c.alpha_prime - eta),
                   1.0 / std::sqrt(c.beta));
  if (eta > 0.0) {
    iv.hi = (2.0 * c.beta - 2.0 * eta - eps) / eta;
  } else {
    iv.hi = (2.0 * c.beta - eps > 0.0) ? std::numeric_limits<double>::infinity() : iv.lo;
  }
  return iv;
}

double search_upper(const OpenInterval& iv) {
  return std::isfinite(iv.hi) ? iv.hi : kUnboundedSpan * std::max(1.0, iv.lo);
}

double objective(const Coefficients& c, double eta, double b, double eps, RateVariant variant,
                 SearchMode mode) {
  const Dissipation d = dissipation(c, eta, b, eps, variant);
  if (d.c1 <= 0.0 || d.c2 <= 0.0 || b * b * c.beta <= 1.0) {
    return -std::numeric_limits<double>::infinity();
  }
  if (mode == SearchMode::full_lmi) return lmi_rate(d.c1, d.c2, b, c.beta);
  return std::min(d.c1, d.c2) / QForm(b, c.beta).lambda_max();
}

Argmax best_b(const Coefficients& c, double eta, double eps, RateVariant variant, SearchMode mode) {
  const OpenInterval iv = interval_or_empty(c, eta, eps, variant);
  if (iv.empty()) return {iv.lo, -std::numeric_limits<double>::infinity()};
  return maximize([&](double b) { return objective(c, eta, b, eps, variant, mode); }, iv.lo,
                  search_upper(iv), kGridPoints);
}

}  // namespace

RateVariant rate_variant_from_string(std::string_view name) {
  if (name == "contraction") return RateVariant::contraction;
  if (name == "doubled_alpha") return RateVariant::doubled_alpha;
  throw std::invalid_argument("unknown rate variant '" + std::string(name) + "'");
}

SearchMode search_mode_from_string(std::string_view name) {
  if (name == "paper") return SearchMode::paper;
  if (name == "full") return SearchMode::full;
  if (name == "full_lmi") return SearchMode::full_lmi;
  throw std::invalid_argument("unknown search mode '" + std::string(name) + "'");
}

std::string_view to_string(RateVariant v) {
  return v == RateVariant::contraction ? "contraction" : "doubled_alpha";
}

std::string_view to_string(SearchMode m) {
  switch (m) {
    case SearchMode::paper: return "paper";
    case SearchMode::full: return "full";
    case SearchMode::full_lmi: return "full_lmi";
  }
  return "?";
}

QForm::QForm(double b, double beta) : b_(b), beta_(beta) {
  if (!(b > 0.0) || !(beta > 0.0) || !std::isfinite(b) || !std::isfinite(beta)) {
    throw std::invalid_argument("QForm: b and beta must be positive and finite");
  }
}

double QForm::lambda_min() const {
  const double disc = std::sqrt(b_ * b_ * (beta_ - 1.0) * (beta_ - 1.0) + 4.0);
  // Product of the eigenvalues is b^2 beta - 1; divide to avoid cancellation.
  return (b_ * b_ * beta_ - 1.0) / (0.5 * (b_ * (beta_ + 1.0) + disc));
}

double QForm::lambda_max() const {
  const double disc = std::sqrt(b_ * b_ * (beta_ - 1.0) * (beta_ - 1.0) + 4.0);
  return 0.5 * (b_ * (beta_ + 1.0) + disc);
}

double QForm::operator()(std::span<const double> x, std::span<const double> v) const {
  if (x.size() != v.size()) throw std::invalid_argument("QForm: x and v differ in length");
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (*this)(x[k], v[k]);
  return s;
}

SpectralBounds equivalence_constants(const QForm& q) {
  if (!q.positive_definite()) {
    throw std::invalid_argument("equivalence_constants: Q is not positive definite (b <= 1/sqrt(beta))");
  }
  const double lo = q.lambda_min();
  const double hi = q.lambda_max();
  return {lo, hi, std::sqrt(hi / lo)};
}

double eta0(const Coefficients& c, RateVariant variant) {
  if (!(c.alpha_prime > 0.0) || !(c.beta > 0.0)) {
    throw std::invalid_argument("eta0: alpha_prime and beta must be positive");
  }
  const double a = variant == RateVariant::contraction ? c.alpha : 2.0 * c.alpha;
  const double lin = 2.0 + a * a / c.beta + c.beta + 4.0 * c.alpha_prime;
  const double constant = 2.0 * c.alpha_prime * c.beta;
  // Smaller root of 2 e^2 - lin e + constant, in the cancellation-free form.
  const double root = 2.0 * constant / (lin + std::sqrt(lin * lin - 8.0 * constant));
  const double sb = std::sqrt(c.beta);
  const double cap = c.beta * sb / (1.0 + 2.0 * sb);
  return std::min(root, cap);
}

Dissipation dissipation(const Coefficients& c, double eta, double b, double eps,
                        RateVariant variant) {
  const double k = alpha_factor(variant);
  return {2.0 * c.beta - 2.0 * eta - eps - eta * b,
          (2.0 * c.alpha_prime - eta) * b - 2.0 - k * c.alpha * c.alpha / eps};
}

OpenInterval admissible_b_interval(const Coefficients& c, double eta, double eps,
                                   RateVariant variant) {
  c.validate();
  if (!(eps > 0.0)) throw std::invalid_argument("admissible_b_interval: eps must be positive");
  if (!(eta >= 0.0)) throw std::invalid_argument("admissible_b_interval: eta must be nonnegative");
  const double threshold = eta0(c, variant);
  if (eta >= threshold) {
    std::ostringstream msg;
    msg << "gamma + delta = " << eta << " is not below eta0 = " << threshold;
    throw InadmissibleError(msg.str(), eta, threshold);
  }
  const OpenInterval iv = interval_or_empty(c, eta, eps, variant);
  if (iv.empty()) {
    std::ostringstream msg;
    msg << "no admissible b for eta = " << eta << ", eps = " << eps << " (lo " << iv.lo
        << " >= hi " << iv.hi << ")";
    throw std::invalid_argument(msg.str());
  }
  return iv;
}

double lmi_rate(double c1, double c2, double b, double beta) {
  const double det = b * b * beta - 1.0;
  if (c1 <= 0.0 || c2 <= 0.0 || det <= 0.0) return 0.0;
  const double s = b * (c1 + c2 * beta);
  const double disc = b * b * (c1 - c2 * beta) * (c1 - c2 * beta) + 4.0 * c1 * c2;
  return 2.0 * c1 * c2 / (s + std::sqrt(disc));
}

RateReport contraction_rate(const Coefficients& c, double eta, RateVariant variant,
                            SearchMode mode) {
  c.validate();
  if (!(eta >= 0.0)) throw std::invalid_argument("contraction_rate: eta must be nonnegative");
  const double threshold = eta0(c, variant);
  if (eta >= threshold) {
    std::ostringstream msg;
    msg << "gamma + delta = " << eta << " is not below eta0 = " << threshold
        << " for alpha = " << c.alpha << ", alpha' = " << c.alpha_prime << ", beta = " << c.beta;
    throw InadmissibleError(msg.str(), eta, threshold);
  }

  double eps = c.beta;
  Argmax best{};
  if (mode == SearchMode::paper) {
    best = best_b(c, eta, eps, variant, mode);
  } else {
    const double eps_hi = std::min(2.0 * c.beta, 2.0 * c.beta - 2.0 * eta);
    const Argmax outer = maximize(
        [&](double e) { return best_b(c, eta, e, variant, mode).value; }, 0.0, eps_hi,
        kEpsGridPoints);
    eps = outer.x;
    best = best_b(c, eta, eps, variant, mode);
  }
  if (!(best.value > 0.0)) {
    throw std::invalid_argument("contraction_rate: no admissible (b, eps) found");
  }

  RateReport r;
  r.eta = eta;
  r.eta0 = threshold;
  r.b_interval = interval_or_empty(c, eta, eps, variant);
  r.b_star = best.x;
  r.eps_star = eps;
  const Dissipation d = dissipation(c, eta, r.b_star, eps, variant);
  r.c1 = d.c1;
  r.c2 = d.c2;
  r.rate_C = best.value;
  r.beta = c.beta;
  const SpectralBounds sb = equivalence_constants(QForm(r.b_star, c.beta));
  r.lambda_min = sb.lambda_min;
  r.lambda_max = sb.lambda_max;
  r.equivalence_Cprime = sb.cprime;
  r.variant = variant;
  r.mode = mode;
  return r;
}

RateReport rate_report_for_field(const ForceField& field, RateVariant variant, SearchMode mode,
                                 std::size_t validation_samples) {
  const ValidationReport v = validate_constants(field, validation_samples, 0x9e3779b97f4a7c15ULL);
  if (!v.consistent()) {
    std::string msg = "declared constants do not hold for this field:";
    for (const auto& line : v.violations) msg += "\n  " + line;
    throw Error(msg);
  }
  return contraction_rate(field.coeffs(), field.coeffs().eta(), variant, mode);
}

}  // namespace kmf
