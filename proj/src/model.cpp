#include "kmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace kmf {

namespace {

constexpr double kConstantTolerance = 1e-9;

bool finite_nonneg(double c) { return std::isfinite(c) && c >= 0.0; }

void require_size(std::span<const double> in, std::span<double> out, int dim) {
  if (static_cast<int>(in.size()) != dim || out.size() != in.size()) {
    throw std::invalid_argument("force field: vector length does not match dim");
  }
}

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double c : a) s += c * c;
  return std::sqrt(s);
}

}  // namespace

void Coefficients::validate() const {
  if (!finite_nonneg(alpha) || !finite_nonneg(alpha_prime) || !finite_nonneg(beta) ||
      !finite_nonneg(gamma) || !finite_nonneg(delta)) {
    throw std::invalid_argument("coefficients must be finite and nonnegative");
  }
  if (dim < 1) throw std::invalid_argument("dim must be at least 1");
  if (alpha_prime > alpha) {
    throw std::invalid_argument("alpha_prime cannot exceed alpha");
  }
}

FieldKind field_kind_from_string(std::string_view name) {
  if (name == "linear") return FieldKind::linear;
  if (name == "sinusoidal") return FieldKind::sinusoidal;
  if (name == "custom") return FieldKind::custom;
  throw std::invalid_argument("unknown field kind '" + std::string(name) + "'");
}

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::linear: return "linear";
    case FieldKind::sinusoidal: return "sinusoidal";
    case FieldKind::custom: return "custom";
  }
  return "?";
}

ForceField make_field(FieldKind kind, const Coefficients& coeffs) {
  coeffs.validate();
  if (kind == FieldKind::custom) {
    throw std::invalid_argument("custom fields need explicit maps (ForceField::custom)");
  }
  return ForceField(kind, coeffs);
}

ForceField make_field(std::string_view kind, const Coefficients& coeffs) {
  return make_field(field_kind_from_string(kind), coeffs);
}

ForceField ForceField::custom(const Coefficients& coeffs, VectorMap friction,
                              VectorMap perturbation, VectorMap interaction) {
  coeffs.validate();
  if (!friction || !perturbation || !interaction) {
    throw std::invalid_argument("custom field: all three maps are required");
  }
  ForceField f(FieldKind::custom, coeffs);
  f.friction_ = std::move(friction);
  f.perturbation_ = std::move(perturbation);
  f.interaction_ = std::move(interaction);
  return f;
}

void ForceField::friction(std::span<const double> v, std::span<double> out) const {
  require_size(v, out, dim());
  if (kind_ == FieldKind::custom) return friction_(v, out);
  const double a = friction_coefficient();
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = a * v[k];
}

void ForceField::perturbation(std::span<const double> x, std::span<double> out) const {
  require_size(x, out, dim());
  switch (kind_) {
    case FieldKind::linear:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case FieldKind::sinusoidal:
      for (std::size_t k = 0; k < x.size(); ++k) out[k] = coeffs_.delta * std::sin(x[k]);
      return;
    case FieldKind::custom:
      return perturbation_(x, out);
  }
}

void ForceField::confinement(std::span<const double> x, std::span<double> out) const {
  perturbation(x, out);
  for (std::size_t k = 0; k < x.size(); ++k) out[k] += coeffs_.beta * x[k];
}

void ForceField::interaction(std::span<const double> z, std::span<double> out) const {
  require_size(z, out, dim());
  switch (kind_) {
    case FieldKind::linear:
      for (std::size_t k = 0; k < z.size(); ++k) out[k] = coeffs_.gamma * z[k];
      return;
    case FieldKind::sinusoidal:
      for (std::size_t k = 0; k < z.size(); ++k) out[k] = coeffs_.gamma * std::sin(z[k]);
      return;
    case FieldKind::custom:
      return interaction_(z, out);
  }
}

std::vector<double> drift(const ForceField& field, const PhasePoint& p,
                          std::span<const double> mean_force) {
  const auto d = static_cast<std::size_t>(field.dim());
  if (p.x.size() != d || p.v.size() != d || mean_force.size() != d) {
    throw std::invalid_argument("drift: dimension mismatch");
  }
  auto all_finite = [](std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double c) { return std::isfinite(c); });
  };
  if (!all_finite(p.x) || !all_finite(p.v) || !all_finite(mean_force)) {
    throw std::invalid_argument("drift: non-finite input");
  }
  std::vector<double> a(d), b(d), out(d);
  field.friction(p.v, a);
  field.confinement(p.x, b);
  for (std::size_t k = 0; k < d; ++k) out[k] = -a[k] - b[k] - mean_force[k];
  return out;
}

ValidationReport validate_constants(const ForceField& field, std::size_t sample_count,
                                    std::uint64_t rng_seed) {
  const auto d = static_cast<std::size_t>(field.dim());
  const Coefficients& c = field.coeffs();
  ValidationReport report;
  report.alpha_prime_observed = std::numeric_limits<double>::infinity();

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> wide(0.0, 3.0);
  std::normal_distribution<double> narrow(0.0, 1e-3);

  std::vector<double> p(d), q(d), fp(d), fq(d), diff(d), fdiff(d);
  const std::size_t n = std::max<std::size_t>(sample_count, 2);
  for (std::size_t s = 0; s < n; ++s) {
    // Alternate far pairs with near pairs so local slopes get probed too.
    for (std::size_t k = 0; k < d; ++k) p[k] = wide(rng);
    for (std::size_t k = 0; k < d; ++k) q[k] = (s % 2 == 0) ? wide(rng) : p[k] + narrow(rng);
    for (std::size_t k = 0; k < d; ++k) diff[k] = p[k] - q[k];
    const double dist = norm(diff);
    if (dist == 0.0) continue;

    auto ratio = [&](auto&& map) {
      map(p, fp);
      map(q, fq);
      for (std::size_t k = 0; k < d; ++k) fdiff[k] = fp[k] - fq[k];
      return norm(fdiff) / dist;
    };
    report.alpha_observed = std::max(report.alpha_observed,
                                     ratio([&](std::span<const double> in, std::span<double> out) { field.friction(in, out); }));
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += diff[k] * fdiff[k];
    report.alpha_prime_observed = std::min(report.alpha_prime_observed, dot / (dist * dist));
    report.delta_observed = std::max(
        report.delta_observed, ratio([&](std::span<const double> in, std::span<double> out) { field.perturbation(in, out); }));
    report.gamma_observed = std::max(
        report.gamma_observed, ratio([&](std::span<const double> in, std::span<double> out) { field.interaction(in, out); }));
    ++report.pairs;
  }

  auto tol = [](double declared) { return kConstantTolerance * std::max(1.0, declared); };
  if (report.alpha_observed > c.alpha + tol(c.alpha)) {
    report.violations.push_back("alpha: observed Lipschitz ratio " +
                                std::to_string(report.alpha_observed) + " exceeds declared " +
                                std::to_string(c.alpha));
  }
  if (report.alpha_prime_observed < c.alpha_prime - tol(c.alpha_prime)) {
    report.violations.push_back("alpha_prime: observed monotonicity " +
                                std::to_string(report.alpha_prime_observed) +
                                " below declared " + std::to_string(c.alpha_prime));
  }
  if (report.delta_observed > c.delta + tol(c.delta)) {
    report.violations.push_back("delta: observed Lipschitz ratio " +
                                std::to_string(report.delta_observed) + " exceeds declared " +
                                std::to_string(c.delta));
  }
  if (report.gamma_observed > c.gamma + tol(c.gamma)) {
    report.violations.push_back("gamma: observed Lipschitz ratio " +
                                std::to_string(report.gamma_observed) + " exceeds declared " +
                                std::to_string(c.gamma));
  }
  return report;
}

}  // namespace kmf
