#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kmf {

// Constants of the structural assumption on the force fields:
//   |A(v) - A(w)| <= alpha |v - w|,   (v - w).(A(v) - A(w)) >= alpha_prime |v - w|^2,
//   B(x) = beta x + D(x),  |D(x) - D(y)| <= delta |x - y|,  |C(x) - C(y)| <= gamma |x - y|.
struct Coefficients {
  double alpha = 1.0;
  double alpha_prime = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
  double delta = 0.0;
  int dim = 1;

  // gamma + delta, the quantity the smallness threshold applies to.
  double eta() const { return gamma + delta; }

  // Throws std::invalid_argument on negative/non-finite constants, dim < 1,
  // or alpha_prime > alpha.
  void validate() const;

  bool operator==(const Coefficients&) const = default;
};

enum class FieldKind { linear, sinusoidal, custom };

FieldKind field_kind_from_string(std::string_view name);
std::string_view to_string(FieldKind kind);

// R^d -> R^d, writing into `out` (same length as the input).
using VectorMap = std::function<void(std::span<const double>, std::span<double>)>;

// Friction A, confinement B = beta x + D, interaction kernel C.
//
// Built-ins act componentwise:
//   linear:      A(v) = alpha' v,  D = 0,            C(z) = gamma z
//   sinusoidal:  A(v) = alpha v,   D(x) = delta sin x, C(z) = gamma sin z
class ForceField {
 public:
  static ForceField custom(const Coefficients& coeffs, VectorMap friction, VectorMap perturbation,
                           VectorMap interaction);

  FieldKind kind() const { return kind_; }
  const Coefficients& coeffs() const { return coeffs_; }
  int dim() const { return coeffs_.dim; }

  // True for built-ins: every map acts coordinate by coordinate.
  bool componentwise() const { return kind_ != FieldKind::custom; }

  // Scalar forms of the built-in maps; only meaningful when componentwise().
  double friction_coefficient() const {
    return kind_ == FieldKind::linear ? coeffs_.alpha_prime : coeffs_.alpha;
  }

  void friction(std::span<const double> v, std::span<double> out) const;
  void perturbation(std::span<const double> x, std::span<double> out) const;
  void confinement(std::span<const double> x, std::span<double> out) const;
  void interaction(std::span<const double> z, std::span<double> out) const;

 private:
  friend ForceField make_field(FieldKind kind, const Coefficients& coeffs);
  ForceField(FieldKind kind, const Coefficients& coeffs) : kind_(kind), coeffs_(coeffs) {}

  FieldKind kind_;
  Coefficients coeffs_;
  VectorMap friction_;
  VectorMap perturbation_;
  VectorMap interaction_;
};

// Builds a linear or sinusoidal field. Custom fields go through ForceField::custom.
ForceField make_field(FieldKind kind, const Coefficients& coeffs);
ForceField make_field(std::string_view kind, const Coefficients& coeffs);

struct PhasePoint {
  std::vector<double> x;
  std::vector<double> v;
};

// Velocity drift -A(v) - B(x) - mean_force. The position drift is v.
std::vector<double> drift(const ForceField& field, const PhasePoint& p,
                          std::span<const double> mean_force);

struct ValidationReport {
  std::size_t pairs = 0;
  double alpha_observed = 0.0;        // max |A(v)-A(w)| / |v-w|
  double alpha_prime_observed = 0.0;  // min (v-w).(A(v)-A(w)) / |v-w|^2
  double delta_observed = 0.0;        // max |D(x)-D(y)| / |x-y|
  double gamma_observed = 0.0;        // max |C(x)-C(y)| / |x-y|
  std::vector<std::string> violations;

  bool consistent() const { return violations.empty(); }
};

// Monte Carlo check of the declared constants over random pairs. Never throws
// on inconsistency; violations beyond 1e-9 are listed in the report.
ValidationReport validate_constants(const ForceField& field, std::size_t sample_count,
                                    std::uint64_t rng_seed);

}  // namespace kmf
