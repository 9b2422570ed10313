#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kmf/dynamics.hpp"
#include "kmf/rates.hpp"

namespace kmf {

// n phase-space samples with uniform weights 1/n.
struct PointCloud {
  int dim = 1;
  std::size_t n = 0;
  std::vector<double> x;  // n x dim
  std::vector<double> v;  // n x dim

  static PointCloud from_state(const ParticleState& state);
  void check() const;
};

// Ground cost between phase-space points: |p - q|^2 or Q(p - q).
class GroundMetric {
 public:
  static GroundMetric euclidean() { return GroundMetric(std::nullopt); }
  // Throws std::invalid_argument if q is not positive definite.
  static GroundMetric qform(const QForm& q);

  bool is_euclidean() const { return !q_.has_value(); }
  const std::optional<QForm>& form() const { return q_; }

  double cost(std::span<const double> px, std::span<const double> pv, std::span<const double> qx,
              std::span<const double> qv) const;

 private:
  explicit GroundMetric(std::optional<QForm> q) : q_(q) {}
  std::optional<QForm> q_;
};

// Row-major n x n cost matrix between the clouds.
std::vector<double> cost_matrix(const PointCloud& a, const PointCloud& b, const GroundMetric& metric);

struct TransportPlan {
  std::vector<std::size_t> permutation;  // exact: point i of a goes to permutation[i] of b
  std::vector<double> coupling;          // entropic: n x n, entries sum to 1
  double objective = 0.0;                // mean cost under the plan
};

struct TransportResult {
  double distance = 0.0;
  TransportPlan plan;
};

inline constexpr std::size_t kDefaultExactCap = 4096;

// Minimum-cost perfect matching of a square cost matrix (row-major), by
// shortest augmenting paths with dual potentials. O(n^3). Returns the column
// assigned to each row.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

// Exact empirical W2 between equal-size clouds. Throws std::invalid_argument on
// unequal sizes or when n exceeds `cap` (use w2_entropic there).
TransportResult w2_exact(const PointCloud& a, const PointCloud& b, const GroundMetric& metric,
                         std::size_t cap = kDefaultExactCap);

struct EntropicResult {
  double distance = 0.0;  // sqrt of the transport cost of the regularised plan
  TransportPlan plan;
  std::size_t iterations = 0;
  double marginal_error = 0.0;  // L1 violation of the row marginal
  bool converged = false;
};

// Log-domain Sinkhorn with an annealed warm start, finished by damped Newton
// steps on the dual potentials. max_iter bounds the total number of sweeps and
// Newton steps. Does not throw on non-convergence; converged is false instead.
EntropicResult w2_entropic(const PointCloud& a, const PointCloud& b, const GroundMetric& metric,
                           double reg_eps, std::size_t max_iter = 10000, double tol = 1e-9);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Coupling bound on the squared d_Q distance: average of Q over paired
// differences across an ensemble of coupled replicas.
Estimate coupled_qdistance(std::span<const CoupledPair> ensemble, const QForm& qform);

// (1/n) sum (|x_i|^2 + |v_i|^2)
double second_moment(const PointCloud& cloud);

}  // namespace kmf
