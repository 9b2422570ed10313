#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kmf/csv.hpp"
#include "kmf/dynamics.hpp"
#include "kmf/model.hpp"
#include "kmf/rates.hpp"

namespace kmf {

enum class ChaosMode { exact, proxy };
ChaosMode chaos_mode_from_string(std::string_view name);
std::string_view to_string(ChaosMode mode);

// 1-Lipschitz observables for the deviation experiment.
//   first_x: h(x, v) = x_0
//   norm:    h(x, v) = sqrt(1 + |x|^2 + |v|^2) - 1
enum class Observable { first_x, norm };
Observable observable_from_string(std::string_view name);
std::string_view to_string(Observable obs);
double evaluate(Observable obs, std::span<const double> x, std::span<const double> v);

// Seed used when a configuration does not set one.
inline constexpr std::uint64_t kDefaultSeed = 12345;

// Everything an experiment reads. Initial laws are Gaussian with per-coordinate
// means (init_x, init_v) and standard deviation init_spread (0 = Dirac); the
// second law of the two-law experiments is the first one shifted by
// (offset_x, offset_v).
struct ExperimentConfig {
  FieldKind kind = FieldKind::linear;
  Coefficients coeffs;

  std::size_t n = 1000;
  double dt = 1e-3;
  double t_end = 10.0;
  std::size_t stride = 100;
  std::uint64_t seed = kDefaultSeed;
  std::size_t replicas = 1;

  double init_x = 0.0;
  double init_v = 0.0;
  double init_spread = 0.0;
  double offset_x = 0.0;
  double offset_v = 0.0;

  std::vector<std::size_t> n_ladder;
  ChaosMode mode = ChaosMode::exact;
  std::size_t proxy_m = 0;  // 0 = ten times the tracked N
  Observable observable = Observable::first_x;
  std::vector<double> radii;  // deviation radii in units of the standard deviation of S
  std::size_t reference_n = 10000;
  double reference_t = 50.0;
  SearchMode rate_mode = SearchMode::paper;
  std::size_t subsample = 1000;
  double tail_start = 20.0;
  bool snapshot = false;

  std::uint64_t steps() const;
  ForceField field() const;
  // Throws std::invalid_argument for out-of-range values.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

// Names accepted by defaults_for and run_experiment.
const std::vector<std::string>& experiment_names();

// Defaults of the named experiment (see README). Throws ConfigError for an
// unknown name.
ExperimentConfig defaults_for(std::string_view experiment);

// Which smallness threshold the experiment's guarantee depends on.
RateVariant variant_for(std::string_view experiment);

// Throws InadmissibleError (message includes eta0) when gamma + delta is not
// below the threshold that the named experiment relies on.
void require_admissible(std::string_view experiment, const Coefficients& coeffs);

struct FitResult {
  double value = 0.0;       // fitted rate or slope
  double half_width = 0.0;  // 95% confidence half-width
  double r2 = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points = 0;
};

struct VerdictRow {
  std::string experiment;
  double theory_value = 0.0;
  double measured = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct ExperimentResult {
  std::string name;
  std::string status = "ok";  // "ok" or "degenerate"
  std::vector<VerdictRow> verdict;
  std::vector<FitResult> fits;
  Table series;
  std::vector<std::string> notes;

  bool passed() const;
  // experiment,theory_value,measured,threshold,pass
  std::string verdict_csv() const;
};

// Coupled systems from two initial laws, decay rate of the coupled E Q.
ExperimentResult run_contraction(const ExperimentConfig& cfg);

// Two systems from distant initial laws (plus a same-law floor run), terminal
// W2 and, for the free linear case, terminal variances.
ExperimentResult run_equilibrium(const ExperimentConfig& cfg);

// Particle systems coupled to copies of the nonlinear process over an N ladder.
ExperimentResult run_chaos(const ExperimentConfig& cfg);

// Fluctuations of (1/N) sum h over replicas started from a deterministic point.
ExperimentResult run_deviation(const ExperimentConfig& cfg);

// Long run of the empirical second moment.
ExperimentResult run_moment_bound(const ExperimentConfig& cfg);

struct SimulationResult {
  Table series;  // t, m2_x, m2_v, mean_x_k..., mean_v_k...
  ParticleState final_state;
};

// Plain N-particle run from the first initial law.
SimulationResult run_simulation(const ExperimentConfig& cfg);

// Dispatches on the name: contraction, equilibrium, chaos, deviation, moments.
ExperimentResult run_experiment(std::string_view name, const ExperimentConfig& cfg);

}  // namespace kmf
