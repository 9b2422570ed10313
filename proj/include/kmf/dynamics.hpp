#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kmf/model.hpp"
#include "kmf/noise.hpp"
#include "kmf/rates.hpp"

namespace kmf {

// N points in phase space, row-major N x dim for positions and velocities.
struct ParticleState {
  double t = 0.0;
  std::uint64_t step = 0;  // steps taken; addresses the Brownian increments
  std::size_t n = 0;
  int dim = 1;
  std::vector<double> x;
  std::vector<double> v;

  static ParticleState zeros(std::size_t n, int dim);
  // Every particle at (x0, v0).
  static ParticleState dirac(std::size_t n, std::span<const double> x0, std::span<const double> v0);
  // Independent Gaussian draws with the given means and per-coordinate standard
  // deviation, addressed through `noise` in the given domain.
  static ParticleState gaussian(std::size_t n, std::span<const double> mean_x,
                                std::span<const double> mean_v, double spread,
                                const NoiseStream& noise, std::uint32_t replica,
                                NoiseDomain domain);

  std::span<const double> position(std::size_t i) const {
    return {x.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<const double> velocity(std::size_t i) const {
    return {v.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  // Throws std::invalid_argument on inconsistent sizes or non-finite entries.
  void check() const;
};

// Force (1/M) sum_j C(x - y_j) generated by a cloud {y_j}, or the exact
// gamma (x - m) of a linear kernel about a known mean m.
class MeanField {
 public:
  static MeanField from_cloud(const ForceField& field, std::span<const double> positions,
                              std::size_t count);
  static MeanField linear_about(const ForceField& field, std::span<const double> mean);

  void force(std::span<const double> x, std::span<double> out) const;

  // Per-coordinate summaries for the separable built-in kernels.
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& mean_sin() const { return mean_sin_; }
  const std::vector<double>& mean_cos() const { return mean_cos_; }

  // sin/cos of every source coordinate (sinusoidal kernels), when `positions`
  // is the very array the field was built from; nullptr otherwise.
  const double* sin_cache_for(const double* positions) const {
    return positions == source_ && !sin_cache_.empty() ? sin_cache_.data() : nullptr;
  }
  const double* cos_cache_for(const double* positions) const {
    return positions == source_ && !cos_cache_.empty() ? cos_cache_.data() : nullptr;
  }

 private:
  explicit MeanField(const ForceField& field) : field_(&field) {}

  const ForceField* field_;
  std::vector<double> mean_;
  std::vector<double> mean_sin_;
  std::vector<double> mean_cos_;
  std::vector<double> cloud_;  // custom kernels only
  std::vector<double> sin_cache_;
  std::vector<double> cos_cache_;
  const double* source_ = nullptr;
  std::size_t count_ = 0;
};

// Empirical mean-field force on particle i: (1/N) sum_j C(x_i - x_j).
std::vector<double> interaction_force(const ParticleState& state, std::size_t i,
                                      const ForceField& field);

// dt * (alpha + beta + gamma + delta) must stay below this.
inline constexpr double kStabilityLimit = 0.5;

void check_stability(const ForceField& field, double dt);

// One explicit Euler-Maruyama step with an externally supplied mean field:
//   x += v dt,  v += (-A(v) - B(x) - F(x)) dt + sqrt(2 dt) xi.
void step_with_mean_field(ParticleState& state, const ForceField& field, const MeanField& mf,
                          double dt, const NoiseStream& noise, std::uint32_t replica,
                          NoiseDomain domain = NoiseDomain::brownian);

// One step of the N-particle system.
ParticleState step(const ParticleState& state, const ForceField& field, double dt,
                   const NoiseStream& noise, std::uint32_t replica);

struct MomentRow {
  double t = 0.0;
  double m2_x = 0.0;  // (1/N) sum |x_i|^2
  double m2_v = 0.0;
  std::vector<double> mean_x;
  std::vector<double> mean_v;
};

MomentRow moments(const ParticleState& state);

// Receives the state after every step whose index is a multiple of the stride
// (and the initial state when it has step index 0).
class Recorder {
 public:
  explicit Recorder(std::size_t stride);
  virtual ~Recorder() = default;
  std::size_t stride() const { return stride_; }
  bool wants(std::uint64_t step) const { return step % stride_ == 0; }
  virtual void record(const ParticleState& state) = 0;

 private:
  std::size_t stride_;
};

class MomentRecorder : public Recorder {
 public:
  explicit MomentRecorder(std::size_t stride, bool keep_snapshots = false)
      : Recorder(stride), keep_snapshots_(keep_snapshots) {}

  void record(const ParticleState& state) override;

  const std::vector<MomentRow>& rows() const { return rows_; }
  const std::vector<ParticleState>& snapshots() const { return snapshots_; }

 private:
  bool keep_snapshots_;
  std::vector<MomentRow> rows_;
  std::vector<ParticleState> snapshots_;
};

// n_steps steps of the N-particle system, in place.
void advance(ParticleState& state, const ForceField& field, double dt, std::uint64_t n_steps,
             const NoiseStream& noise, std::uint32_t replica, Recorder* recorder = nullptr);

// Two systems driven by the same Brownian increments.
struct CoupledPair {
  ParticleState a;
  ParticleState b;
};

// Particle averages of the difference (x, v) = (X_a - X_b, V_a - V_b).
struct DifferenceSeries {
  std::vector<double> t;
  std::vector<double> dx2;  // |x|^2
  std::vector<double> xv;   // x . v
  std::vector<double> dv2;  // |v|^2
  std::vector<double> q;    // Q(x, v)
};

struct DifferenceMoments {
  double dx2, xv, dv2, q;
};

DifferenceMoments difference_moments(const ParticleState& a, const ParticleState& b,
                                     const QForm& qform);

void advance_coupled(CoupledPair& pair, const ForceField& field, double dt,
                     std::uint64_t n_steps, const NoiseStream& noise, std::uint32_t replica,
                     const QForm& qform, std::size_t stride, DifferenceSeries& out);

// Mean of the nonlinear process for a linear field: m_x' = m_v,
// m_v' = -a m_v - beta m_x, with a the friction coefficient. Closed form.
class LinearMeanPath {
 public:
  LinearMeanPath(const ForceField& field, std::vector<double> mean_x0, std::vector<double> mean_v0,
                 double t0 = 0.0);

  void at(double t, std::span<double> mean_x, std::span<double> mean_v) const;
  std::vector<double> mean_x(double t) const;

 private:
  double friction_;
  double stiffness_;
  std::vector<double> mx0_;
  std::vector<double> mv0_;
  double t0_;
};

// Independent copies of the nonlinear process for a linear field, where the
// law-dependent force is exactly gamma (x - m_x(t)). Throws for other kinds.
void advance_mckean_linear(ParticleState& points, const LinearMeanPath& path,
                           const ForceField& field, double dt, std::uint64_t n_steps,
                           const NoiseStream& noise, std::uint32_t replica,
                           Recorder* recorder = nullptr);

// Large auxiliary cloud standing in for the law of the nonlinear process.
struct McKeanProxy {
  ParticleState cloud;
  std::uint32_t replica = 0;
  NoiseDomain domain = NoiseDomain::proxy_cloud;

  // Monte Carlo error scale of the cloud's empirical law, M^{-1/2}.
  double error_budget() const;
};

// Evolves the proxy cloud as its own interacting system.
void advance_mckean_proxy(McKeanProxy& proxy, const ForceField& field, double dt,
                          std::uint64_t n_steps, const NoiseStream& noise);

// Evolves `tracked` as nonlinear processes whose mean field is read off the
// proxy cloud, and the cloud alongside it.
void advance_tracked_with_proxy(ParticleState& tracked, McKeanProxy& proxy,
                                const ForceField& field, double dt, std::uint64_t n_steps,
                                const NoiseStream& noise, std::uint32_t replica);

}  // namespace kmf
