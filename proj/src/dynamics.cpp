#include "kmf/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "kmf/error.hpp"
#include "kmf/oscillator.hpp"
#include "kmf/parallel.hpp"

namespace kmf {

namespace {

std::size_t udim(int dim) { return static_cast<std::size_t>(dim); }

}  // namespace

ParticleState ParticleState::zeros(std::size_t n, int dim) {
  if (n < 1) throw std::invalid_argument("ParticleState: need at least one particle");
  if (dim < 1) throw std::invalid_argument("ParticleState: dim must be at least 1");
  ParticleState s;
  s.n = n;
  s.dim = dim;
  s.x.assign(n * udim(dim), 0.0);
  s.v.assign(n * udim(dim), 0.0);
  return s;
}

ParticleState ParticleState::dirac(std::size_t n, std::span<const double> x0,
                                   std::span<const double> v0) {
  if (x0.size() != v0.size()) throw std::invalid_argument("dirac: x0 and v0 differ in length");
  ParticleState s = zeros(n, static_cast<int>(x0.size()));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(x0.begin(), x0.end(), s.x.begin() + static_cast<std::ptrdiff_t>(i * x0.size()));
    std::copy(v0.begin(), v0.end(), s.v.begin() + static_cast<std::ptrdiff_t>(i * v0.size()));
  }
  return s;
}

ParticleState ParticleState::gaussian(std::size_t n, std::span<const double> mean_x,
                                      std::span<const double> mean_v, double spread,
                                      const NoiseStream& noise, std::uint32_t replica,
                                      NoiseDomain domain) {
  ParticleState s = dirac(n, mean_x, mean_v);
  const std::size_t d = mean_x.size();
  const auto nd = static_cast<std::uint32_t>(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto p = static_cast<std::uint32_t>(i);
      const auto kk = static_cast<std::uint32_t>(k);
      // Step slot 0 of an initial-law domain; velocities use coordinates d..2d-1.
      s.x[i * d + k] += spread * noise.normal(replica, p, 0, kk, domain);
      s.v[i * d + k] += spread * noise.normal(replica, p, 0, nd + kk, domain);
    }
  }
  return s;
}

void ParticleState::check() const {
  if (n < 1 || dim < 1 || x.size() != n * udim(dim) || v.size() != x.size()) {
    throw std::invalid_argument("ParticleState: inconsistent dimensions");
  }
  auto finite = [](double c) { return std::isfinite(c); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(v.begin(), v.end(), finite)) {
    throw std::invalid_argument("ParticleState: non-finite entry");
  }
}

MeanField MeanField::from_cloud(const ForceField& field, std::span<const double> positions,
                                std::size_t count) {
  const std::size_t d = udim(field.dim());
  if (count < 1 || positions.size() != count * d) {
    throw std::invalid_argument("MeanField: cloud size does not match dim");
  }
  MeanField mf(field);
  mf.count_ = count;
  const double inv = 1.0 / static_cast<double>(count);
  switch (field.kind()) {
    case FieldKind::linear: {
      auto sum = chunked_sum(count, d, [&](std::size_t i, double* acc) {
        for (std::size_t k = 0; k < d; ++k) acc[k] += positions[i * d + k];
      });
      for (double& s : sum) s *= inv;
      mf.mean_ = std::move(sum);
      break;
    }
    case FieldKind::sinusoidal: {
      // sin(x - y) = sin x cos y - cos x sin y makes the kernel separable.
      mf.source_ = positions.data();
      mf.sin_cache_.resize(positions.size());
      mf.cos_cache_.resize(positions.size());
      auto sum = chunked_sum(count, 2 * d, [&](std::size_t i, double* acc) {
        for (std::size_t k = 0; k < d; ++k) {
          const double y = positions[i * d + k];
          const double sy = std::sin(y);
          const double cy = std::cos(y);
          mf.sin_cache_[i * d + k] = sy;
          mf.cos_cache_[i * d + k] = cy;
          acc[k] += sy;
          acc[d + k] += cy;
        }
      });
      mf.mean_sin_.assign(sum.begin(), sum.begin() + static_cast<std::ptrdiff_t>(d));
      mf.mean_cos_.assign(sum.begin() + static_cast<std::ptrdiff_t>(d), sum.end());
      for (double& s : mf.mean_sin_) s *= inv;
      for (double& c : mf.mean_cos_) c *= inv;
      break;
    }
    case FieldKind::custom:
      mf.cloud_.assign(positions.begin(), positions.end());
      break;
  }
  return mf;
}

MeanField MeanField::linear_about(const ForceField& field, std::span<const double> mean) {
  if (field.kind() != FieldKind::linear) {
    throw std::invalid_argument("MeanField::linear_about requires a linear field");
  }
  if (mean.size() != udim(field.dim())) throw std::invalid_argument("MeanField: mean has wrong dim");
  MeanField mf(field);
  mf.mean_.assign(mean.begin(), mean.end());
  mf.count_ = 0;
  return mf;
}

void MeanField::force(std::span<const double> x, std::span<double> out) const {
  const std::size_t d = udim(field_->dim());
  const double gamma = field_->coeffs().gamma;
  switch (field_->kind()) {
    case FieldKind::linear:
      for (std::size_t k = 0; k < d; ++k) out[k] = gamma * (x[k] - mean_[k]);
      return;
    case FieldKind::sinusoidal:
      for (std::size_t k = 0; k < d; ++k) {
        out[k] = gamma * (std::sin(x[k]) * mean_cos_[k] - std::cos(x[k]) * mean_sin_[k]);
      }
      return;
    case FieldKind::custom: {
      std::vector<double> z(d), c(d);
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t j = 0; j < count_; ++j) {
        for (std::size_t k = 0; k < d; ++k) z[k] = x[k] - cloud_[j * d + k];
        field_->interaction(z, c);
        for (std::size_t k = 0; k < d; ++k) out[k] += c[k];
      }
      const double inv = 1.0 / static_cast<double>(count_);
      for (double& o : out) o *= inv;
      return;
    }
  }
}

std::vector<double> interaction_force(const ParticleState& state, std::size_t i,
                                      const ForceField& field) {
  if (state.dim != field.dim()) throw std::invalid_argument("interaction_force: dim mismatch");
  if (i >= state.n) throw std::out_of_range("interaction_force: particle index");
  const MeanField mf = MeanField::from_cloud(field, state.x, state.n);
  std::vector<double> out(udim(state.dim));
  mf.force(state.position(i), out);
  return out;
}

void check_stability(const ForceField& field, double dt) {
  const Coefficients& c = field.coeffs();
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  const double load = dt * (c.alpha + c.beta + c.gamma + c.delta);
  if (!(load < kStabilityLimit)) {
    std::ostringstream msg;
    msg << "stability guard: dt * (alpha + beta + gamma + delta) = " << load << " >= "
        << kStabilityLimit;
    throw std::invalid_argument(msg.str());
  }
}

void step_with_mean_field(ParticleState& s, const ForceField& field, const MeanField& mf,
                          double dt, const NoiseStream& noise, std::uint32_t replica,
                          NoiseDomain domain) {
  if (s.dim != field.dim()) throw std::invalid_argument("step: state and field dims differ");
  const std::size_t d = udim(s.dim);
  const Coefficients& c = field.coeffs();
  const double kick = std::sqrt(2.0 * dt);
  const auto step_index = static_cast<std::uint32_t>(s.step);
  std::atomic<bool> finite{true};

  for_each_chunk(s.n, [&](std::size_t begin, std::size_t end) {
    bool ok = true;
    // Chunks start at even indices, so particles pair up for the noise draws.
    std::vector<double> xi_buf((end - begin) * d);
    for (std::size_t i = begin; i < end; i += 2) {
      for (std::size_t k = 0; k < d; ++k) {
        const auto [even, odd] =
            noise.normal_pair(replica, static_cast<std::uint32_t>(i >> 1), step_index,
                              static_cast<std::uint32_t>(k), domain);
        xi_buf[(i - begin) * d + k] = even;
        if (i + 1 < end) xi_buf[(i + 1 - begin) * d + k] = odd;
      }
    }
    if (field.kind() == FieldKind::linear) {
      const double a = field.friction_coefficient();
      const double beta = c.beta;
      const double gamma = c.gamma;
      const std::vector<double>& m = mf.mean();
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          const std::size_t idx = i * d + k;
          const double x = s.x[idx];
          const double v = s.v[idx];
          const double acc = -a * v - beta * x - gamma * (x - m[k]);
          const double xi = xi_buf[(i - begin) * d + k];
          s.x[idx] = x + v * dt;
          s.v[idx] = v + acc * dt + kick * xi;
          ok = ok && std::isfinite(s.x[idx]) && std::isfinite(s.v[idx]);
        }
      }
    } else if (field.kind() == FieldKind::sinusoidal) {
      const double a = field.friction_coefficient();
      const double beta = c.beta;
      const double gamma = c.gamma;
      const double delta = c.delta;
      const std::vector<double>& ms = mf.mean_sin();
      const std::vector<double>& mc = mf.mean_cos();
      const double* sin_cache = mf.sin_cache_for(s.x.data());
      const double* cos_cache = mf.cos_cache_for(s.x.data());
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          const std::size_t idx = i * d + k;
          const double x = s.x[idx];
          const double v = s.v[idx];
          const double sx = sin_cache ? sin_cache[idx] : std::sin(x);
          const double cx = cos_cache ? cos_cache[idx] : std::cos(x);
          const double interaction = gamma * (sx * mc[k] - cx * ms[k]);
          const double acc = -a * v - beta * x - delta * sx - interaction;
          const double xi = xi_buf[(i - begin) * d + k];
          s.x[idx] = x + v * dt;
          s.v[idx] = v + acc * dt + kick * xi;
          ok = ok && std::isfinite(s.x[idx]) && std::isfinite(s.v[idx]);
        }
      }
    } else {
      std::vector<double> fa(d), fb(d), fc(d);
      for (std::size_t i = begin; i < end; ++i) {
        const std::span<const double> x(s.x.data() + i * d, d);
        const std::span<const double> v(s.v.data() + i * d, d);
        field.friction(v, fa);
        field.confinement(x, fb);
        mf.force(x, fc);
        for (std::size_t k = 0; k < d; ++k) {
          const std::size_t idx = i * d + k;
          const double acc = -fa[k] - fb[k] - fc[k];
          const double xi = xi_buf[(i - begin) * d + k];
          const double x0 = s.x[idx];
          const double v0 = s.v[idx];
          s.x[idx] = x0 + v0 * dt;
          s.v[idx] = v0 + acc * dt + kick * xi;
          ok = ok && std::isfinite(s.x[idx]) && std::isfinite(s.v[idx]);
        }
      }
    }
    if (!ok) finite.store(false, std::memory_order_relaxed);
  });

  if (!finite.load()) {
    std::ostringstream msg;
    msg << "non-finite state after step " << s.step << " (t = " << s.t << ")";
    throw BlowUpError(msg.str(), s.step);
  }
  s.t += dt;
  ++s.step;
}

ParticleState step(const ParticleState& state, const ForceField& field, double dt,
                   const NoiseStream& noise, std::uint32_t replica) {
  check_stability(field, dt);
  ParticleState next = state;
  const MeanField mf = MeanField::from_cloud(field, state.x, state.n);
  step_with_mean_field(next, field, mf, dt, noise, replica);
  return next;
}

MomentRow moments(const ParticleState& s) {
  const std::size_t d = udim(s.dim);
  const auto sum = chunked_sum(s.n, 2 + 2 * d, [&](std::size_t i, double* acc) {
    for (std::size_t k = 0; k < d; ++k) {
      const double x = s.x[i * d + k];
      const double v = s.v[i * d + k];
      acc[0] += x * x;
      acc[1] += v * v;
      acc[2 + k] += x;
      acc[2 + d + k] += v;
    }
  });
  const double inv = 1.0 / static_cast<double>(s.n);
  MomentRow row;
  row.t = s.t;
  row.m2_x = sum[0] * inv;
  row.m2_v = sum[1] * inv;
  row.mean_x.resize(d);
  row.mean_v.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    row.mean_x[k] = sum[2 + k] * inv;
    row.mean_v[k] = sum[2 + d + k] * inv;
  }
  return row;
}

Recorder::Recorder(std::size_t stride) : stride_(stride) {
  if (stride < 1) throw std::invalid_argument("recorder stride must be at least 1");
}

void MomentRecorder::record(const ParticleState& state) {
  rows_.push_back(moments(state));
  if (keep_snapshots_) snapshots_.push_back(state);
}

namespace {

template <typename StepFn>
void run_steps(ParticleState& state, std::uint64_t n_steps, Recorder* recorder, StepFn&& one) {
  if (recorder != nullptr && state.step == 0 && n_steps > 0) recorder->record(state);
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    one();
    if (recorder != nullptr && recorder->wants(state.step)) recorder->record(state);
  }
}

}  // namespace

void advance(ParticleState& state, const ForceField& field, double dt, std::uint64_t n_steps,
             const NoiseStream& noise, std::uint32_t replica, Recorder* recorder) {
  check_stability(field, dt);
  run_steps(state, n_steps, recorder, [&] {
    const MeanField mf = MeanField::from_cloud(field, state.x, state.n);
    step_with_mean_field(state, field, mf, dt, noise, replica);
  });
}

DifferenceMoments difference_moments(const ParticleState& a, const ParticleState& b,
                                     const QForm& qform) {
  if (a.n != b.n || a.dim != b.dim) throw std::invalid_argument("coupled states differ in shape");
  const std::size_t d = udim(a.dim);
  const auto sum = chunked_sum(a.n, 4, [&](std::size_t i, double* acc) {
    for (std::size_t k = 0; k < d; ++k) {
      const double x = a.x[i * d + k] - b.x[i * d + k];
      const double v = a.v[i * d + k] - b.v[i * d + k];
      acc[0] += x * x;
      acc[1] += x * v;
      acc[2] += v * v;
      acc[3] += qform(x, v);
    }
  });
  const double inv = 1.0 / static_cast<double>(a.n);
  return {sum[0] * inv, sum[1] * inv, sum[2] * inv, sum[3] * inv};
}

void advance_coupled(CoupledPair& pair, const ForceField& field, double dt,
                     std::uint64_t n_steps, const NoiseStream& noise, std::uint32_t replica,
                     const QForm& qform, std::size_t stride, DifferenceSeries& out) {
  if (pair.a.n != pair.b.n || pair.a.dim != pair.b.dim) {
    throw std::invalid_argument("advance_coupled: states differ in shape");
  }
  if (pair.a.step != pair.b.step) {
    throw std::invalid_argument("advance_coupled: states are at different step indices");
  }
  if (stride < 1) throw std::invalid_argument("advance_coupled: stride must be at least 1");
  check_stability(field, dt);
  auto push = [&] {
    const DifferenceMoments m = difference_moments(pair.a, pair.b, qform);
    out.t.push_back(pair.a.t);
    out.dx2.push_back(m.dx2);
    out.xv.push_back(m.xv);
    out.dv2.push_back(m.dv2);
    out.q.push_back(m.q);
  };
  if (pair.a.step == 0 && n_steps > 0) push();
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    const MeanField mfa = MeanField::from_cloud(field, pair.a.x, pair.a.n);
    const MeanField mfb = MeanField::from_cloud(field, pair.b.x, pair.b.n);
    step_with_mean_field(pair.a, field, mfa, dt, noise, replica);
    step_with_mean_field(pair.b, field, mfb, dt, noise, replica);
    if (pair.a.step % stride == 0) push();
  }
}

LinearMeanPath::LinearMeanPath(const ForceField& field, std::vector<double> mean_x0,
                               std::vector<double> mean_v0, double t0)
    : friction_(field.friction_coefficient()),
      stiffness_(field.coeffs().beta),
      mx0_(std::move(mean_x0)),
      mv0_(std::move(mean_v0)),
      t0_(t0) {
  if (field.kind() != FieldKind::linear) {
    throw std::invalid_argument("LinearMeanPath requires a linear field");
  }
  if (mx0_.size() != udim(field.dim()) || mv0_.size() != mx0_.size()) {
    throw std::invalid_argument("LinearMeanPath: initial means have wrong dim");
  }
}

void LinearMeanPath::at(double t, std::span<double> mean_x, std::span<double> mean_v) const {
  const auto flow = damped_oscillator_flow(friction_, stiffness_, t - t0_);
  for (std::size_t k = 0; k < mx0_.size(); ++k) {
    mean_x[k] = flow[0] * mx0_[k] + flow[1] * mv0_[k];
    mean_v[k] = flow[2] * mx0_[k] + flow[3] * mv0_[k];
  }
}

std::vector<double> LinearMeanPath::mean_x(double t) const {
  std::vector<double> mx(mx0_.size()), mv(mx0_.size());
  at(t, mx, mv);
  return mx;
}

void advance_mckean_linear(ParticleState& points, const LinearMeanPath& path,
                           const ForceField& field, double dt, std::uint64_t n_steps,
                           const NoiseStream& noise, std::uint32_t replica, Recorder* recorder) {
  if (field.kind() != FieldKind::linear) {
    throw std::invalid_argument("advance_mckean_linear requires a linear field");
  }
  check_stability(field, dt);
  std::vector<double> mx(udim(field.dim())), mv(udim(field.dim()));
  run_steps(points, n_steps, recorder, [&] {
    path.at(points.t, mx, mv);
    const MeanField mf = MeanField::linear_about(field, mx);
    step_with_mean_field(points, field, mf, dt, noise, replica);
  });
}

double McKeanProxy::error_budget() const {
  return 1.0 / std::sqrt(static_cast<double>(cloud.n));
}

void advance_mckean_proxy(McKeanProxy& proxy, const ForceField& field, double dt,
                          std::uint64_t n_steps, const NoiseStream& noise) {
  check_stability(field, dt);
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    const MeanField mf = MeanField::from_cloud(field, proxy.cloud.x, proxy.cloud.n);
    step_with_mean_field(proxy.cloud, field, mf, dt, noise, proxy.replica, proxy.domain);
  }
}

void advance_tracked_with_proxy(ParticleState& tracked, McKeanProxy& proxy,
                                const ForceField& field, double dt, std::uint64_t n_steps,
                                const NoiseStream& noise, std::uint32_t replica) {
  check_stability(field, dt);
  if (tracked.dim != proxy.cloud.dim) throw std::invalid_argument("proxy: dims differ");
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    const MeanField mf = MeanField::from_cloud(field, proxy.cloud.x, proxy.cloud.n);
    step_with_mean_field(tracked, field, mf, dt, noise, replica);
    step_with_mean_field(proxy.cloud, field, mf, dt, noise, proxy.replica, proxy.domain);
  }
}

}  // namespace kmf
