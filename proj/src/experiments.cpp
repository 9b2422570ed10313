#include "kmf/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "kmf/error.hpp"
#include "kmf/oscillator.hpp"
#include "kmf/parallel.hpp"
#include "kmf/stats.hpp"
#include "kmf/transport.hpp"

namespace kmf {

ChaosMode chaos_mode_from_string(std::string_view name) {
  if (name == "exact") return ChaosMode::exact;
  if (name == "proxy") return ChaosMode::proxy;
  throw std::invalid_argument("unknown chaos mode '" + std::string(name) + "' (exact|proxy)");
}

std::string_view to_string(ChaosMode mode) {
  return mode == ChaosMode::exact ? "exact" : "proxy";
}

Observable observable_from_string(std::string_view name) {
  if (name == "first_x") return Observable::first_x;
  if (name == "norm") return Observable::norm;
  throw std::invalid_argument("unknown observable '" + std::string(name) + "' (first_x|norm)");
}

std::string_view to_string(Observable obs) {
  return obs == Observable::first_x ? "first_x" : "norm";
}

double evaluate(Observable obs, std::span<const double> x, std::span<const double> v) {
  if (obs == Observable::first_x) return x[0];
  double s = 1.0;
  for (double c : x) s += c * c;
  for (double c : v) s += c * c;
  return std::sqrt(s) - 1.0;
}

std::uint64_t ExperimentConfig::steps() const {
  return static_cast<std::uint64_t>(std::llround(t_end / dt));
}

ForceField ExperimentConfig::field() const { return make_field(kind, coeffs); }

void ExperimentConfig::validate() const {
  coeffs.validate();
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (kind == FieldKind::custom) fail("field.kind: custom fields cannot be configured");
  if (n < 1) fail("N must be at least 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) fail("T must be finite and non-negative");
  const double rounded = static_cast<double>(steps()) * dt;
  if (std::abs(rounded - t_end) > 1e-6 * std::max(dt, t_end)) fail("T must be a multiple of dt");
  if (steps() > std::numeric_limits<std::uint32_t>::max() / 2) fail("too many steps");
  if (stride < 1) fail("stride must be at least 1");
  if (replicas < 1) fail("replicas must be at least 1");
  for (double c : {init_x, init_v, offset_x, offset_v}) {
    if (!std::isfinite(c)) fail("initial law parameters must be finite");
  }
  if (!(init_spread >= 0.0) || !std::isfinite(init_spread)) fail("exp.init_spread must be >= 0");
  for (std::size_t m : n_ladder) {
    if (m < 1) fail("exp.n_ladder entries must be at least 1");
  }
  for (double z : radii) {
    if (!(z >= 0.0) || !std::isfinite(z)) fail("exp.radii entries must be finite and >= 0");
  }
  if (subsample < 1) fail("exp.subsample must be at least 1");
  if (reference_n < 1) fail("exp.reference_n must be at least 1");
  if (!(reference_t > 0.0) || !std::isfinite(reference_t)) fail("exp.reference_T must be positive");
  if (!(tail_start >= 0.0) || !std::isfinite(tail_start)) fail("exp.tail_start must be >= 0");
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"contraction", "equilibrium", "chaos",
                                                 "deviation", "moments"};
  return names;
}

ExperimentConfig defaults_for(std::string_view experiment) {
  ExperimentConfig c;
  if (experiment == "simulate") {
    c.init_spread = 1.0;
  } else if (experiment == "contraction") {
    c.stride = 10;
    c.replicas = 4;
    c.init_spread = 1.0;
    c.offset_x = 2.0;
  } else if (experiment == "equilibrium") {
    c.n = 10000;
    c.t_end = 20.0;
    c.init_x = 5.0;
    c.offset_x = -10.0;
  } else if (experiment == "chaos") {
    c.coeffs.gamma = 0.1;
    c.replicas = 64;
    c.init_x = 1.0;
    c.init_spread = 1.0;
    c.n_ladder = {16, 32, 64, 128, 256, 512};
  } else if (experiment == "deviation") {
    c.kind = FieldKind::sinusoidal;
    c.coeffs.gamma = 0.05;
    c.coeffs.delta = 0.05;
    c.dt = 1e-2;
    c.t_end = 5.0;
    c.stride = 10;
    c.replicas = 10000;
    c.init_x = 1.0;
    c.n_ladder = {64, 128, 256};
    c.radii = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  } else if (experiment == "moments") {
    c.kind = FieldKind::sinusoidal;
    c.coeffs.gamma = 0.05;
    c.coeffs.delta = 0.05;
    c.n = 10000;
    c.t_end = 50.0;
  } else {
    throw ConfigError("unknown experiment '" + std::string(experiment) + "'");
  }
  return c;
}

RateVariant variant_for(std::string_view experiment) {
  if (experiment == "contraction" || experiment == "equilibrium") return RateVariant::contraction;
  if (experiment == "chaos" || experiment == "deviation" || experiment == "moments") {
    return RateVariant::doubled_alpha;
  }
  throw ConfigError("experiment '" + std::string(experiment) + "' has no smallness condition");
}

void require_admissible(std::string_view experiment, const Coefficients& coeffs) {
  if (experiment == "simulate") return;
  const RateVariant variant = variant_for(experiment);
  const double threshold = eta0(coeffs, variant);
  if (!(coeffs.eta() < threshold)) {
    std::ostringstream msg;
    msg.precision(6);
    msg << experiment << ": gamma + delta = " << coeffs.eta()
        << " is not below the smallness threshold eta0 = " << threshold << " (" << to_string(variant)
        << " constants for alpha = " << coeffs.alpha << ", alpha' = " << coeffs.alpha_prime
        << ", beta = " << coeffs.beta << ")";
    throw InadmissibleError(msg.str(), coeffs.eta(), threshold);
  }
}

bool ExperimentResult::passed() const {
  return std::all_of(verdict.begin(), verdict.end(), [](const VerdictRow& r) { return r.pass; });
}

std::string ExperimentResult::verdict_csv() const {
  std::string out = "experiment,theory_value,measured,threshold,pass\n";
  for (const VerdictRow& r : verdict) {
    out += r.experiment + ',' + format_double(r.theory_value) + ',' + format_double(r.measured) +
           ',' + format_double(r.threshold) + ',' + (r.pass ? "true" : "false") + '\n';
  }
  return out;
}

namespace {

constexpr double kZ95 = 1.96;

std::size_t udim(const ExperimentConfig& cfg) { return static_cast<std::size_t>(cfg.coeffs.dim); }

// First initial law: Gaussian (or Dirac when the spread is 0) around (init_x, init_v).
ParticleState initial_law(const ExperimentConfig& cfg, std::size_t n, std::uint32_t replica,
                          NoiseDomain domain) {
  const std::vector<double> mx(udim(cfg), cfg.init_x);
  const std::vector<double> mv(udim(cfg), cfg.init_v);
  if (cfg.init_spread == 0.0) return ParticleState::dirac(n, mx, mv);
  return ParticleState::gaussian(n, mx, mv, cfg.init_spread, NoiseStream(cfg.seed), replica,
                                 domain);
}

void shift(ParticleState& s, double dx, double dv) {
  for (double& x : s.x) x += dx;
  for (double& v : s.v) v += dv;
}

FitResult fit_window(std::span<const double> t, std::span<const double> y, double lo, double hi) {
  std::vector<double> ts, ys;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] >= lo - 1e-12 && t[j] <= hi + 1e-12) {
      ts.push_back(t[j]);
      ys.push_back(y[j]);
    }
  }
  if (ts.size() < 3) {
    std::ostringstream msg;
    msg << "fit window [" << lo << ", " << hi << "] holds " << ts.size()
        << " recorded points; need at least 3";
    throw Error(msg.str());
  }
  const LineFit f = fit_line(ts, ys);
  return FitResult{f.slope, kZ95 * f.slope_se, f.r2, lo, hi, f.points};
}

double mean_of(const std::vector<double>& v) { return v.empty() ? 0.0 : mean(v); }

// Standard error of the mean over replicas (0 for a single replica).
double std_error(const std::vector<double>& v) {
  return v.size() < 2 ? 0.0 : std::sqrt(variance(v) / static_cast<double>(v.size()));
}

std::string str(double v) { return format_double(v); }

// E Q of the difference system of a linear field, evaluated from the initial
// differences with the exact flow: the particle-average of the differences
// moves with stiffness beta and the fluctuations around it with beta + gamma.
std::vector<double> linear_difference_q(const ForceField& field, const std::vector<double>& dx0,
                                        const std::vector<double>& dv0, std::size_t n,
                                        const std::vector<double>& times, const QForm& q) {
  const auto d = static_cast<std::size_t>(field.dim());
  const double a = field.friction_coefficient();
  const double beta = field.coeffs().beta;
  const double gamma = field.coeffs().gamma;
  std::vector<double> mx(d, 0.0), mv(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      mx[k] += dx0[i * d + k];
      mv[k] += dv0[i * d + k];
    }
  }
  for (std::size_t k = 0; k < d; ++k) {
    mx[k] /= static_cast<double>(n);
    mv[k] /= static_cast<double>(n);
  }
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    const auto fm = damped_oscillator_flow(a, beta, t);
    const auto ff = damped_oscillator_flow(a, beta + gamma, t);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double fx = dx0[i * d + k] - mx[k];
        const double fv = dv0[i * d + k] - mv[k];
        const double x = fm[0] * mx[k] + fm[1] * mv[k] + ff[0] * fx + ff[1] * fv;
        const double v = fm[2] * mx[k] + fm[3] * mv[k] + ff[2] * fx + ff[3] * fv;
        total += q(x, v);
      }
    }
    out.push_back(total / static_cast<double>(n));
  }
  return out;
}

bool free_linear(const ExperimentConfig& cfg) {
  return cfg.kind == FieldKind::linear && cfg.coeffs.gamma == 0.0;
}

std::vector<double> column(const std::vector<MomentRow>& rows, double MomentRow::*member) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const MomentRow& r : rows) out.push_back(r.*member);
  return out;
}

PointCloud head(const ParticleState& s, std::size_t m) {
  const auto d = static_cast<std::size_t>(s.dim);
  PointCloud c;
  c.dim = s.dim;
  c.n = m;
  c.x.assign(s.x.begin(), s.x.begin() + static_cast<std::ptrdiff_t>(m * d));
  c.v.assign(s.v.begin(), s.v.begin() + static_cast<std::ptrdiff_t>(m * d));
  return c;
}

// Per-coordinate sample variances averaged over coordinates.
std::pair<double, double> coordinate_variances(const ParticleState& s) {
  const auto d = static_cast<std::size_t>(s.dim);
  double vx = 0.0, vv = 0.0;
  std::vector<double> cx(s.n), cv(s.n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < s.n; ++i) {
      cx[i] = s.x[i * d + k];
      cv[i] = s.v[i * d + k];
    }
    vx += variance(cx);
    vv += variance(cv);
  }
  return {vx / static_cast<double>(d), vv / static_cast<double>(d)};
}

bool within_relative(double measured, double target, double tol) {
  return std::abs(measured / target - 1.0) <= tol;
}

std::uint32_t replica_id(std::size_t block, std::size_t replicas, std::size_t r) {
  const std::size_t id = block * replicas + r;
  if (id > std::numeric_limits<std::uint32_t>::max()) throw Error("replica index overflow");
  return static_cast<std::uint32_t>(id);
}

}  // namespace

ExperimentResult run_contraction(const ExperimentConfig& cfg) {
  cfg.validate();
  require_admissible("contraction", cfg.coeffs);
  const ForceField field = cfg.field();
  const RateReport rep = rate_report_for_field(field, RateVariant::contraction, cfg.rate_mode);
  const QForm q = rep.qform();
  const NoiseStream noise(cfg.seed);
  const std::uint64_t steps = cfg.steps();
  const std::size_t reps = cfg.replicas;
  const bool oracle = field.kind() == FieldKind::linear;
  const std::size_t d = udim(cfg);

  std::vector<DifferenceSeries> runs(reps);
  std::vector<std::vector<double>> ode(reps);
  for_each_index(reps, [&](std::size_t r) {
    const auto rid = static_cast<std::uint32_t>(r);
    CoupledPair pair{initial_law(cfg, cfg.n, rid, NoiseDomain::initial_a), {}};
    pair.b = pair.a;
    shift(pair.b, cfg.offset_x, cfg.offset_v);
    std::vector<double> dx0(cfg.n * d), dv0(cfg.n * d);
    for (std::size_t j = 0; j < dx0.size(); ++j) {
      dx0[j] = pair.a.x[j] - pair.b.x[j];
      dv0[j] = pair.a.v[j] - pair.b.v[j];
    }
    advance_coupled(pair, field, cfg.dt, steps, noise, rid, q, cfg.stride, runs[r]);
    if (oracle) ode[r] = linear_difference_q(field, dx0, dv0, cfg.n, runs[r].t, q);
  });

  ExperimentResult res;
  res.name = "contraction";
  res.series.columns = {"t", "dx2", "xv", "dv2", "Q_diff", "Q_diff_se"};
  if (oracle) res.series.columns.push_back("Q_ode");
  const std::vector<double>& times = runs.front().t;
  std::vector<double> q_mean(times.size()), q_ode(times.size());
  double q_max = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> dx2, xv, dv2, qs, qo;
    for (std::size_t r = 0; r < reps; ++r) {
      dx2.push_back(runs[r].dx2[j]);
      xv.push_back(runs[r].xv[j]);
      dv2.push_back(runs[r].dv2[j]);
      qs.push_back(runs[r].q[j]);
      if (oracle) qo.push_back(ode[r][j]);
    }
    q_mean[j] = mean_of(qs);
    q_max = std::max(q_max, q_mean[j]);
    std::vector<double> row = {times[j], mean_of(dx2), mean_of(xv), mean_of(dv2), q_mean[j],
                               std_error(qs)};
    if (oracle) {
      q_ode[j] = mean_of(qo);
      row.push_back(q_ode[j]);
    }
    res.series.add_row(std::move(row));
  }
  res.notes.push_back("Q form: b = " + str(rep.b_star) + ", beta = " + str(rep.beta) +
                      " (eps = " + str(rep.eps_star) + ", " + std::string(to_string(rep.mode)) +
                      " route), theory rate " + str(rep.rate_C));

  if (q_max == 0.0) {
    res.status = "degenerate";
    res.verdict.push_back({"contraction.series_max", 0.0, q_max, 0.0, true});
    res.notes.push_back("coupled differences are identically zero; decay fit skipped");
    return res;
  }

  const double lo = 0.2 * cfg.t_end;
  const double hi = 0.8 * cfg.t_end;
  auto log_series = [&](const std::vector<double>& values) {
    std::vector<double> out;
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] >= lo - 1e-12 && times[j] <= hi + 1e-12 && !(values[j] > 0.0)) {
        throw Error("fit window degenerate: E Q reached " + str(values[j]) + " at t = " +
                    str(times[j]));
      }
      out.push_back(values[j] > 0.0 ? std::log(values[j]) : 0.0);
    }
    return out;
  };
  FitResult fit = fit_window(times, log_series(q_mean), lo, hi);
  fit.value = -fit.value;
  res.fits.push_back(fit);
  const double target = 0.8 * rep.rate_C;
  res.verdict.push_back({"contraction.rate", rep.rate_C, fit.value, target, fit.value >= target});
  res.verdict.push_back({"contraction.fit_r2", 1.0, fit.r2, 0.98, fit.r2 >= 0.98});
  if (oracle) {
    FitResult ofit = fit_window(times, log_series(q_ode), lo, hi);
    ofit.value = -ofit.value;
    res.fits.push_back(ofit);
    // Fit uncertainty plus a first-order allowance for the Euler time step.
    const double a = field.friction_coefficient();
    const double slack = std::hypot(fit.half_width, ofit.half_width) +
                         ofit.value * (a + cfg.coeffs.beta + cfg.coeffs.gamma) * cfg.dt;
    res.verdict.push_back({"contraction.ode_rate", ofit.value, fit.value, slack,
                           std::abs(fit.value - ofit.value) <= slack});
  }
  return res;
}

ExperimentResult run_equilibrium(const ExperimentConfig& cfg) {
  cfg.validate();
  require_admissible("equilibrium", cfg.coeffs);
  const ForceField field = cfg.field();
  const NoiseStream noise(cfg.seed);
  const std::uint64_t steps = cfg.steps();
  const std::size_t d = udim(cfg);

  // a and b start from the two laws; c repeats a's law with fresh noise and
  // sets the sampling floor.
  std::vector<ParticleState> runs = {initial_law(cfg, cfg.n, 0, NoiseDomain::initial_a),
                                     initial_law(cfg, cfg.n, 1, NoiseDomain::initial_b),
                                     initial_law(cfg, cfg.n, 2, NoiseDomain::initial_a)};
  shift(runs[1], cfg.offset_x, cfg.offset_v);
  std::vector<MomentRecorder> recorders(3, MomentRecorder(cfg.stride));
  for_each_index(3, [&](std::size_t j) {
    advance(runs[j], field, cfg.dt, steps, noise, static_cast<std::uint32_t>(j), &recorders[j]);
  });

  ExperimentResult res;
  res.name = "equilibrium";
  res.series.columns = {"t", "m2_x_a", "m2_v_a", "m2_x_b", "m2_v_b"};
  for (const char* tag : {"a", "b"}) {
    for (std::size_t k = 0; k < d; ++k) {
      res.series.columns.push_back("mean_x_" + std::to_string(k) + "_" + tag);
    }
    for (std::size_t k = 0; k < d; ++k) {
      res.series.columns.push_back("mean_v_" + std::to_string(k) + "_" + tag);
    }
  }
  const auto& ra = recorders[0].rows();
  const auto& rb = recorders[1].rows();
  for (std::size_t j = 0; j < ra.size(); ++j) {
    std::vector<double> row = {ra[j].t, ra[j].m2_x, ra[j].m2_v, rb[j].m2_x, rb[j].m2_v};
    for (const MomentRow* r : {&ra[j], &rb[j]}) {
      row.insert(row.end(), r->mean_x.begin(), r->mean_x.end());
      row.insert(row.end(), r->mean_v.begin(), r->mean_v.end());
    }
    res.series.add_row(std::move(row));
  }

  const std::size_t m = std::min(cfg.subsample, cfg.n);
  const auto metric = GroundMetric::euclidean();
  const double cross = w2_exact(head(runs[0], m), head(runs[1], m), metric).distance;
  const double floor = w2_exact(head(runs[0], m), head(runs[2], m), metric).distance;
  res.verdict.push_back({"equilibrium.cross_w2", floor, cross, 2.0 * floor, cross <= 2.0 * floor});
  res.notes.push_back("terminal W2 on " + std::to_string(m) + " particles: cross " + str(cross) +
                      ", same-law floor " + str(floor));

  if (free_linear(cfg)) {
    const double a = field.friction_coefficient();
    const double beta = cfg.coeffs.beta;
    const auto [vx, vv] = coordinate_variances(runs[0]);
    const double tx = 1.0 / (a * beta);
    const double tv = 1.0 / a;
    res.verdict.push_back({"equilibrium.var_x", tx, vx, 0.05, within_relative(vx, tx, 0.05)});
    res.verdict.push_back({"equilibrium.var_v", tv, vv, 0.05, within_relative(vv, tv, 0.05)});
  }
  return res;
}

namespace {

struct ChaosTrace {
  std::vector<double> t;
  std::vector<double> err;
};

double mean_square_gap(const ParticleState& a, const ParticleState& b) {
  const auto sum = chunked_sum(a.n, 1, [&](std::size_t i, double* acc) {
    const auto d = static_cast<std::size_t>(a.dim);
    for (std::size_t k = 0; k < d; ++k) {
      const double dx = a.x[i * d + k] - b.x[i * d + k];
      const double dv = a.v[i * d + k] - b.v[i * d + k];
      acc[0] += dx * dx + dv * dv;
    }
  });
  return sum[0] / static_cast<double>(a.n);
}

ChaosTrace chaos_replica(const ExperimentConfig& cfg, const ForceField& field, std::size_t n,
                         std::size_t proxy_m, std::uint32_t rid, std::uint64_t steps,
                         const NoiseStream& noise) {
  ParticleState system = initial_law(cfg, n, rid, NoiseDomain::initial_a);
  ParticleState tracked = system;
  const std::vector<double> mx0(udim(cfg), cfg.init_x), mv0(udim(cfg), cfg.init_v);
  std::vector<double> mx(udim(cfg)), mv(udim(cfg));
  std::optional<LinearMeanPath> path;
  std::optional<McKeanProxy> proxy;
  if (cfg.mode == ChaosMode::exact) {
    path.emplace(field, mx0, mv0);
  } else {
    proxy.emplace(McKeanProxy{initial_law(cfg, proxy_m, rid, NoiseDomain::proxy_initial), rid,
                              NoiseDomain::proxy_cloud});
  }
  ChaosTrace trace;
  auto record = [&] {
    trace.t.push_back(system.t);
    trace.err.push_back(mean_square_gap(system, tracked));
  };
  record();
  for (std::uint64_t k = 0; k < steps; ++k) {
    const MeanField mf_sys = MeanField::from_cloud(field, system.x, system.n);
    if (path) {
      path->at(tracked.t, mx, mv);
      const MeanField mf_law = MeanField::linear_about(field, mx);
      step_with_mean_field(tracked, field, mf_law, cfg.dt, noise, rid);
    } else {
      const MeanField mf_law = MeanField::from_cloud(field, proxy->cloud.x, proxy->cloud.n);
      step_with_mean_field(tracked, field, mf_law, cfg.dt, noise, rid);
      step_with_mean_field(proxy->cloud, field, mf_law, cfg.dt, noise, proxy->replica,
                           proxy->domain);
    }
    step_with_mean_field(system, field, mf_sys, cfg.dt, noise, rid);
    if (system.step % cfg.stride == 0) record();
  }
  return trace;
}

}  // namespace

ExperimentResult run_chaos(const ExperimentConfig& cfg) {
  cfg.validate();
  require_admissible("chaos", cfg.coeffs);
  if (cfg.n_ladder.size() < 2) throw std::invalid_argument("chaos: exp.n_ladder needs two sizes");
  const ForceField field = cfg.field();
  if (cfg.mode == ChaosMode::exact && field.kind() != FieldKind::linear) {
    throw std::invalid_argument("chaos: exact mode needs a linear field; set exp.mode = proxy");
  }
  check_stability(field, cfg.dt);
  const NoiseStream noise(cfg.seed);
  const std::uint64_t steps = cfg.steps();
  const std::uint64_t horizon = 2 * steps;  // run to 2T once; [0, T] is a prefix
  const std::size_t reps = cfg.replicas;

  ExperimentResult res;
  res.name = "chaos";
  res.series.columns = {"N", "t", "err_mean", "err_se"};
  std::vector<double> log_n, log_sup;
  std::vector<VerdictRow> uniform_rows;
  double overall_max = 0.0;
  for (std::size_t li = 0; li < cfg.n_ladder.size(); ++li) {
    const std::size_t n = cfg.n_ladder[li];
    const std::size_t m = cfg.proxy_m ? cfg.proxy_m : 10 * n;
    std::vector<ChaosTrace> traces(reps);
    for_each_index(reps, [&](std::size_t r) {
      traces[r] = chaos_replica(cfg, field, n, m, replica_id(li, reps, r), horizon, noise);
    });
    if (cfg.mode == ChaosMode::proxy) {
      res.notes.push_back("N = " + std::to_string(n) + ": proxy cloud M = " + std::to_string(m) +
                          ", error budget M^-1/2 = " + str(1.0 / std::sqrt(double(m))));
    }
    const std::vector<double>& t = traces.front().t;
    double sup_t = -1.0, sup_2t = -1.0, se_2t = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      std::vector<double> e(reps);
      for (std::size_t r = 0; r < reps; ++r) e[r] = traces[r].err[j];
      const double mu = mean_of(e);
      const double se = std_error(e);
      res.series.add_row({static_cast<double>(n), t[j], mu, se});
      if (t[j] <= cfg.t_end + 0.5 * cfg.dt && mu > sup_t) sup_t = mu;
      if (mu > sup_2t) {
        sup_2t = mu;
        se_2t = se;
      }
    }
    overall_max = std::max(overall_max, sup_2t);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_sup.push_back(sup_t > 0.0 ? std::log(sup_t) : -INFINITY);
    uniform_rows.push_back({"chaos.uniform_N" + std::to_string(n), sup_t, sup_2t, 3.0 * se_2t,
                            sup_2t - sup_t <= 3.0 * se_2t});
    res.notes.push_back("N = " + std::to_string(n) + ": sup error on [0, T] " + str(sup_t) +
                        ", on [0, 2T] " + str(sup_2t));
  }

  if (overall_max == 0.0) {
    res.status = "degenerate";
    res.verdict.push_back({"chaos.zero_error", 0.0, overall_max, 0.0, true});
    res.notes.push_back("coupling error is identically zero; slope fit skipped");
    return res;
  }
  if (std::any_of(log_sup.begin(), log_sup.end(), [](double y) { return !std::isfinite(y); })) {
    throw Error("chaos: a ladder entry has zero error while others do not");
  }
  const LineFit f = fit_line(log_n, log_sup);
  FitResult fit{f.slope, kZ95 * f.slope_se, f.r2, log_n.front(), log_n.back(), f.points};
  res.fits.push_back(fit);
  res.verdict.push_back(
      {"chaos.loglog_slope", -1.0, f.slope, 0.3, f.slope >= -1.3 && f.slope <= -0.7});
  res.verdict.insert(res.verdict.end(), uniform_rows.begin(), uniform_rows.end());
  return res;
}

namespace {

struct TailStats {
  double mean = 0.0;
  double var = 0.0;
  double se = 0.0;  // of the mean
  std::vector<double> r;
  std::vector<double> p;
  double slope = 0.0;  // d log P / d r^2
  double p0 = std::nan("");
};

std::vector<double> observable_means(const ExperimentConfig& cfg, const ForceField& field,
                                     std::size_t n, double t_end, std::size_t block,
                                     const NoiseStream& noise) {
  const std::uint64_t steps = static_cast<std::uint64_t>(std::llround(t_end / cfg.dt));
  std::vector<double> s(cfg.replicas);
  for_each_index(cfg.replicas, [&](std::size_t r) {
    const std::uint32_t rid = replica_id(block, cfg.replicas, r);
    ParticleState state = initial_law(cfg, n, rid, NoiseDomain::initial_a);
    advance(state, field, cfg.dt, steps, noise, rid);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += evaluate(cfg.observable, state.position(i), state.velocity(i));
    }
    s[r] = total / static_cast<double>(n);
  });
  return s;
}

TailStats tail_stats(const std::vector<double>& s, const std::vector<double>& z_grid,
                     std::size_t n) {
  TailStats ts;
  ts.mean = mean(s);
  ts.var = variance(s);
  ts.se = std::sqrt(ts.var / static_cast<double>(s.size()));
  const double sd = std::sqrt(ts.var);
  std::vector<double> r2, logp;
  for (double z : z_grid) {
    const double r = z * sd;
    const auto hits = std::count_if(s.begin(), s.end(), [&](double v) { return v - ts.mean >= r; });
    const double p = static_cast<double>(hits) / static_cast<double>(s.size());
    ts.r.push_back(r);
    ts.p.push_back(p);
    if (z == 0.0) ts.p0 = p;
    if (z > 0.0 && p > 0.0) {
      r2.push_back(r * r);
      logp.push_back(std::log(p));
    }
  }
  if (r2.size() < 2) {
    throw Error("deviation: N = " + std::to_string(n) +
                " has fewer than two non-empty tails; add replicas or use smaller radii");
  }
  ts.slope = fit_line(r2, logp).slope;
  return ts;
}

}  // namespace

ExperimentResult run_deviation(const ExperimentConfig& cfg) {
  cfg.validate();
  require_admissible("deviation", cfg.coeffs);
  if (cfg.n_ladder.empty()) throw std::invalid_argument("deviation: exp.n_ladder is empty");
  if (cfg.radii.empty()) throw std::invalid_argument("deviation: exp.radii is empty");
  const ForceField field = cfg.field();
  check_stability(field, cfg.dt);
  const NoiseStream noise(cfg.seed);
  const std::size_t blocks = cfg.n_ladder.size();

  ExperimentResult res;
  res.name = "deviation";
  res.series.columns = {"N", "z", "r", "tail_probability"};
  std::vector<TailStats> stats;
  for (std::size_t j = 0; j < blocks; ++j) {
    const std::size_t n = cfg.n_ladder[j];
    stats.push_back(tail_stats(observable_means(cfg, field, n, cfg.t_end, j, noise), cfg.radii, n));
    const TailStats& ts = stats.back();
    for (std::size_t k = 0; k < cfg.radii.size(); ++k) {
      res.series.add_row({static_cast<double>(n), cfg.radii[k], ts.r[k], ts.p[k]});
    }
    res.notes.push_back("N = " + std::to_string(n) + ": E S = " + str(ts.mean) + ", Var S = " +
                        str(ts.var) + ", tail slope " + str(ts.slope) + ", fitted D = " +
                        str(-static_cast<double>(n) / (2.0 * ts.slope)));
  }

  for (std::size_t j = 0; j + 1 < blocks; ++j) {
    const std::size_t n = cfg.n_ladder[j];
    const double ratio = static_cast<double>(cfg.n_ladder[j + 1]) / static_cast<double>(n);
    const double var_ratio = stats[j].var / stats[j + 1].var;
    const double slope_ratio = stats[j + 1].slope / stats[j].slope;
    const double var_tol = 0.15 * ratio;
    const double slope_tol = 0.25 * ratio;
    res.verdict.push_back({"deviation.var_ratio_N" + std::to_string(n), ratio, var_ratio, var_tol,
                           std::abs(var_ratio - ratio) <= var_tol});
    res.verdict.push_back({"deviation.slope_ratio_N" + std::to_string(n), ratio, slope_ratio,
                           slope_tol, std::abs(slope_ratio - ratio) <= slope_tol});
  }
  for (std::size_t j = 0; j < blocks; ++j) {
    if (std::isnan(stats[j].p0)) continue;
    res.verdict.push_back({"deviation.median_N" + std::to_string(cfg.n_ladder[j]), 0.5,
                           stats[j].p0, 0.05, std::abs(stats[j].p0 - 0.5) <= 0.05});
  }

  // Reference value of h under the equilibrium: time average over the second
  // half of one long run.
  const std::uint64_t ref_steps = static_cast<std::uint64_t>(std::llround(cfg.reference_t / cfg.dt));
  ParticleState ref = initial_law(cfg, cfg.reference_n, replica_id(blocks + 1, cfg.replicas, 0),
                                  NoiseDomain::initial_a);
  struct HRecorder : Recorder {
    HRecorder(std::size_t stride, Observable obs) : Recorder(stride), obs(obs) {}
    void record(const ParticleState& s) override {
      double total = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) total += evaluate(obs, s.position(i), s.velocity(i));
      t.push_back(s.t);
      h.push_back(total / static_cast<double>(s.n));
    }
    Observable obs;
    std::vector<double> t, h;
  } href(cfg.stride, cfg.observable);
  advance(ref, field, cfg.dt, ref_steps, noise, replica_id(blocks + 1, cfg.replicas, 0), &href);
  std::vector<double> late;
  for (std::size_t j = 0; j < href.t.size(); ++j) {
    if (href.t[j] >= 0.5 * cfg.reference_t) late.push_back(href.h[j]);
  }
  if (late.empty()) late.push_back(href.h.empty() ? 0.0 : href.h.back());
  const double mu_inf = mean(late);
  std::vector<double> h_terminal(ref.n);
  for (std::size_t i = 0; i < ref.n; ++i) {
    h_terminal[i] = evaluate(cfg.observable, ref.position(i), ref.velocity(i));
  }
  const double mu_inf_se = std_error(h_terminal);
  res.notes.push_back("reference mean of h: " + str(mu_inf) + " (N = " +
                      std::to_string(cfg.reference_n) + ", T = " + str(cfg.reference_t) +
                      ", single-snapshot standard error " + str(mu_inf_se) + ")");

  // Centering offset |E S - reference| must not grow when T doubles or N quadruples.
  const std::size_t n0 = cfg.n_ladder.front();
  const TailStats& base = stats.front();
  const double off_base = std::abs(base.mean - mu_inf);
  const std::vector<double> s_long = observable_means(cfg, field, n0, 2.0 * cfg.t_end, blocks, noise);
  const double long_mean = mean(s_long);
  const double long_se = std_error(s_long);
  const double off_long = std::abs(long_mean - mu_inf);
  const double slack_long = 2.0 * std::hypot(base.se, long_se);
  res.verdict.push_back({"deviation.centering_time", off_base, off_long, off_base + slack_long,
                         off_long <= off_base + slack_long});
  res.notes.push_back("centering offset at N = " + std::to_string(n0) + ": T " + str(off_base) +
                      ", 2T " + str(off_long));
  const auto it = std::find(cfg.n_ladder.begin(), cfg.n_ladder.end(), 4 * n0);
  if (it != cfg.n_ladder.end()) {
    const TailStats& big = stats[static_cast<std::size_t>(it - cfg.n_ladder.begin())];
    const double off_big = std::abs(big.mean - mu_inf);
    const double slack_big = 2.0 * std::hypot(base.se, big.se);
    res.verdict.push_back({"deviation.centering_size", off_base, off_big, off_base + slack_big,
                           off_big <= off_base + slack_big});
    res.notes.push_back("centering offset at T: N = " + std::to_string(n0) + " " + str(off_base) +
                        ", N = " + std::to_string(4 * n0) + " " + str(off_big));
  }
  return res;
}

ExperimentResult run_moment_bound(const ExperimentConfig& cfg) {
  cfg.validate();
  require_admissible("moments", cfg.coeffs);
  const ForceField field = cfg.field();
  const NoiseStream noise(cfg.seed);
  const std::size_t d = udim(cfg);
  ParticleState state = initial_law(cfg, cfg.n, 0, NoiseDomain::initial_a);
  MomentRecorder rec(cfg.stride);
  advance(state, field, cfg.dt, cfg.steps(), noise, 0, &rec);

  ExperimentResult res;
  res.name = "moments";
  res.series.columns = {"t", "m2_x", "m2_v", "m2"};
  for (std::size_t k = 0; k < d; ++k) res.series.columns.push_back("mean_x_" + std::to_string(k));
  for (std::size_t k = 0; k < d; ++k) res.series.columns.push_back("mean_v_" + std::to_string(k));
  const auto& rows = rec.rows();
  std::vector<double> t = column(rows, &MomentRow::t);
  std::vector<double> m2(rows.size());
  double run_max = -1.0, run_max_t = 0.0;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    m2[j] = rows[j].m2_x + rows[j].m2_v;
    if (m2[j] > run_max) {
      run_max = m2[j];
      run_max_t = t[j];
    }
    std::vector<double> row = {t[j], rows[j].m2_x, rows[j].m2_v, m2[j]};
    row.insert(row.end(), rows[j].mean_x.begin(), rows[j].mean_x.end());
    row.insert(row.end(), rows[j].mean_v.begin(), rows[j].mean_v.end());
    res.series.add_row(std::move(row));
  }

  const FitResult fit = fit_window(t, m2, cfg.tail_start, cfg.t_end);
  res.fits.push_back(fit);
  std::vector<double> tail;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (t[j] >= cfg.tail_start - 1e-12) tail.push_back(m2[j]);
  }
  const double plateau = mean(tail);
  const double rel = std::abs(fit.value) / plateau;
  res.verdict.push_back({"moments.tail_slope", 0.0, rel, 0.01, rel <= 0.01});
  res.notes.push_back("plateau " + str(plateau) + " over t >= " + str(cfg.tail_start) +
                      "; running max " + str(run_max) + " at t = " + str(run_max_t) +
                      "; tail slope " + str(fit.value) + " per unit time");
  if (free_linear(cfg)) {
    const double a = field.friction_coefficient();
    const double target = static_cast<double>(d) * (1.0 / (a * cfg.coeffs.beta) + 1.0 / a);
    res.verdict.push_back(
        {"moments.plateau", target, plateau, 0.05, within_relative(plateau, target, 0.05)});
  }
  return res;
}

SimulationResult run_simulation(const ExperimentConfig& cfg) {
  cfg.validate();
  const ForceField field = cfg.field();
  const NoiseStream noise(cfg.seed);
  const std::size_t d = udim(cfg);
  SimulationResult res;
  res.final_state = initial_law(cfg, cfg.n, 0, NoiseDomain::initial_a);
  MomentRecorder rec(cfg.stride);
  advance(res.final_state, field, cfg.dt, cfg.steps(), noise, 0, &rec);
  res.series.columns = {"t", "m2_x", "m2_v"};
  for (std::size_t k = 0; k < d; ++k) res.series.columns.push_back("mean_x_" + std::to_string(k));
  for (std::size_t k = 0; k < d; ++k) res.series.columns.push_back("mean_v_" + std::to_string(k));
  for (const MomentRow& r : rec.rows()) {
    std::vector<double> row = {r.t, r.m2_x, r.m2_v};
    row.insert(row.end(), r.mean_x.begin(), r.mean_x.end());
    row.insert(row.end(), r.mean_v.begin(), r.mean_v.end());
    res.series.add_row(std::move(row));
  }
  return res;
}

ExperimentResult run_experiment(std::string_view name, const ExperimentConfig& cfg) {
  if (name == "contraction") return run_contraction(cfg);
  if (name == "equilibrium") return run_equilibrium(cfg);
  if (name == "chaos") return run_chaos(cfg);
  if (name == "deviation") return run_deviation(cfg);
  if (name == "moments") return run_moment_bound(cfg);
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

}  // namespace kmf
