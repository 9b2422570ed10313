// Acceptance checks. Each criterion prints exactly one PASS/FAIL line; the
// process exits non-zero when any requested criterion fails.
//
//   kmf_acceptance <id>...   ids: 1 2a 2b 3 4 5 6 7 8 9, or "all"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kmf/csv.hpp"
#include "kmf/experiments.hpp"
#include "kmf/parallel.hpp"
#include "kmf/rates.hpp"
#include "kmf/transport.hpp"

using namespace kmf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) { return format_double(v); }

const VerdictRow& row(const ExperimentResult& r, const std::string& name) {
  for (const VerdictRow& v : r.verdict) {
    if (v.experiment == name) return v;
  }
  throw std::runtime_error("verdict row " + name + " missing from " + r.name);
}

std::string describe(const VerdictRow& v) {
  return v.experiment + (v.pass ? " ok" : " FAILED") + " (measured " + num(v.measured) +
         ", reference " + num(v.theory_value) + ", threshold " + num(v.threshold) + ")";
}

// All named rows must pass.
Outcome rows_pass(const ExperimentResult& r, const std::vector<std::string>& names) {
  Outcome o{true, ""};
  for (const std::string& name : names) {
    const VerdictRow& v = row(r, name);
    o.pass = o.pass && v.pass;
    o.detail += (o.detail.empty() ? "" : "; ") + describe(v);
  }
  return o;
}

Coefficients unit_coeffs() { return Coefficients{}; }

// ---------------------------------------------------------------------------

Outcome constants() {
  const double e = eta0(unit_coeffs());
  const double closed = 2.0 - std::sqrt(3.0);
  const double err = std::abs(e - closed);
  return {err <= 1e-12 && e >= 0.26,
          "eta0(1,1,1) = " + num(e) + ", 2 - sqrt(3) = " + num(closed) + ", |diff| = " + num(err) +
              ", admits gamma + delta < 0.26: " + (e >= 0.26 ? "yes" : "no")};
}

Outcome rate_free() {
  const RateReport r = contraction_rate(unit_coeffs(), 0.0);
  const bool ok = std::abs(r.rate_C - 1.0 / 3.0) <= 1e-6 && std::abs(r.b_star - 2.0) <= 1e-6 &&
                  std::abs(r.eps_star - 1.0) <= 1e-6;
  return {ok, "eta = 0: rate_C = " + num(r.rate_C) + " at (b, eps) = (" + num(r.b_star) + ", " +
                  num(r.eps_star) + "), target 1/3 at (2, 1)"};
}

Outcome rate_perturbed() {
  const RateReport r = contraction_rate(unit_coeffs(), 0.1);
  const double target = 0.26667;
  return {std::abs(r.rate_C - target) <= 0.005,
          "eta = 0.1: rate_C = " + num(r.rate_C) + " at (b, eps) = (" + num(r.b_star) + ", " +
              num(r.eps_star) + "), target " + num(target) + " +- 0.005"};
}

double brute_force(const PointCloud& a, const PointCloud& b, const GroundMetric& m) {
  const std::vector<double> cost = cost_matrix(a, b, m);
  std::vector<std::size_t> p(a.n);
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.n; ++i) s += cost[i * a.n + p[i]];
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return std::sqrt(best / static_cast<double>(a.n));
}

Outcome ot_oracle() {
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> size(2, 6);
  const GroundMetric metrics[] = {GroundMetric::euclidean(), GroundMetric::qform(QForm(2.0, 1.0))};
  double worst = 0.0;
  int instances = 0;
  for (int dim : {1, 2}) {
    for (int rep = 0; rep < 100; ++rep, ++instances) {
      const std::size_t n = size(rng);
      PointCloud a{dim, n, {}, {}}, b{dim, n, {}, {}};
      for (PointCloud* c : {&a, &b}) {
        c->x.resize(n * static_cast<std::size_t>(dim));
        c->v.resize(c->x.size());
        for (double& e : c->x) e = g(rng);
        for (double& e : c->v) e = g(rng);
      }
      for (const GroundMetric& m : metrics) {
        worst = std::max(worst, std::abs(w2_exact(a, b, m).distance - brute_force(a, b, m)));
      }
    }
  }
  return {worst <= 1e-10, std::to_string(instances) +
                              " instances, n in 2..6, d in {1, 2}, both metrics: max |diff| = " +
                              num(worst)};
}

ExperimentConfig equilibrium_config() { return defaults_for("equilibrium"); }

ExperimentConfig contraction_free_config() { return defaults_for("contraction"); }

ExperimentConfig contraction_sine_config() {
  ExperimentConfig c = defaults_for("contraction");
  c.kind = FieldKind::sinusoidal;
  c.coeffs.gamma = 0.05;
  c.coeffs.delta = 0.05;
  return c;
}

ExperimentConfig chaos_config() { return defaults_for("chaos"); }
ExperimentConfig deviation_config() { return defaults_for("deviation"); }
ExperimentConfig moments_sine_config() { return defaults_for("moments"); }

ExperimentConfig moments_free_config() {
  ExperimentConfig c = defaults_for("moments");
  c.kind = FieldKind::linear;
  c.coeffs.gamma = 0.0;
  c.coeffs.delta = 0.0;
  return c;
}

Outcome equilibrium() {
  const ExperimentResult r = run_equilibrium(equilibrium_config());
  return rows_pass(r, {"equilibrium.var_x", "equilibrium.var_v"});
}

Outcome contraction() {
  const ExperimentResult free = run_contraction(contraction_free_config());
  Outcome o = rows_pass(free, {"contraction.fit_r2", "contraction.ode_rate"});
  const double fitted = row(free, "contraction.rate").measured;
  const bool free_ok = fitted >= 0.8 / 3.0;
  o.detail = "free: rate " + num(fitted) + " vs 0.8/3 (" + (free_ok ? "ok" : "FAILED") + "); " +
             o.detail;

  const ExperimentResult sine = run_contraction(contraction_sine_config());
  const double sine_rate = row(sine, "contraction.rate").measured;
  const double sine_target = 0.8 * 0.2667;
  const bool sine_ok = sine_rate >= sine_target;
  o.detail += "; sinusoidal gamma + delta = 0.1: rate " + num(sine_rate) + " vs " + num(sine_target) +
              (sine_ok ? " ok" : " FAILED");
  o.pass = o.pass && free_ok && sine_ok;
  return o;
}

Outcome chaos() {
  const ExperimentConfig c = chaos_config();
  const ExperimentResult r = run_chaos(c);
  std::vector<std::string> names = {"chaos.loglog_slope"};
  for (std::size_t n : c.n_ladder) names.push_back("chaos.uniform_N" + std::to_string(n));
  return rows_pass(r, names);
}

Outcome deviation() {
  const ExperimentConfig c = deviation_config();
  const ExperimentResult r = run_deviation(c);
  std::vector<std::string> names;
  for (std::size_t j = 0; j + 1 < c.n_ladder.size(); ++j) {
    names.push_back("deviation.var_ratio_N" + std::to_string(c.n_ladder[j]));
    names.push_back("deviation.slope_ratio_N" + std::to_string(c.n_ladder[j]));
  }
  return rows_pass(r, names);
}

Outcome moments() {
  const ExperimentResult sine = run_moment_bound(moments_sine_config());
  const ExperimentResult free = run_moment_bound(moments_free_config());
  Outcome a = rows_pass(sine, {"moments.tail_slope"});
  Outcome b = rows_pass(free, {"moments.plateau"});
  return {a.pass && b.pass, "sinusoidal " + a.detail + "; free " + b.detail};
}

Outcome determinism() {
  struct Run {
    std::string label;
    std::string experiment;
    ExperimentConfig cfg;
  };
  const std::vector<Run> runs = {
      {"equilibrium", "equilibrium", equilibrium_config()},
      {"contraction/free", "contraction", contraction_free_config()},
      {"contraction/sinusoidal", "contraction", contraction_sine_config()},
      {"chaos", "chaos", chaos_config()},
      {"deviation", "deviation", deviation_config()},
      {"moments/sinusoidal", "moments", moments_sine_config()},
      {"moments/free", "moments", moments_free_config()},
  };
  Outcome o{true, "KMF_THREADS 1 vs 4:"};
  for (const Run& run : runs) {
    std::vector<std::string> csv;
    for (const char* threads : {"1", "4"}) {
      setenv("KMF_THREADS", threads, 1);
      configure_threads_from_env();
      csv.push_back(to_csv(run_experiment(run.experiment, run.cfg).series));
    }
    const bool same = csv[0] == csv[1];
    o.pass = o.pass && same;
    o.detail += " " + run.label + (same ? " identical" : " DIFFERENT") + " (" +
                std::to_string(csv[0].size()) + " bytes);";
  }
  unsetenv("KMF_THREADS");
  configure_threads_from_env();
  o.detail.pop_back();
  return o;
}

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> check;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"1", "constants", constants},
      {"2a", "rate reproduction, free case", rate_free},
      {"2b", "rate reproduction, gamma + delta = 0.1", rate_perturbed},
      {"3", "OT oracle equivalence", ot_oracle},
      {"4", "free-case equilibrium", equilibrium},
      {"5", "contraction", contraction},
      {"6", "propagation of chaos", chaos},
      {"7", "deviation structure", deviation},
      {"8", "moment bound", moments},
      {"9", "determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  if (wanted.empty()) {
    std::cerr << "usage: kmf_acceptance <id>... | all\n";
    return 1;
  }
  if (wanted.size() == 1 && wanted[0] == "all") {
    wanted.clear();
    for (const Criterion& c : criteria()) wanted.push_back(c.id);
  }
  configure_threads_from_env();
  bool all_pass = true;
  for (const std::string& id : wanted) {
    const auto it = std::find_if(criteria().begin(), criteria().end(),
                                 [&](const Criterion& c) { return c.id == id; });
    if (it == criteria().end()) {
      std::cerr << "unknown criterion '" << id << "'\n";
      return 1;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line.precision(3);
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << it->id << " (" << it->title
         << "): " << o.detail << " [" << std::fixed << secs << " s]";
    std::cout << line.str() << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
