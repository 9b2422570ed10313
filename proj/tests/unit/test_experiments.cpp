#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "kmf/error.hpp"
#include "kmf/experiments.hpp"
#include "kmf/parallel.hpp"

using namespace kmf;

namespace {

const VerdictRow* find_row(const ExperimentResult& r, const std::string& name) {
  for (const VerdictRow& row : r.verdict) {
    if (row.experiment == name) return &row;
  }
  return nullptr;
}

std::size_t column_index(const Table& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  REQUIRE(it != t.columns.end());
  return static_cast<std::size_t>(it - t.columns.begin());
}

ExperimentConfig small(const std::string& name) {
  ExperimentConfig c = defaults_for(name);
  if (name == "contraction") {
    c.n = 64;
    c.t_end = 4.0;
    c.replicas = 2;
  } else if (name == "equilibrium") {
    c.n = 200;
    c.t_end = 2.0;
    c.subsample = 100;
  } else if (name == "chaos") {
    c.t_end = 1.0;
    c.replicas = 4;
    c.n_ladder = {8, 16, 32};
  } else if (name == "deviation") {
    c.replicas = 200;
    c.t_end = 1.0;
    c.n_ladder = {8, 16, 32};
    c.reference_n = 500;
    c.reference_t = 2.0;
  } else if (name == "moments") {
    c.n = 500;
    c.t_end = 4.0;
    c.tail_start = 2.0;
  }
  return c;
}

}  // namespace

TEST_SUITE("experiments") {
  TEST_CASE("names, defaults and variants") {
    CHECK(experiment_names().size() == 5);
    for (const std::string& name : experiment_names()) {
      CHECK_NOTHROW(defaults_for(name).validate());
      CHECK(defaults_for(name).seed == kDefaultSeed);
    }
    CHECK_THROWS_AS(defaults_for("nope"), ConfigError);
    CHECK(variant_for("contraction") == RateVariant::contraction);
    CHECK(variant_for("equilibrium") == RateVariant::contraction);
    CHECK(variant_for("chaos") == RateVariant::doubled_alpha);
    CHECK(variant_for("moments") == RateVariant::doubled_alpha);
    CHECK_THROWS_AS(run_experiment("nope", ExperimentConfig{}), ConfigError);
    Coefficients c;
    c.gamma = 0.2;
    CHECK_NOTHROW(require_admissible("contraction", c));
    CHECK_THROWS_AS(require_admissible("chaos", c), InadmissibleError);
    CHECK_NOTHROW(require_admissible("simulate", c));
  }

  TEST_CASE("observables are 1-Lipschitz") {
    const std::vector<double> x = {3.0, -1.0}, v = {0.5, 2.0};
    CHECK(evaluate(Observable::first_x, x, v) == 3.0);
    CHECK(evaluate(Observable::norm, x, v) == doctest::Approx(std::sqrt(1.0 + 9 + 1 + 0.25 + 4) - 1.0));
    const std::vector<double> zero = {0.0, 0.0};
    CHECK(evaluate(Observable::norm, zero, zero) == 0.0);
    CHECK(observable_from_string("norm") == Observable::norm);
    CHECK(to_string(ChaosMode::proxy) == "proxy");
    CHECK_THROWS(chaos_mode_from_string("approximate"));
  }

  TEST_CASE("contraction on a small free run") {
    const ExperimentResult r = run_contraction(small("contraction"));
    CHECK(r.status == "ok");
    REQUIRE(find_row(r, "contraction.rate") != nullptr);
    CHECK(find_row(r, "contraction.rate")->theory_value == doctest::Approx(1.0 / 3.0));
    CHECK(find_row(r, "contraction.ode_rate") != nullptr);
    CHECK(r.passed());
    const std::size_t q = column_index(r.series, "Q_diff");
    const std::size_t ode = column_index(r.series, "Q_ode");
    CHECK(r.series.rows.front()[q] == doctest::Approx(r.series.rows.front()[ode]).epsilon(1e-12));
    CHECK(r.series.rows.back()[q] < r.series.rows.front()[q]);
    CHECK(r.verdict_csv().rfind("experiment,theory_value,measured,threshold,pass\n", 0) == 0);
  }

  TEST_CASE("contraction with identical laws is degenerate") {
    ExperimentConfig c = small("contraction");
    c.offset_x = 0.0;
    const ExperimentResult r = run_contraction(c);
    CHECK(r.status == "degenerate");
    const std::size_t q = column_index(r.series, "Q_diff");
    for (const auto& row : r.series.rows) CHECK(row[q] == 0.0);
  }

  TEST_CASE("contraction rejects inadmissible coefficients") {
    ExperimentConfig c = small("contraction");
    c.coeffs.gamma = 0.3;
    CHECK_THROWS_AS(run_contraction(c), InadmissibleError);
  }

  TEST_CASE("equilibrium at T = 0 sees the Dirac gap") {
    ExperimentConfig c = small("equilibrium");
    c.t_end = 0.0;
    const ExperimentResult r = run_equilibrium(c);
    REQUIRE(find_row(r, "equilibrium.cross_w2") != nullptr);
    CHECK(find_row(r, "equilibrium.cross_w2")->measured == doctest::Approx(10.0).epsilon(1e-14));
  }

  TEST_CASE("equilibrium series and rows") {
    const ExperimentResult r = run_equilibrium(small("equilibrium"));
    CHECK(r.series.columns.front() == "t");
    CHECK(r.series.rows.size() == 21);
    CHECK(find_row(r, "equilibrium.var_x") != nullptr);
    CHECK(find_row(r, "equilibrium.var_v") != nullptr);
  }

  TEST_CASE("chaos without interaction has zero error") {
    ExperimentConfig c = small("chaos");
    c.coeffs.gamma = 0.0;
    const ExperimentResult r = run_chaos(c);
    CHECK(r.status == "degenerate");
    const std::size_t e = column_index(r.series, "err_mean");
    for (const auto& row : r.series.rows) CHECK(row[e] == 0.0);
  }

  TEST_CASE("chaos error shrinks with N") {
    const ExperimentResult r = run_chaos(small("chaos"));
    CHECK(r.status == "ok");
    REQUIRE(find_row(r, "chaos.loglog_slope") != nullptr);
    CHECK(find_row(r, "chaos.loglog_slope")->measured < 0.0);
    CHECK(find_row(r, "chaos.uniform_N8") != nullptr);
  }

  TEST_CASE("chaos exact mode needs a linear field; proxy mode runs") {
    ExperimentConfig c = small("chaos");
    c.kind = FieldKind::sinusoidal;
    c.coeffs.delta = 0.05;
    c.coeffs.gamma = 0.05;
    CHECK_THROWS_AS(run_chaos(c), std::invalid_argument);
    c.mode = ChaosMode::proxy;
    c.n_ladder = {8, 16};
    c.replicas = 2;
    const ExperimentResult r = run_chaos(c);
    CHECK(find_row(r, "chaos.loglog_slope") != nullptr);
  }

  TEST_CASE("deviation structure on a small run") {
    const ExperimentResult r = run_deviation(small("deviation"));
    CHECK(r.series.columns == std::vector<std::string>{"N", "z", "r", "tail_probability"});
    for (std::size_t n : {8, 16, 32}) {
      const VerdictRow* median = find_row(r, "deviation.median_N" + std::to_string(n));
      REQUIRE(median != nullptr);
      CHECK(std::abs(median->measured - 0.5) <= 0.1);
    }
    CHECK(find_row(r, "deviation.var_ratio_N8") != nullptr);
    CHECK(find_row(r, "deviation.centering_time") != nullptr);
    CHECK(find_row(r, "deviation.centering_size") != nullptr);
  }

  TEST_CASE("moments from the origin rise and level off") {
    ExperimentConfig c = small("moments");
    c.kind = FieldKind::linear;
    c.coeffs.gamma = c.coeffs.delta = 0.0;
    c.t_end = 20.0;
    c.tail_start = 10.0;
    const ExperimentResult r = run_moment_bound(c);
    const std::size_t m2 = column_index(r.series, "m2");
    CHECK(r.series.rows.front()[m2] == 0.0);
    for (std::size_t j = 1; j < 10; ++j) CHECK(r.series.rows[j][m2] > r.series.rows[j - 1][m2]);
    REQUIRE(find_row(r, "moments.plateau") != nullptr);
    CHECK(find_row(r, "moments.plateau")->theory_value == doctest::Approx(2.0));
    CHECK(find_row(r, "moments.tail_slope") != nullptr);
  }

  TEST_CASE("simulation output") {
    ExperimentConfig c = defaults_for("simulate");
    c.n = 50;
    c.t_end = 0.5;
    c.stride = 50;
    c.coeffs.dim = 2;
    const SimulationResult s = run_simulation(c);
    CHECK(s.series.columns ==
          std::vector<std::string>{"t", "m2_x", "m2_v", "mean_x_0", "mean_x_1", "mean_v_0", "mean_v_1"});
    CHECK(s.series.rows.size() == 11);
    CHECK(s.final_state.n == 50);
    CHECK(s.final_state.t == doctest::Approx(0.5));
  }

  TEST_CASE("experiments are reproducible under any thread count") {
    for (const std::string& name : experiment_names()) {
      const ExperimentConfig c = small(name);
      set_thread_count(1);
      const std::string one = to_csv(run_experiment(name, c).series);
      set_thread_count(3);
      const std::string three = to_csv(run_experiment(name, c).series);
      set_thread_count(0);
      CAPTURE(name);
      CHECK(one == three);
    }
  }
}
