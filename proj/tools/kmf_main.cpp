#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "kmf/config.hpp"
#include "kmf/csv.hpp"
#include "kmf/error.hpp"
#include "kmf/experiments.hpp"
#include "kmf/parallel.hpp"
#include "kmf/rates.hpp"
#include "kmf/transport.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerdictFail = 2;

struct RunOptions {
  std::string config_path;
  bool no_timestamp = false;
  std::map<std::string, std::string> values;  // canonical key -> flag value
};

// Aliases for the field block, alongside the canonical --field.* spellings.
const std::map<std::string, std::string>& short_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"field.kind", "--kind"},   {"field.alpha", "--alpha"}, {"field.alpha_prime", "--alpha-prime"},
      {"field.beta", "--beta"},   {"field.gamma", "--gamma"}, {"field.delta", "--delta"},
      {"field.dim", "--dim"},     {"output", "-o"},
  };
  return aliases;
}

void add_run_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--no-timestamp", opts.no_timestamp, "omit the generated-at line in outputs");
  for (const std::string& key : kmf::config_keys()) {
    if (key == "experiment") continue;
    std::string names = "--" + key;
    const auto alias = short_aliases().find(key);
    if (alias != short_aliases().end()) names += "," + alias->second;
    cmd->add_option(names, opts.values[key], "sets " + key);
  }
}

kmf::KeyValues flag_values(CLI::App* cmd, const RunOptions& opts) {
  kmf::KeyValues out;
  for (const std::string& key : kmf::config_keys()) {
    if (key == "experiment") continue;
    if (cmd->get_option("--" + key)->count() > 0) out.emplace_back(key, opts.values.at(key));
  }
  return out;
}

kmf::RunConfig resolve(const std::string& experiment, CLI::App* cmd, const RunOptions& opts) {
  const kmf::KeyValues file =
      opts.config_path.empty() ? kmf::KeyValues{} : kmf::read_key_values_file(opts.config_path);
  return kmf::resolve_config(experiment, file, flag_values(cmd, opts));
}

void print_rows(const kmf::ExperimentResult& res) {
  std::cout << res.name << " (" << res.status << ")\n";
  for (const std::string& note : res.notes) std::cout << "  " << note << '\n';
  for (const kmf::VerdictRow& row : res.verdict) {
    std::cout << "  " << (row.pass ? "PASS " : "FAIL ") << row.experiment
              << ": measured " << kmf::format_double(row.measured) << ", theory "
              << kmf::format_double(row.theory_value) << ", threshold "
              << kmf::format_double(row.threshold) << '\n';
  }
}

int run_named(const std::string& name, CLI::App* cmd, const RunOptions& opts) {
  const kmf::RunConfig cfg = resolve(name, cmd, opts);
  const bool stamp = !opts.no_timestamp;
  kmf::write_text_file(cfg.output / (name + "_resolved_config.txt"),
                       kmf::resolved_config_text(cfg), false);
  if (name == "simulate") {
    const kmf::SimulationResult sim = kmf::run_simulation(cfg.exp);
    kmf::write_text_file(cfg.output / "simulate_series.csv", kmf::to_csv(sim.series), stamp);
    if (cfg.exp.snapshot) {
      kmf::write_text_file(cfg.output / "simulate_snapshot.csv",
                           kmf::snapshot_csv(sim.final_state, cfg.exp.seed), false);
    }
    std::cout << "simulate: " << sim.series.rows.size() << " recorded rows, t = "
              << kmf::format_double(sim.final_state.t) << " -> " << cfg.output.string() << '\n';
    return kExitOk;
  }
  const kmf::ExperimentResult res = kmf::run_experiment(name, cfg.exp);
  kmf::write_text_file(cfg.output / (name + "_series.csv"), kmf::to_csv(res.series), stamp);
  kmf::write_text_file(cfg.output / (name + "_verdict.csv"), res.verdict_csv(), stamp);
  print_rows(res);
  std::cout << (res.passed() ? "verdict: pass" : "verdict: FAIL") << " -> " << cfg.output.string()
            << '\n';
  return res.passed() ? kExitOk : kExitVerdictFail;
}

struct RatesOptions {
  double alpha = 1.0;
  double alpha_prime = 1.0;
  double beta = 1.0;
  double eta = 0.0;
  std::string variant = "contraction";
  std::string mode = "paper";
  std::string csv_path;
};

int run_rates(const RatesOptions& o) {
  kmf::Coefficients c;
  c.alpha = o.alpha;
  c.alpha_prime = o.alpha_prime;
  c.beta = o.beta;
  c.validate();
  const kmf::RateVariant variant = kmf::rate_variant_from_string(o.variant);
  const kmf::SearchMode mode = kmf::search_mode_from_string(o.mode);
  const kmf::RateReport r = kmf::contraction_rate(c, o.eta, variant, mode);
  using kmf::format_double;
  std::cout << "eta0       = " << format_double(r.eta0) << '\n'
            << "b interval = (" << format_double(r.b_interval.lo) << ", "
            << format_double(r.b_interval.hi) << ") at eps = " << format_double(r.eps_star) << '\n'
            << "b*, eps*   = " << format_double(r.b_star) << ", " << format_double(r.eps_star)
            << '\n'
            << "c1, c2     = " << format_double(r.c1) << ", " << format_double(r.c2) << '\n'
            << "rate_C     = " << format_double(r.rate_C) << '\n'
            << "C'         = " << format_double(r.equivalence_Cprime) << '\n';
  std::string csv =
      "alpha,alpha_prime,beta,eta,variant,mode,eta0,b_lo,b_hi,b_star,eps_star,c1,c2,rate_C,Cprime\n";
  csv += format_double(c.alpha) + ',' + format_double(c.alpha_prime) + ',' +
         format_double(c.beta) + ',' + format_double(o.eta) + ',' +
         std::string(kmf::to_string(variant)) + ',' + std::string(kmf::to_string(mode)) + ',' +
         format_double(r.eta0) + ',' + format_double(r.b_interval.lo) + ',' +
         format_double(r.b_interval.hi) + ',' + format_double(r.b_star) + ',' +
         format_double(r.eps_star) + ',' + format_double(r.c1) + ',' + format_double(r.c2) + ',' +
         format_double(r.rate_C) + ',' + format_double(r.equivalence_Cprime) + '\n';
  std::cout << csv;
  if (!o.csv_path.empty()) kmf::write_text_file(o.csv_path, csv, false);
  return kExitOk;
}

struct TransportOptions {
  std::string file_a;
  std::string file_b;
  std::string metric = "euclidean";
  double b = 2.0;
  double beta = 1.0;
  bool entropic = false;
  double eps = 0.01;
  std::size_t max_iter = 10000;
  double tol = 1e-9;
  std::size_t cap = kmf::kDefaultExactCap;
  std::string plan_path;
};

int run_transport(const TransportOptions& o) {
  const kmf::PointCloud a = kmf::PointCloud::from_state(kmf::read_snapshot(o.file_a).state);
  const kmf::PointCloud b = kmf::PointCloud::from_state(kmf::read_snapshot(o.file_b).state);
  kmf::GroundMetric metric = kmf::GroundMetric::euclidean();
  if (o.metric == "qform") {
    metric = kmf::GroundMetric::qform(kmf::QForm(o.b, o.beta));
  } else if (o.metric != "euclidean") {
    throw kmf::ConfigError("--metric must be euclidean or qform");
  }
  std::string plan = "i,j,weight\n";
  if (o.entropic) {
    const kmf::EntropicResult r = kmf::w2_entropic(a, b, metric, o.eps, o.max_iter, o.tol);
    std::cout << "distance = " << kmf::format_double(r.distance) << " (entropic, eps "
              << kmf::format_double(o.eps) << ", " << r.iterations << " iterations, marginal error "
              << kmf::format_double(r.marginal_error) << (r.converged ? ")" : ", NOT converged)")
              << '\n';
    if (!r.converged) std::cerr << "warning: Sinkhorn did not reach the tolerance\n";
    for (std::size_t i = 0; i < a.n; ++i) {
      for (std::size_t j = 0; j < b.n; ++j) {
        const double w = r.plan.coupling[i * b.n + j];
        if (w > 0.0) plan += std::to_string(i) + ',' + std::to_string(j) + ',' + kmf::format_double(w) + '\n';
      }
    }
  } else {
    const kmf::TransportResult r = kmf::w2_exact(a, b, metric, o.cap);
    std::cout << "distance = " << kmf::format_double(r.distance) << " (exact)\n";
    const std::string w = kmf::format_double(1.0 / static_cast<double>(a.n));
    for (std::size_t i = 0; i < a.n; ++i) {
      plan += std::to_string(i) + ',' + std::to_string(r.plan.permutation[i]) + ',' + w + '\n';
    }
  }
  if (!o.plan_path.empty()) kmf::write_text_file(o.plan_path, plan, false);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic mean-field particle simulation and verification toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  RatesOptions rates;
  CLI::App* rates_cmd = app.add_subcommand("rates", "contraction constants for given coefficients");
  rates_cmd->add_option("--alpha", rates.alpha, "Lipschitz constant of A");
  rates_cmd->add_option("--alpha-prime", rates.alpha_prime, "monotonicity constant of A");
  rates_cmd->add_option("--beta", rates.beta, "confinement strength");
  rates_cmd->add_option("--eta", rates.eta, "gamma + delta");
  rates_cmd->add_option("--variant", rates.variant, "contraction | doubled_alpha");
  rates_cmd->add_option("--mode", rates.mode, "paper | full | full_lmi");
  rates_cmd->add_option("--csv", rates.csv_path, "also write the CSV row to this file");

  std::map<std::string, RunOptions> run_opts;
  std::map<std::string, CLI::App*> run_cmds;
  const std::map<std::string, std::string> blurbs = {
      {"simulate", "run the N-particle system and record moments"},
      {"contraction", "decay of the coupled Q-distance between two initial laws"},
      {"equilibrium", "distance between runs from distant initial laws at large time"},
      {"chaos", "particle system vs nonlinear process over an N ladder"},
      {"deviation", "fluctuations of empirical averages of a Lipschitz observable"},
      {"moments", "long-horizon second moment of the particle system"},
  };
  for (const char* name : {"simulate", "contraction", "equilibrium", "chaos", "deviation", "moments"}) {
    CLI::App* cmd = app.add_subcommand(name, blurbs.at(name));
    add_run_options(cmd, run_opts[name]);
    run_cmds[name] = cmd;
  }

  TransportOptions tr;
  CLI::App* tr_cmd = app.add_subcommand("transport", "W2 distance between two snapshot files");
  tr_cmd->add_option("snapshot_a", tr.file_a, "first snapshot CSV")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("snapshot_b", tr.file_b, "second snapshot CSV")->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--metric", tr.metric, "euclidean | qform");
  tr_cmd->add_option("--b", tr.b, "b of the quadratic form");
  tr_cmd->add_option("--beta", tr.beta, "beta of the quadratic form");
  auto* exact_flag = tr_cmd->add_flag("--exact", "exact assignment solver (default)");
  tr_cmd->add_flag("--entropic", tr.entropic, "log-domain Sinkhorn")->excludes(exact_flag);
  tr_cmd->add_option("--eps", tr.eps, "entropic regularisation");
  tr_cmd->add_option("--max-iter", tr.max_iter, "Sinkhorn iteration cap");
  tr_cmd->add_option("--tol", tr.tol, "Sinkhorn marginal tolerance");
  tr_cmd->add_option("--cap", tr.cap, "largest n for the exact solver");
  tr_cmd->add_option("--plan", tr.plan_path, "write the transport plan as i,j,weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    kmf::configure_threads_from_env();
    if (rates_cmd->parsed()) return run_rates(rates);
    if (tr_cmd->parsed()) return run_transport(tr);
    for (auto& [name, cmd] : run_cmds) {
      if (cmd->parsed()) return run_named(name, cmd, run_opts[name]);
    }
  } catch (const kmf::BlowUpError& e) {
    std::cerr << "blow-up at step " << e.step() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::cerr << app.help();
  return kExitUsage;
}
