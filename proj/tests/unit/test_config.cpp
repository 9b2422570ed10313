#include <cmath>
#include <string>

#include "doctest.h"
#include "kmf/config.hpp"
#include "kmf/error.hpp"

using namespace kmf;

TEST_SUITE("config") {
  TEST_CASE("empty configuration gives the defaults") {
    const RunConfig cfg = parse_config_text("");
    CHECK(cfg.experiment == "simulate");
    CHECK(cfg.exp == defaults_for("simulate"));
    CHECK(cfg.exp.seed == kDefaultSeed);
    CHECK(cfg.output == "out");
    const RunConfig again = parse_config_text("# only a comment\n\n");
    CHECK(again == cfg);
  }

  TEST_CASE("values, comments and whitespace") {
    const RunConfig cfg = parse_config_text(
        "experiment = chaos   # trailing comment\n"
        "  field.gamma=0.05\n"
        "N = 64\n"
        "exp.n_ladder = 8, 16 ,32\n"
        "exp.mode = proxy\n"
        "exp.snapshot = true\n"
        "output = results/chaos\n");
    CHECK(cfg.experiment == "chaos");
    CHECK(cfg.exp.coeffs.gamma == 0.05);
    CHECK(cfg.exp.n == 64);
    CHECK(cfg.exp.n_ladder == std::vector<std::size_t>{8, 16, 32});
    CHECK(cfg.exp.mode == ChaosMode::proxy);
    CHECK(cfg.exp.snapshot);
    CHECK(cfg.output == "results/chaos");
    CHECK(cfg.exp.replicas == defaults_for("chaos").replicas);
  }

  TEST_CASE("flags override the file") {
    const KeyValues file = read_key_values("N = 64\nfield.gamma = 0.1\n");
    const KeyValues flags = {{"N", "128"}};
    const RunConfig cfg = resolve_config("chaos", file, flags);
    CHECK(cfg.exp.n == 128);
    CHECK(cfg.exp.coeffs.gamma == 0.1);
  }

  TEST_CASE("hard errors") {
    CHECK_THROWS_AS(read_key_values("field.gama = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(read_key_values("N = 1\nN = 2\n"), ConfigError);
    CHECK_THROWS_AS(read_key_values("just words\n"), ConfigError);
    CHECK_THROWS_AS(read_key_values(" = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("N = sixty\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("N = -3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("dt = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("T = 1.0005\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("field.kind = custom\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("field.kind = cubic\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("field.alpha_prime = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("experiment = teleport\n"), ConfigError);
    CHECK_THROWS_AS(resolve_config("chaos", read_key_values("experiment = deviation\n")), ConfigError);
    CHECK_THROWS_AS(parse_config(std::filesystem::path("/nonexistent/kmf.cfg")), ConfigError);
  }

  TEST_CASE("admissibility precheck cites eta0") {
    try {
      parse_config_text("experiment = contraction\nfield.gamma = 0.3\n");
      FAIL("expected an inadmissible configuration");
    } catch (const InadmissibleError& e) {
      CHECK(e.eta0() == doctest::Approx(2.0 - std::sqrt(3.0)));
      CHECK(std::string(e.what()).find("0.267949") != std::string::npos);
    }
    // The doubled-alpha threshold is lower.
    CHECK_THROWS_AS(parse_config_text("experiment = moments\nfield.gamma = 0.2\n"), InadmissibleError);
    CHECK_NOTHROW(parse_config_text("experiment = contraction\nfield.gamma = 0.2\n"));
    // Plain simulation has no smallness requirement.
    CHECK_NOTHROW(parse_config_text("field.gamma = 0.3\n"));
  }

  TEST_CASE("resolved configuration round-trips") {
    for (const std::string& name : {"simulate", "contraction", "equilibrium", "chaos", "deviation",
                                    "moments"}) {
      KeyValues flags = {{"experiment", name}, {"seed", "99"}, {"field.dim", "2"}};
      const RunConfig cfg = resolve_config({}, {}, flags);
      const std::string text = resolved_config_text(cfg);
      CAPTURE(text);
      const RunConfig back = parse_config_text(text);
      CHECK(back == cfg);
      CHECK(resolved_config_text(back) == text);
      // Every key is echoed exactly once.
      for (const std::string& key : config_keys()) {
        const std::string line = key + " = ";
        const bool echoed = text.rfind(line, 0) == 0 || text.find("\n" + line) != std::string::npos;
        CHECK(echoed);
      }
    }
    RunConfig odd = parse_config_text("exp.radii = 0.1,0.30000000000000004\ndt = 0.002\nT = 0.2\n");
    CHECK(parse_config_text(resolved_config_text(odd)) == odd);
  }
}
