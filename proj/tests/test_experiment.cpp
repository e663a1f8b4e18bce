#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sagin/experiment.hpp>

#include "test_util.hpp"

using namespace sagin;

TEST_CASE("algorithm and sweep names round-trip") {
  for (Algorithm a : {Algorithm::Centralized, Algorithm::Distributed, Algorithm::CaEra,
                      Algorithm::CaOpw, Algorithm::CaOtw, Algorithm::NoSharing})
    CHECK(parse_algorithm(algorithm_name(a)) == a);
  CHECK(algorithm_name(Algorithm::CaEra) == std::string("ca_era"));
  CHECK_THROWS_AS(parse_algorithm("simulated_annealing"), std::invalid_argument);

  for (SweepVar v :
       {SweepVar::None, SweepVar::PSat, SweepVar::PSt, SweepVar::DeltaG, SweepVar::DeltaS})
    CHECK(parse_sweep_var(sweep_var_name(v)) == v);
  CHECK_THROWS_AS(parse_sweep_var("bogus"), std::invalid_argument);
}

TEST_CASE("sweep application rewrites the right scenario knob") {
  const ScenarioInstance base = micro_config();

  const ScenarioInstance a = apply_sweep(base, SweepVar::PSat, 25.0);
  CHECK(a.satellite.max_power_w == 25.0);

  const ScenarioInstance b = apply_sweep(base, SweepVar::PSt, 49.0);  // dBm in, watts stored
  CHECK(b.network.st_power_w == doctest::Approx(79.4328234724282).epsilon(1e-12));

  const ScenarioInstance d = apply_sweep(base, SweepVar::DeltaG, 0.3);
  CHECK(d.sharing.delta_g == 0.3);
  CHECK(d.sharing.delta_s == base.sharing.delta_s);
  const ScenarioInstance e = apply_sweep(base, SweepVar::DeltaS, 0.9);
  CHECK(e.sharing.delta_s == 0.9);

  const ScenarioInstance n = apply_sweep(base, SweepVar::None, 123.0);  // no-op
  CHECK(n.network.st_power_w == base.network.st_power_w);
  CHECK(n.satellite.max_power_w == base.satellite.max_power_w);
}

TEST_CASE("spec hash is stable and sensitive to content") {
  const ScenarioInstance base = micro_config();
  const ExperimentSpec spec = named_experiment("single", base);
  const std::uint64_t h1 = spec_hash(spec);
  CHECK(spec_hash(spec) == h1);

  ExperimentSpec other = spec;
  other.seeds.push_back(999);
  CHECK(spec_hash(other) != h1);

  ExperimentSpec flipped = spec;
  flipped.mbc_enabled = !flipped.mbc_enabled;
  CHECK(spec_hash(flipped) != h1);

  ExperimentSpec power = spec;
  power.base.satellite.max_power_w *= 2.0;
  CHECK(spec_hash(power) != h1);
}

TEST_CASE("named presets carry the advertised grids") {
  const ScenarioInstance base = micro_config();

  const ExperimentSpec single = named_experiment("single", base);
  CHECK(single.sweep_var == SweepVar::None);
  REQUIRE(single.algorithms.size() == 2);
  CHECK(single.algorithms[0] == Algorithm::Centralized);
  CHECK(single.algorithms[1] == Algorithm::Distributed);

  const ExperimentSpec psat = named_experiment("psat_sweep", base);
  CHECK(psat.sweep_var == SweepVar::PSat);
  REQUIRE(psat.sweep_values.size() == 5);
  CHECK(psat.sweep_values.front() == 10.0);
  CHECK(psat.sweep_values.back() == 50.0);
  CHECK(psat.algorithms.size() == 5);

  const ExperimentSpec pst = named_experiment("pst_sweep", base);
  CHECK(pst.sweep_var == SweepVar::PSt);
  REQUIRE(pst.sweep_values.size() == 7);
  CHECK(pst.sweep_values.front() == 31.0);
  CHECK(pst.sweep_values.back() == 49.0);

  const ExperimentSpec dg = named_experiment("delta_g", base);
  CHECK(dg.sweep_var == SweepVar::DeltaG);
  CHECK(dg.base.sharing.delta_s == 1.0);
  REQUIRE(dg.sweep_values.size() == 11);
  CHECK(dg.sweep_values.front() == 0.0);
  CHECK(dg.sweep_values.back() == doctest::Approx(1.0));

  const ExperimentSpec ds = named_experiment("delta_s", base);
  CHECK(ds.sweep_var == SweepVar::DeltaS);
  CHECK(ds.base.sharing.delta_g == 1.0);

  CHECK_THROWS_AS(named_experiment("figure7", base), std::invalid_argument);
}

TEST_CASE("spec validation rejects malformed grids") {
  const ScenarioInstance base = micro_config();
  ExperimentSpec spec = named_experiment("single", base);
  CHECK_NOTHROW(validate_spec(spec));

  ExperimentSpec no_seeds = spec;
  no_seeds.seeds.clear();
  CHECK_THROWS_AS(validate_spec(no_seeds), std::invalid_argument);

  ExperimentSpec no_algs = spec;
  no_algs.algorithms.clear();
  CHECK_THROWS_AS(validate_spec(no_algs), std::invalid_argument);

  ExperimentSpec empty_grid = spec;
  empty_grid.sweep_var = SweepVar::PSat;
  empty_grid.sweep_values.clear();
  CHECK_THROWS_AS(validate_spec(empty_grid), std::invalid_argument);

  ExperimentSpec bad_delta = spec;
  bad_delta.sweep_var = SweepVar::DeltaG;
  bad_delta.sweep_values = {0.5, 1.5};
  CHECK_THROWS_AS(validate_spec(bad_delta), std::invalid_argument);

  ExperimentSpec bad_power = spec;
  bad_power.sweep_var = SweepVar::PSat;
  bad_power.sweep_values = {-5.0};
  CHECK_THROWS_AS(validate_spec(bad_power), std::invalid_argument);

  ExperimentSpec bad_base = spec;
  bad_base.base.network.n_bs = 0;
  CHECK_THROWS_AS(validate_spec(bad_base), ValidationError);
}

static ExperimentRecord sample_record() {
  ExperimentRecord r;
  r.spec_hash_hex = "00ff00ff00ff00ff";
  r.seed = 3;
  r.sweep_var = "P_Sat";
  r.sweep_value = 25.0;
  r.algorithm = "centralized";
  r.wsr = 12.345678901234;
  r.u_g = 4.5;
  r.u_s = 7.8;
  r.u_g0 = 4.0;
  r.u_s0 = 7.0;
  r.mbc_slack_g = 0.5;
  r.mbc_slack_s = 0.8;
  r.iterations = 42;
  r.max_residual = 1e-8;
  r.wall_ms = 1234.5;
  return r;
}

TEST_CASE("result emission round-trips through csv") {
  std::vector<ExperimentRecord> recs{sample_record(), sample_record()};
  recs[1].seed = 4;
  recs[1].algorithm = "ca_era";

  std::ostringstream out;
  emit_results(recs, "csv", out);
  const std::string csv = out.str();
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "spec_hash,seed,sweep_var,sweep_value,algorithm,wsr,u_g,u_s,u_g0,u_s0,"
        "mbc_slack_g,mbc_slack_s,iterations,max_residual,wall_ms");

  std::istringstream in(csv);
  const std::vector<ExperimentRecord> back = parse_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].spec_hash_hex == recs[0].spec_hash_hex);
  CHECK(back[0].seed == 3);
  CHECK(back[0].sweep_var == "P_Sat");
  CHECK(back[0].sweep_value == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(back[0].algorithm == "centralized");
  CHECK(back[0].wsr == doctest::Approx(recs[0].wsr).epsilon(1e-9));
  CHECK(back[0].iterations == 42);
  CHECK(back[0].max_residual == doctest::Approx(1e-8).epsilon(1e-6));
  CHECK(back[1].seed == 4);
  CHECK(back[1].algorithm == "ca_era");

  std::ostringstream sink;
  CHECK_THROWS_AS(emit_results({}, "csv", sink), std::invalid_argument);
  CHECK_THROWS_AS(emit_results(recs, "parquet", sink), std::invalid_argument);
  std::istringstream bad("not,a,header\n1,2,3\n");
  CHECK_THROWS_AS(parse_csv(bad), std::invalid_argument);
}

TEST_CASE("jsonl emission carries errors and one object per line") {
  std::vector<ExperimentRecord> recs{sample_record(), sample_record()};
  recs[1].error = "infeasible";
  std::ostringstream out;
  emit_results(recs, "jsonl", out);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++n;
    CHECK(line.front() == '{');
    CHECK(line.find("\"wsr\"") != std::string::npos);
    if (n == 1) CHECK(line.find("\"error\"") == std::string::npos);
    if (n == 2) CHECK(line.find("infeasible") != std::string::npos);
  }
  CHECK(n == 2);
}

TEST_CASE("experiment specs load from json") {
  const char* path = "exp_spec_test.json";
  {
    std::ofstream out(path);
    out << R"({
      "name": "custom",
      "algorithms": ["centralized", "ca_era"],
      "sweep_var": "P_Sat",
      "sweep_values": [10.0, 50.0],
      "seeds": [1, 2, 3],
      "mbc_enabled": false
    })";
  }
  const ExperimentSpec spec = load_experiment_spec(path, micro_config());
  std::remove(path);
  CHECK(spec.name == "custom");
  REQUIRE(spec.algorithms.size() == 2);
  CHECK(spec.algorithms[1] == Algorithm::CaEra);
  CHECK(spec.sweep_var == SweepVar::PSat);
  REQUIRE(spec.sweep_values.size() == 2);
  REQUIRE(spec.seeds.size() == 3);
  CHECK(spec.seeds[2] == 3);
  CHECK(!spec.mbc_enabled);
}

TEST_CASE("a tiny frozen-association experiment produces complete records") {
  ExperimentSpec spec;
  spec.name = "unit";
  spec.base = micro_config();
  spec.algorithms = {Algorithm::CaEra};
  spec.seeds = {5};
  spec.mbc_enabled = false;

  const std::vector<ExperimentRecord> recs = run_experiment(spec);
  REQUIRE(recs.size() == 1);
  const ExperimentRecord& r = recs[0];
  CHECK(r.error.empty());
  CHECK(r.seed == 5);
  CHECK(r.algorithm == "ca_era");
  CHECK(r.sweep_var == "none");
  CHECK(r.wsr > 0.0);
  CHECK(std::isfinite(r.u_g));
  CHECK(std::isfinite(r.u_s));
  CHECK(r.u_g0 > 0.0);  // standalone floors come from the shared baseline run
  CHECK(r.u_s0 > 0.0);
  CHECK(r.iterations == 0);  // the frozen baseline performs no refinement sweeps
  CHECK(r.wall_ms >= 0.0);

  char want[32];
  std::snprintf(want, sizeof(want), "%016llx",
                static_cast<unsigned long long>(spec_hash(spec)));
  CHECK(r.spec_hash_hex == want);

  // rerunning reproduces every numeric field exactly
  const std::vector<ExperimentRecord> again = run_experiment(spec);
  REQUIRE(again.size() == 1);
  CHECK(again[0].wsr == r.wsr);
  CHECK(again[0].u_g == r.u_g);
  CHECK(again[0].u_s == r.u_s);
  CHECK(again[0].u_g0 == r.u_g0);
  CHECK(again[0].u_s0 == r.u_s0);
}
