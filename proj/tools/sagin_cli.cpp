#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <sagin/centralized.hpp>
#include <sagin/distributed.hpp>
#include <sagin/experiment.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

struct RunArgs {
  std::string config;
  std::string experiment;
  std::string out = "-";
  std::string format = "csv";
  std::string algorithm;
  int seeds = 0;
  bool no_mbc = false;
};

int do_run(const RunArgs& a) {
  sagin::ScenarioInstance base;
  if (!a.config.empty()) base = sagin::load_config(a.config);

  sagin::ExperimentSpec spec;
  if (std::filesystem::exists(a.experiment))
    spec = sagin::load_experiment_spec(a.experiment, base);
  else
    spec = sagin::named_experiment(a.experiment, base);

  if (a.seeds > 0) {
    spec.seeds.clear();
    for (int i = 1; i <= a.seeds; ++i) spec.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  if (a.no_mbc) spec.mbc_enabled = false;
  if (!a.algorithm.empty()) spec.algorithms = {sagin::parse_algorithm(a.algorithm)};

  const auto records = sagin::run_experiment(spec);
  if (a.out == "-") {
    sagin::emit_results(records, a.format, std::cout);
  } else {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot open output: " + a.out);
    sagin::emit_results(records, a.format, out);
  }

  int failed = 0;
  for (const auto& r : records)
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "record failed (seed " << r.seed << ", " << r.algorithm
                << ", value " << r.sweep_value << "): " << r.error << '\n';
    }
  if (failed == static_cast<int>(records.size())) return kExitInfeasible;
  return kExitOk;
}

int do_validate(const std::string& config) {
  const sagin::ScenarioInstance s = sagin::load_config(config);
  const sagin::ScenarioInstance g = sagin::generate_scenario(s, s.seed);
  std::cout << "config ok: " << g.n_nodes() << " nodes, " << g.n_users() << " users, "
            << g.satellite.n_beams << " beams\n";
  return kExitOk;
}

int do_oracle(const std::string& suite) {
  auto line = [](const char* name, double v) { std::printf("%-28s %.12g\n", name, v); };
  if (suite == "pathloss") {
    line("ground_pl_db@1km_3ghz", sagin::ground_path_loss_db(1.0, 3.0));
    line("sat_pl_db@600km_20ghz", sagin::sat_path_loss_db(600.0, 20.0));
    sagin::Vec2 ground(10.0, 0.0);
    line("slant_km@600km_10km", sagin::slant_range(sagin::Vec2::Zero(), 600.0, ground));
    line("noise_ground_w@100mhz", sagin::noise_power_ground(-174.0, 1e8));
    line("noise_sat_w@400mhz", sagin::noise_power_sat(150.0, 290.0, 1.2, 4e8));
  } else if (suite == "fading") {
    sagin::SRParams p;
    line("sr_b", p.b);
    line("sr_m", p.m);
    line("sr_omega", p.omega);
    line("sr_mean_power_theory", p.omega + 2.0 * p.b);
    sagin::RngStream rng(7, 0);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += std::norm(sagin::sample_sr(p, rng));
    line("sr_mean_power_sampled", acc / n);
  } else if (suite == "beam") {
    line("j1_first_zero", 3.8317059702075123);
    line("j1_at_first_zero", sagin::bessel_j1(3.8317059702075123));
    const double g_t0 = std::pow(10.0, 38.5 / 10.0);
    line("beam_gain_boresight", sagin::beam_gain(0.0, g_t0, 1257.0));
  } else if (suite == "alpha") {
    sagin::ScenarioInstance cfg;
    const sagin::ScenarioInstance s = sagin::generate_scenario(cfg, 1);
    line("delta_g", s.sharing.delta_g);
    line("delta_s", s.sharing.delta_s);
    line("alpha_g_bs_gnouser", sagin::alpha_coefficient(s, 0, 0, 0));
    line("alpha_g_bs_snouser", sagin::alpha_coefficient(s, 0, 0, 3));
    line("alpha_s_bs_snouser", sagin::alpha_coefficient(s, 1, 0, 3));
    line("alpha_s_st_gnouser", sagin::alpha_coefficient(s, 1, 2, 0));
    line("alpha_g_st_gnouser", sagin::alpha_coefficient(s, 0, 2, 0));
    line("alpha_g_st_snouser", sagin::alpha_coefficient(s, 0, 2, 3));
  } else if (suite == "scenario") {
    sagin::ScenarioInstance cfg;
    const sagin::ScenarioInstance s = sagin::generate_scenario(cfg, 1);
    std::printf("nodes %d (bs %d, st %d), users %d (gno %d)\n", s.n_nodes(), s.network.n_bs,
                s.network.n_st, s.n_users(), s.network.n_users_gno);
    for (int i = 0; i < s.n_nodes(); ++i) {
      const sagin::Vec2 p = s.node_pos(i);
      std::printf("node %d  op %d  pos (%.6g, %.6g)  power_w %.6g", i, s.node_operator(i),
                  p.x(), p.y(), s.node_power_w(i));
      if (s.node_is_st(i)) std::printf("  beam %d", s.st_beam[s.st_index(i)]);
      std::printf("\n");
    }
    for (int k = 0; k < s.n_users(); ++k)
      std::printf("user %d  op %d  pos (%.6g, %.6g)\n", k, s.user_operator(k),
                  s.user_pos[k].x(), s.user_pos[k].y());
  } else {
    std::cerr << "unknown oracle suite: " << suite
              << " (try pathloss, fading, beam, alpha, scenario)\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-operator terrestrial/satellite network optimizer"};
  app.require_subcommand(1);

  RunArgs ra;
  CLI::App* run = app.add_subcommand("run", "run an experiment and write one record per case");
  run->add_option("--config", ra.config, "scenario config JSON (defaults built in)");
  run->add_option("--experiment", ra.experiment,
                  "preset name (single, psat_sweep, pst_sweep, delta_g, delta_s) or spec JSON path")
      ->required();
  run->add_option("--seeds", ra.seeds, "run seeds 1..n (overrides the spec's seed list)");
  run->add_option("--out", ra.out, "output path, '-' for stdout");
  run->add_option("--format", ra.format, "csv or jsonl");
  run->add_option("--algorithm", ra.algorithm, "restrict to one algorithm");
  run->add_flag("--no-mbc", ra.no_mbc, "drop the mutual-benefit revenue floors");

  std::string vconfig;
  CLI::App* val = app.add_subcommand("validate", "check a scenario config and exit");
  val->add_option("--config", vconfig, "scenario config JSON")->required();

  std::string suite;
  CLI::App* orc = app.add_subcommand("oracle", "print reference values derived from the model");
  orc->add_option("suite", suite, "pathloss, fading, beam, alpha, or scenario")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(ra);
    if (val->parsed()) return do_validate(vconfig);
    if (orc->parsed()) return do_oracle(suite);
  } catch (const sagin::NoFeasiblePoint& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const sagin::InfeasibleModel& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const sagin::ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
