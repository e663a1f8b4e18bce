#pragma once
// Experiment harness: named sweep definitions, the three closest-association
// baselines, seeded Monte Carlo execution with paired channel draws across
// algorithms, and CSV / JSON-lines record output.

#include <sagin/distributed.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sagin {

enum class Algorithm { Centralized, Distributed, CaEra, CaOpw, CaOtw, NoSharing };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& name);  // throws std::invalid_argument

enum class SweepVar { None, PSat, PSt, DeltaG, DeltaS };

std::string sweep_var_name(SweepVar v);
SweepVar parse_sweep_var(const std::string& name);  // throws std::invalid_argument

// Returns a configuration with the swept knob replaced: PSat in watts, PSt in
// dBm, sharing coefficients dimensionless in [0, 1].
ScenarioInstance apply_sweep(const ScenarioInstance& base, SweepVar var, double value);

struct ExperimentSpec {
  std::string name;  // label folded into the record hash
  ScenarioInstance base;
  std::vector<Algorithm> algorithms{Algorithm::Centralized};
  SweepVar sweep_var = SweepVar::None;
  std::vector<double> sweep_values;  // ignored (single point) when sweep_var is None
  std::vector<std::uint64_t> seeds{1};
  bool mbc_enabled = true;
};

void validate_spec(const ExperimentSpec& spec);  // throws std::invalid_argument

// FNV-1a over a canonical text serialization of the spec.
std::uint64_t spec_hash(const ExperimentSpec& spec);

struct ExperimentRecord {
  std::string spec_hash_hex;
  std::uint64_t seed = 0;
  std::string sweep_var = "none";
  double sweep_value = 0.0;
  std::string algorithm;
  double wsr = 0.0;
  double u_g = 0.0, u_s = 0.0;
  double u_g0 = 0.0, u_s0 = 0.0;
  double mbc_slack_g = 0.0, mbc_slack_s = 0.0;  // U_z - U_z^0 (negative = loss)
  int iterations = 0;
  double max_residual = 0.0;
  double wall_ms = 0.0;
  std::string error;  // nonempty when the run failed; excluded from the CSV schema
};

// Closest-node association (ties to the lowest id), equal power over a node's
// served streams and both bands, matched-filter directions, equal satellite
// beam powers, equal time shares within each beam. Feeder overflow is left in
// place and shows up as a residual.
SolutionState run_baseline_ca_era(const ScenarioInstance& s, const ChannelRealization& c);

// Closest association frozen, then the alternating solver optimizes
// (beamformers, satellite powers) or (beamformers, time shares); the other
// satellite resource keeps its equal split. Starts from the ERA state with
// feeder overflow backed off; revenue floors are disabled.
CentralizedResult run_baseline_ca_opw(const ScenarioInstance& s, const ChannelRealization& c,
                                      const SolverOptions& solver = {});
CentralizedResult run_baseline_ca_otw(const ScenarioInstance& s, const ChannelRealization& c,
                                      const SolverOptions& solver = {});

// Cartesian product of sweep values x seeds x algorithms, sequentially, with
// one scenario + channel draw per (value, seed) shared by every algorithm.
// A record failure is isolated into its `error` field.
std::vector<ExperimentRecord> run_experiment(const ExperimentSpec& spec);

// Stable 15-column schema; floats at 12 significant digits. `format` is
// "csv" or "jsonl". Throws std::invalid_argument on empty records or an
// unknown format.
void emit_results(const std::vector<ExperimentRecord>& records, const std::string& format,
                  std::ostream& out);

// Round-trip partner of the CSV emitter (used for schema checks).
std::vector<ExperimentRecord> parse_csv(std::istream& in);

// Named sweep presets over a base configuration:
//   single      one point, centralized + distributed
//   psat_sweep  P_Sat 10..50 W, all baselines
//   pst_sweep   P_ST 31..49 dBm at P_Sat = 50 W
//   delta_g     delta_G 0..1 with delta_S = 1, centralized
//   delta_s     delta_S 0..1 with delta_G = 1, centralized
ExperimentSpec named_experiment(const std::string& name, const ScenarioInstance& base);

// JSON experiment description (name, algorithms, sweep_var, sweep_values,
// seeds, mbc_enabled) over a base configuration.
ExperimentSpec load_experiment_spec(const std::string& path, const ScenarioInstance& base);

}  // namespace sagin
