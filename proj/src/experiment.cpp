#include <sagin/experiment.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sagin {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double max_residual_excl_binariness(const std::map<std::string, double>& residuals) {
  double worst = 0.0;
  for (const auto& [name, val] : residuals)
    if (name != "binariness") worst = std::max(worst, val);
  return worst;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

constexpr std::uint64_t kChannelStream = 1;

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Centralized: return "centralized";
    case Algorithm::Distributed: return "distributed";
    case Algorithm::CaEra: return "ca_era";
    case Algorithm::CaOpw: return "ca_opw";
    case Algorithm::CaOtw: return "ca_otw";
    case Algorithm::NoSharing: return "nosharing";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::Centralized, Algorithm::Distributed, Algorithm::CaEra,
                      Algorithm::CaOpw, Algorithm::CaOtw, Algorithm::NoSharing})
    if (algorithm_name(a) == name) return a;
  throw std::invalid_argument("unknown algorithm: " + name);
}

std::string sweep_var_name(SweepVar v) {
  switch (v) {
    case SweepVar::None: return "none";
    case SweepVar::PSat: return "P_Sat";
    case SweepVar::PSt: return "P_ST";
    case SweepVar::DeltaG: return "delta_G";
    case SweepVar::DeltaS: return "delta_S";
  }
  return "none";
}

SweepVar parse_sweep_var(const std::string& name) {
  for (SweepVar v : {SweepVar::None, SweepVar::PSat, SweepVar::PSt, SweepVar::DeltaG,
                     SweepVar::DeltaS})
    if (sweep_var_name(v) == name) return v;
  throw std::invalid_argument("unknown sweep variable: " + name);
}

ScenarioInstance apply_sweep(const ScenarioInstance& base, SweepVar var, double value) {
  ScenarioInstance cfg = base;
  switch (var) {
    case SweepVar::None:
      break;
    case SweepVar::PSat:
      cfg.satellite.max_power_w = value;
      break;
    case SweepVar::PSt:
      cfg.network.st_power_w = std::pow(10.0, (value - 30.0) / 10.0);  // dBm -> W
      break;
    case SweepVar::DeltaG:
      cfg.sharing.delta_g = value;
      break;
    case SweepVar::DeltaS:
      cfg.sharing.delta_s = value;
      break;
  }
  return cfg;
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  if (spec.algorithms.empty())
    throw std::invalid_argument("experiment needs at least one algorithm");
  if (spec.sweep_var != SweepVar::None && spec.sweep_values.empty())
    throw std::invalid_argument("sweep variable set but no sweep values given");
  for (double v : spec.sweep_values) {
    switch (spec.sweep_var) {
      case SweepVar::PSat:
        if (!(v > 0.0 && v <= 1e4)) throw std::invalid_argument("P_Sat out of range");
        break;
      case SweepVar::PSt:
        if (!(v > 0.0 && v <= 80.0)) throw std::invalid_argument("P_ST (dBm) out of range");
        break;
      case SweepVar::DeltaG:
      case SweepVar::DeltaS:
        if (!(v >= 0.0 && v <= 1.0))
          throw std::invalid_argument("sharing coefficient out of [0, 1]");
        break;
      case SweepVar::None:
        break;
    }
  }
  validate(spec.base);
}

std::uint64_t spec_hash(const ExperimentSpec& spec) {
  std::ostringstream os;
  os << spec.name << '|' << sweep_var_name(spec.sweep_var) << '|';
  for (double v : spec.sweep_values) os << fmt12(v) << ',';
  os << '|';
  for (Algorithm a : spec.algorithms) os << algorithm_name(a) << ',';
  os << '|';
  for (std::uint64_t sd : spec.seeds) os << sd << ',';
  os << '|' << (spec.mbc_enabled ? 1 : 0) << '|';
  const ScenarioInstance& b = spec.base;
  os << b.network.n_bs << ',' << b.network.n_st << ',' << b.network.n_users_gno << ','
     << b.network.n_users_sno << ',' << b.network.n_antennas << ','
     << fmt12(b.network.bs_power_w) << ',' << fmt12(b.network.st_power_w) << ','
     << fmt12(b.network.region_km) << ',' << fmt12(b.satellite.altitude_km) << ','
     << b.satellite.n_beams << ',' << fmt12(b.satellite.max_power_w) << ','
     << fmt12(b.satellite.b_ka_hz) << ',' << fmt12(b.bands.b_c_hz) << ','
     << fmt12(b.bands.f_c_ghz) << ',' << fmt12(b.sharing.delta_g) << ','
     << fmt12(b.sharing.delta_s) << ',' << b.seed;
  return fnv1a(os.str());
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

SolutionState run_baseline_ca_era(const ScenarioInstance& s, const ChannelRealization& c) {
  const Eigen::MatrixXd x = closest_node_association(s, /*per_operator=*/false);
  return matched_filter_state(s, c, x, /*band_scope=*/-1);
}

namespace {

CentralizedResult run_frozen_association(const ScenarioInstance& s, const ChannelRealization& c,
                                         bool optimize_power, const SolverOptions& solver) {
  SolutionState start = run_baseline_ca_era(s, c);
  backoff_feeder_overflow(s, c, start);
  tighten_aux(s, c, start);
  CentralizedOptions co;
  co.mbc_enabled = false;
  co.fix_x = true;
  co.enable_p = optimize_power;
  co.enable_t = !optimize_power;
  co.kick_eps = 0.0;
  co.uniform_x_init = false;
  co.start = std::move(start);
  co.u0_override = std::array<double, 2>{0.0, 0.0};
  co.solver = solver;
  return run_wsrm_centralized(s, c, co);
}

}  // namespace

CentralizedResult run_baseline_ca_opw(const ScenarioInstance& s, const ChannelRealization& c,
                                      const SolverOptions& solver) {
  return run_frozen_association(s, c, /*optimize_power=*/true, solver);
}

CentralizedResult run_baseline_ca_otw(const ScenarioInstance& s, const ChannelRealization& c,
                                      const SolverOptions& solver) {
  return run_frozen_association(s, c, /*optimize_power=*/false, solver);
}

// ---------------------------------------------------------------------------
// runner
// ---------------------------------------------------------------------------

std::vector<ExperimentRecord> run_experiment(const ExperimentSpec& spec) {
  validate_spec(spec);
  const std::string hash = hex64(spec_hash(spec));
  std::vector<double> values = spec.sweep_values;
  if (spec.sweep_var == SweepVar::None) values = {0.0};

  std::vector<ExperimentRecord> records;
  for (double value : values) {
    const ScenarioInstance cfg = apply_sweep(spec.base, spec.sweep_var, value);
    for (std::uint64_t seed : spec.seeds) {
      const ScenarioInstance sc = generate_scenario(cfg, seed);
      RngStream rng(seed, kChannelStream);
      const ChannelRealization ch = draw_channels(sc, rng);

      // standalone floors, shared by every record at this (value, seed) point
      NoSharingResult ns;
      std::string ns_error;
      try {
        NoSharingOptions nso;
        ns = run_nosharing(sc, ch);
        (void)nso;
      } catch (const std::exception& e) {
        ns_error = e.what();
      }

      for (Algorithm alg : spec.algorithms) {
        ExperimentRecord rec;
        rec.spec_hash_hex = hash;
        rec.seed = seed;
        rec.sweep_var = sweep_var_name(spec.sweep_var);
        rec.sweep_value = value;
        rec.algorithm = algorithm_name(alg);
        rec.u_g0 = ns_error.empty() ? ns.u0[0] : std::nan("");
        rec.u_s0 = ns_error.empty() ? ns.u0[1] : std::nan("");
        const auto t0 = Clock::now();
        try {
          if (!ns_error.empty()) throw std::runtime_error("floor computation failed: " + ns_error);
          SolutionState st;
          std::map<std::string, double> residuals;
          switch (alg) {
            case Algorithm::NoSharing: {
              st = ns.state;
              rec.iterations = static_cast<int>(ns.trace[0].entries.size() +
                                                ns.trace[1].entries.size());
              residuals = constraint_residuals(sc, ch, st, ns.u0, spec.mbc_enabled);
              break;
            }
            case Algorithm::Centralized: {
              CentralizedOptions co;
              co.mbc_enabled = spec.mbc_enabled;
              CentralizedResult r = run_wsrm_centralized(sc, ch, co);
              st = r.state;
              rec.iterations = static_cast<int>(r.trace.entries.size());
              residuals = r.residuals;
              break;
            }
            case Algorithm::Distributed: {
              DistributedOptions dopt;
              dopt.mbc_enabled = spec.mbc_enabled;
              DistributedResult r = run_wsrm_distributed(sc, ch, dopt);
              st = r.state;
              rec.iterations = static_cast<int>(r.trace.entries.size());
              residuals = r.residuals;
              break;
            }
            case Algorithm::CaEra: {
              st = run_baseline_ca_era(sc, ch);
              rec.iterations = 0;
              residuals = constraint_residuals(sc, ch, st, ns.u0, /*mbc_on=*/false);
              break;
            }
            case Algorithm::CaOpw:
            case Algorithm::CaOtw: {
              CentralizedResult r = alg == Algorithm::CaOpw ? run_baseline_ca_opw(sc, ch)
                                                            : run_baseline_ca_otw(sc, ch);
              st = r.state;
              rec.iterations = static_cast<int>(r.trace.entries.size());
              residuals = r.residuals;
              break;
            }
          }
          rec.wsr = wsr(sc, ch, st);
          const RevenueReport rr = revenue(sc, ch, st);
          rec.u_g = rr.u[0];
          rec.u_s = rr.u[1];
          rec.mbc_slack_g = rec.u_g - rec.u_g0;
          rec.mbc_slack_s = rec.u_s - rec.u_s0;
          rec.max_residual = max_residual_excl_binariness(residuals);
        } catch (const std::exception& e) {
          rec.error = e.what();
          rec.wsr = rec.u_g = rec.u_s = std::nan("");
          rec.mbc_slack_g = rec.mbc_slack_s = std::nan("");
        }
        rec.wall_ms = ms_since(t0);
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// record output
// ---------------------------------------------------------------------------

namespace {

const char* kColumns =
    "spec_hash,seed,sweep_var,sweep_value,algorithm,wsr,u_g,u_s,u_g0,u_s0,"
    "mbc_slack_g,mbc_slack_s,iterations,max_residual,wall_ms";

}  // namespace

void emit_results(const std::vector<ExperimentRecord>& records, const std::string& format,
                  std::ostream& out) {
  if (records.empty()) throw std::invalid_argument("no records to emit");
  if (format == "csv") {
    out << kColumns << '\n';
    for (const auto& r : records) {
      out << r.spec_hash_hex << ',' << r.seed << ',' << r.sweep_var << ','
          << fmt12(r.sweep_value) << ',' << r.algorithm << ',' << fmt12(r.wsr) << ','
          << fmt12(r.u_g) << ',' << fmt12(r.u_s) << ',' << fmt12(r.u_g0) << ','
          << fmt12(r.u_s0) << ',' << fmt12(r.mbc_slack_g) << ',' << fmt12(r.mbc_slack_s)
          << ',' << r.iterations << ',' << fmt12(r.max_residual) << ',' << fmt12(r.wall_ms)
          << '\n';
    }
  } else if (format == "jsonl") {
    for (const auto& r : records) {
      json j{{"spec_hash", r.spec_hash_hex},
             {"seed", r.seed},
             {"sweep_var", r.sweep_var},
             {"sweep_value", r.sweep_value},
             {"algorithm", r.algorithm},
             {"wsr", r.wsr},
             {"u_g", r.u_g},
             {"u_s", r.u_s},
             {"u_g0", r.u_g0},
             {"u_s0", r.u_s0},
             {"mbc_slack_g", r.mbc_slack_g},
             {"mbc_slack_s", r.mbc_slack_s},
             {"iterations", r.iterations},
             {"max_residual", r.max_residual},
             {"wall_ms", r.wall_ms}};
      if (!r.error.empty()) j["error"] = r.error;
      out << j.dump() << '\n';
    }
  } else {
    throw std::invalid_argument("unknown output format: " + format);
  }
  if (!out) throw std::runtime_error("write failed while emitting records");
}

std::vector<ExperimentRecord> parse_csv(std::istream& in) {
  std::vector<ExperimentRecord> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (line != kColumns) throw std::invalid_argument("unexpected column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 15) throw std::invalid_argument("row does not have 15 columns");
    ExperimentRecord r;
    r.spec_hash_hex = f[0];
    r.seed = std::stoull(f[1]);
    r.sweep_var = f[2];
    r.sweep_value = std::stod(f[3]);
    r.algorithm = f[4];
    r.wsr = std::stod(f[5]);
    r.u_g = std::stod(f[6]);
    r.u_s = std::stod(f[7]);
    r.u_g0 = std::stod(f[8]);
    r.u_s0 = std::stod(f[9]);
    r.mbc_slack_g = std::stod(f[10]);
    r.mbc_slack_s = std::stod(f[11]);
    r.iterations = std::stoi(f[12]);
    r.max_residual = std::stod(f[13]);
    r.wall_ms = std::stod(f[14]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// presets and configuration I/O
// ---------------------------------------------------------------------------

ExperimentSpec named_experiment(const std::string& name, const ScenarioInstance& base) {
  ExperimentSpec spec;
  spec.name = name;
  spec.base = base;
  auto ladder = [](double lo, double hi, double step) {
    std::vector<double> v;
    for (double x = lo; x <= hi + 1e-9; x += step) v.push_back(x);
    return v;
  };
  if (name == "single") {
    spec.algorithms = {Algorithm::Centralized, Algorithm::Distributed};
  } else if (name == "psat_sweep") {
    spec.sweep_var = SweepVar::PSat;
    spec.sweep_values = ladder(10.0, 50.0, 10.0);
    spec.algorithms = {Algorithm::Centralized, Algorithm::CaEra, Algorithm::CaOpw,
                       Algorithm::CaOtw, Algorithm::NoSharing};
  } else if (name == "pst_sweep") {
    spec.sweep_var = SweepVar::PSt;
    spec.sweep_values = {31, 34, 37, 40, 43, 46, 49};
    spec.algorithms = {Algorithm::Centralized, Algorithm::CaEra, Algorithm::CaOpw,
                       Algorithm::CaOtw};
  } else if (name == "delta_g") {
    spec.base.sharing.delta_s = 1.0;
    spec.sweep_var = SweepVar::DeltaG;
    spec.sweep_values = ladder(0.0, 1.0, 0.1);
    spec.algorithms = {Algorithm::Centralized};
  } else if (name == "delta_s") {
    spec.base.sharing.delta_g = 1.0;
    spec.sweep_var = SweepVar::DeltaS;
    spec.sweep_values = ladder(0.0, 1.0, 0.1);
    spec.algorithms = {Algorithm::Centralized};
  } else {
    throw std::invalid_argument("unknown experiment preset: " + name);
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path, const ScenarioInstance& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment spec: " + path);
  json j = json::parse(in);
  ExperimentSpec spec;
  spec.base = base;
  spec.name = j.value("name", std::string("custom"));
  if (j.contains("algorithms")) {
    spec.algorithms.clear();
    for (const auto& a : j["algorithms"]) spec.algorithms.push_back(parse_algorithm(a));
  }
  if (j.contains("sweep_var")) spec.sweep_var = parse_sweep_var(j["sweep_var"]);
  if (j.contains("sweep_values"))
    spec.sweep_values = j["sweep_values"].get<std::vector<double>>();
  if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  spec.mbc_enabled = j.value("mbc_enabled", true);
  validate_spec(spec);
  return spec;
}

}  // namespace sagin
