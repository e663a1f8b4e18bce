#include "sagin/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sagin {

using nlohmann::json;

namespace {

double get_num(const json& j, const std::string& scope, const char* key, double dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number()) throw ValidationError(scope + "." + key, "must be a number");
  return j[key].get<double>();
}

int get_int(const json& j, const std::string& scope, const char* key, int dflt) {
  if (!j.contains(key)) return dflt;
  if (!j[key].is_number_integer()) throw ValidationError(scope + "." + key, "must be an integer");
  return j[key].get<int>();
}

double dbm_to_w(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

void check(bool ok, const char* field, const char* msg) {
  if (!ok) throw ValidationError(field, msg);
}

}  // namespace

ScenarioInstance config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ValidationError("config", std::string("invalid JSON: ") + e.what());
  }
  ScenarioInstance s;
  if (j.contains("network")) {
    const auto& n = j["network"];
    s.network.n_bs = get_int(n, "network", "n_bs", s.network.n_bs);
    s.network.n_st = get_int(n, "network", "n_st", s.network.n_st);
    s.network.n_users_gno = get_int(n, "network", "n_users_gno", s.network.n_users_gno);
    s.network.n_users_sno = get_int(n, "network", "n_users_sno", s.network.n_users_sno);
    s.network.n_antennas = get_int(n, "network", "n_antennas", s.network.n_antennas);
    if (n.contains("bs_power_dbm")) s.network.bs_power_w = dbm_to_w(get_num(n, "network", "bs_power_dbm", 52.0));
    if (n.contains("st_power_dbm")) s.network.st_power_w = dbm_to_w(get_num(n, "network", "st_power_dbm", 49.0));
    if (n.contains("bs_power_w")) s.network.bs_power_w = get_num(n, "network", "bs_power_w", s.network.bs_power_w);
    if (n.contains("st_power_w")) s.network.st_power_w = get_num(n, "network", "st_power_w", s.network.st_power_w);
    s.network.region_km = get_num(n, "network", "region_km", s.network.region_km);
    s.network.min_pair_distance_km = get_num(n, "network", "min_pair_distance_km", s.network.min_pair_distance_km);
  }
  if (j.contains("satellite")) {
    const auto& t = j["satellite"];
    s.satellite.altitude_km = get_num(t, "satellite", "altitude_km", s.satellite.altitude_km);
    s.satellite.n_beams = get_int(t, "satellite", "n_beams", s.satellite.n_beams);
    s.satellite.beam_radius_km = get_num(t, "satellite", "beam_radius_km", s.satellite.beam_radius_km);
    s.satellite.beam_ring_km = get_num(t, "satellite", "beam_ring_km", s.satellite.beam_ring_km);
    s.satellite.f_ka_ghz = get_num(t, "satellite", "f_ka_ghz", s.satellite.f_ka_ghz);
    s.satellite.b_ka_hz = get_num(t, "satellite", "b_ka_hz", s.satellite.b_ka_hz);
    s.satellite.max_power_w = get_num(t, "satellite", "sat_max_power_w", s.satellite.max_power_w);
    s.satellite.g_t0_dbi = get_num(t, "satellite", "g_t0_dbi", s.satellite.g_t0_dbi);
    s.satellite.g_r_dbi = get_num(t, "satellite", "g_r_dbi", s.satellite.g_r_dbi);
    s.satellite.dish_radius_m = get_num(t, "satellite", "dish_radius_m", s.satellite.dish_radius_m);
    s.satellite.antenna_temp_k = get_num(t, "satellite", "antenna_temp_k", s.satellite.antenna_temp_k);
    s.satellite.ambient_temp_k = get_num(t, "satellite", "ambient_temp_k", s.satellite.ambient_temp_k);
    s.satellite.noise_figure_db = get_num(t, "satellite", "noise_figure_db", s.satellite.noise_figure_db);
    s.satellite.fading.b = get_num(t, "satellite", "sr_b", s.satellite.fading.b);
    s.satellite.fading.m = get_num(t, "satellite", "sr_m", s.satellite.fading.m);
    s.satellite.fading.omega = get_num(t, "satellite", "sr_omega", s.satellite.fading.omega);
  }
  if (j.contains("bands")) {
    const auto& b = j["bands"];
    s.bands.b_c_hz = get_num(b, "bands", "b_c_hz", s.bands.b_c_hz);
    s.bands.f_c_ghz = get_num(b, "bands", "f_c_ghz", s.bands.f_c_ghz);
    s.bands.noise_psd_dbm_hz = get_num(b, "bands", "noise_psd_dbm_hz", s.bands.noise_psd_dbm_hz);
  }
  if (j.contains("sharing")) {
    const auto& h = j["sharing"];
    s.sharing.delta_g = get_num(h, "sharing", "delta_g", s.sharing.delta_g);
    s.sharing.delta_s = get_num(h, "sharing", "delta_s", s.sharing.delta_s);
  }
  s.weights = Eigen::MatrixXd::Ones(s.n_nodes(), s.n_users());
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    if (w.contains("uniform")) {
      s.weights.setConstant(get_num(w, "weights", "uniform", 1.0));
    }
    if (w.contains("matrix")) {
      const auto& m = w["matrix"];
      if (!m.is_array() || static_cast<int>(m.size()) != s.n_nodes())
        throw ValidationError("weights.matrix", "must be an n_nodes x n_users array");
      for (int i = 0; i < s.n_nodes(); ++i) {
        if (!m[i].is_array() || static_cast<int>(m[i].size()) != s.n_users())
          throw ValidationError("weights.matrix", "must be an n_nodes x n_users array");
        for (int k = 0; k < s.n_users(); ++k) s.weights(i, k) = m[i][k].get<double>();
      }
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) throw ValidationError("seed", "must be an integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  validate(s);
  return s;
}

ScenarioInstance load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

void validate(const ScenarioInstance& s) {
  check(s.network.n_bs >= 1, "network.n_bs", "must be >= 1");
  check(s.network.n_st >= 1, "network.n_st", "must be >= 1");
  check(s.network.n_users_gno >= 1, "network.n_users_gno", "must be >= 1");
  check(s.network.n_users_sno >= 1, "network.n_users_sno", "must be >= 1");
  check(s.network.n_antennas >= 1, "network.n_antennas", "must be >= 1");
  check(s.network.bs_power_w > 0, "network.bs_power_w", "must be > 0");
  check(s.network.st_power_w > 0, "network.st_power_w", "must be > 0");
  check(s.network.region_km > 0, "network.region_km", "must be > 0");
  check(s.satellite.altitude_km > 0, "satellite.altitude_km", "must be > 0");
  check(s.satellite.n_beams >= 1, "satellite.n_beams", "must be >= 1");
  check(s.satellite.beam_radius_km > 0, "satellite.beam_radius_km", "must be > 0");
  check(s.satellite.b_ka_hz > 0, "satellite.b_ka_hz", "must be > 0");
  check(s.satellite.f_ka_ghz > 0, "satellite.f_ka_ghz", "must be > 0");
  check(s.satellite.max_power_w > 0, "satellite.sat_max_power_w", "must be > 0");
  check(s.satellite.dish_radius_m > 0, "satellite.dish_radius_m", "must be > 0");
  check(s.satellite.fading.b > 0, "satellite.sr_b", "must be > 0");
  check(s.satellite.fading.m > 0, "satellite.sr_m", "must be > 0");
  check(s.satellite.fading.omega > 0, "satellite.sr_omega", "must be > 0");
  check(s.bands.b_c_hz > 0, "bands.b_c_hz", "must be > 0");
  check(s.bands.f_c_ghz > 0, "bands.f_c_ghz", "must be > 0");
  check(s.sharing.delta_g >= 0.0 && s.sharing.delta_g <= 1.0, "sharing.delta_g", "must be in [0, 1]");
  check(s.sharing.delta_s >= 0.0 && s.sharing.delta_s <= 1.0, "sharing.delta_s", "must be in [0, 1]");
  check((s.weights.array() >= 0.0).all(), "weights", "must be nonnegative");
  check(s.weights.size() == 0 ||
            (s.weights.rows() == s.n_nodes() && s.weights.cols() == s.n_users()),
        "weights", "must be an n_nodes x n_users matrix");
  check(s.network.n_st >= s.satellite.n_beams, "network.n_st", "need at least one ST per beam");
}

double off_boresight_angle(const Vec2& nadir, double altitude_km, const Vec2& beam_center,
                           const Vec2& ground) {
  if (!(altitude_km > 0)) throw std::invalid_argument("off_boresight_angle: altitude must be > 0");
  Eigen::Vector3d v1(beam_center.x() - nadir.x(), beam_center.y() - nadir.y(), -altitude_km);
  Eigen::Vector3d v2(ground.x() - nadir.x(), ground.y() - nadir.y(), -altitude_km);
  const double cross = v1.cross(v2).norm();
  const double dot = v1.dot(v2);
  return std::atan2(cross, dot);
}

double slant_range(const Vec2& nadir, double altitude_km, const Vec2& ground) {
  if (!(altitude_km > 0)) throw std::invalid_argument("slant_range: altitude must be > 0");
  const double r = (ground - nadir).norm();
  return std::sqrt(altitude_km * altitude_km + r * r);
}

ScenarioInstance generate_scenario(const ScenarioInstance& cfg, std::uint64_t seed) {
  validate(cfg);
  ScenarioInstance s = cfg;
  if (s.weights.size() == 0) s.weights = Eigen::MatrixXd::Ones(s.n_nodes(), s.n_users());
  s.seed = seed;
  RngStream rng(seed, /*stream=*/0x5ce9a101ULL);
  const double L = s.network.region_km;
  s.nadir = Vec2(L / 2.0, L / 2.0);

  // BSs on region corners, then evenly along the perimeter for larger counts
  const std::array<Vec2, 4> corners = {Vec2(0, 0), Vec2(L, L), Vec2(0, L), Vec2(L, 0)};
  s.bs_pos.clear();
  for (int i = 0; i < s.network.n_bs; ++i) {
    if (i < 4) {
      s.bs_pos.push_back(corners[i]);
    } else {
      const double u = static_cast<double>(i - 4 + 1) / (s.network.n_bs - 4 + 1);
      s.bs_pos.push_back(Vec2(u * L, 0.0));
    }
  }

  // beam centers: single beam at the nadir, otherwise a ring around it
  s.beam_centers.clear();
  if (s.satellite.n_beams == 1) {
    s.beam_centers.push_back(s.nadir);
  } else {
    for (int l = 0; l < s.satellite.n_beams; ++l) {
      const double a = 2.0 * M_PI * l / s.satellite.n_beams;
      s.beam_centers.push_back(s.nadir + s.satellite.beam_ring_km * Vec2(std::cos(a), std::sin(a)));
    }
  }

  auto in_some_beam = [&](const Vec2& p) {
    for (const auto& c : s.beam_centers)
      if ((p - c).norm() <= s.satellite.beam_radius_km) return true;
    return false;
  };
  auto nearest_beam = [&](const Vec2& p) {
    int best = 0;
    double bd = (p - s.beam_centers[0]).norm();
    for (int l = 1; l < static_cast<int>(s.beam_centers.size()); ++l) {
      const double d = (p - s.beam_centers[l]).norm();
      if (d < bd - 1e-12) {
        bd = d;
        best = l;
      }
    }
    return best;
  };

  // STs: round-robin beam assignment, drawn uniformly inside the assigned disk,
  // rejected until the assigned beam is also the nearest one
  s.st_pos.clear();
  s.st_beam.clear();
  for (int i = 0; i < s.network.n_st; ++i) {
    const int beam = i % s.satellite.n_beams;
    for (;;) {
      const double r = s.satellite.beam_radius_km * std::sqrt(rng.uniform());
      const double a = 2.0 * M_PI * rng.uniform();
      const Vec2 p = s.beam_centers[beam] + r * Vec2(std::cos(a), std::sin(a));
      if (nearest_beam(p) != beam) continue;
      bool clear_of_nodes = true;
      for (const auto& q : s.st_pos)
        if ((p - q).norm() < s.network.min_pair_distance_km) clear_of_nodes = false;
      if (!clear_of_nodes) continue;
      s.st_pos.push_back(p);
      s.st_beam.push_back(beam);
      break;
    }
  }

  // users: uniform over the union of beam disks (rejection from the bounding box)
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& c : s.beam_centers) {
    x0 = std::min(x0, c.x() - s.satellite.beam_radius_km);
    x1 = std::max(x1, c.x() + s.satellite.beam_radius_km);
    y0 = std::min(y0, c.y() - s.satellite.beam_radius_km);
    y1 = std::max(y1, c.y() + s.satellite.beam_radius_km);
  }
  s.user_pos.clear();
  for (int k = 0; k < s.n_users(); ++k) {
    for (;;) {
      const Vec2 p(x0 + (x1 - x0) * rng.uniform(), y0 + (y1 - y0) * rng.uniform());
      if (!in_some_beam(p)) continue;
      bool clear_of_nodes = true;
      for (int i = 0; i < s.n_nodes() && clear_of_nodes; ++i)
        if ((p - s.node_pos(i)).norm() < s.network.min_pair_distance_km) clear_of_nodes = false;
      if (!clear_of_nodes) continue;
      s.user_pos.push_back(p);
      break;
    }
  }

  s.generated = true;
  return s;
}

}  // namespace sagin
