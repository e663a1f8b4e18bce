#pragma once
#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "sagin/rng.hpp"

namespace sagin {

struct ValidationError : std::runtime_error {
  std::string field;
  ValidationError(std::string f, const std::string& msg)
      : std::runtime_error(f + ": " + msg), field(std::move(f)) {}
};

using Vec2 = Eigen::Vector2d;

// operators / bands share the index convention: 0 = ground operator, 1 = satellite operator
constexpr int kOpG = 0;
constexpr int kOpS = 1;

struct SRParams {
  double b = 0.126;      // half average scatter power
  double m = 10.1;       // Nakagami parameter of the LOS amplitude
  double omega = 0.835;  // average LOS power
};

struct NetworkConfig {
  int n_bs = 2;
  int n_st = 4;
  int n_users_gno = 3;
  int n_users_sno = 7;
  int n_antennas = 4;
  double bs_power_w = 158.48931924611142;  // 52 dBm
  double st_power_w = 79.432823472428197;  // 49 dBm
  double region_km = 40.0;
  double min_pair_distance_km = 0.05;
};

struct SatelliteConfig {
  double altitude_km = 600.0;
  int n_beams = 2;
  double beam_radius_km = 10.0;
  double beam_ring_km = 12.0;  // distance of beam centers from the nadir
  double f_ka_ghz = 20.0;
  double b_ka_hz = 4.0e8;
  double max_power_w = 50.0;
  double g_t0_dbi = 40.0;
  double g_r_dbi = 10.0;
  double dish_radius_m = 0.3;  // 0.6 m aperture
  double antenna_temp_k = 150.0;
  double ambient_temp_k = 290.0;
  double noise_figure_db = 1.2;
  SRParams fading;
};

struct BandConfig {
  double b_c_hz = 1.0e8;
  double f_c_ghz = 3.0;
  double noise_psd_dbm_hz = -174.0;
};

struct SharingConfig {
  double delta_g = 0.6;
  double delta_s = 0.6;
};

struct ScenarioInstance {
  NetworkConfig network;
  SatelliteConfig satellite;
  BandConfig bands;
  SharingConfig sharing;
  Eigen::MatrixXd weights;  // n_nodes x n_users, defaults to all-ones
  std::uint64_t seed = 1;

  // geometry, filled by generate_scenario
  bool generated = false;
  std::vector<Vec2> bs_pos;
  std::vector<Vec2> st_pos;
  std::vector<Vec2> user_pos;
  std::vector<Vec2> beam_centers;
  std::vector<int> st_beam;  // serving beam per ST
  Vec2 nadir = Vec2::Zero();

  int n_nodes() const { return network.n_bs + network.n_st; }
  int n_users() const { return network.n_users_gno + network.n_users_sno; }
  bool node_is_st(int i) const { return i >= network.n_bs; }
  int st_index(int i) const { return i - network.n_bs; }  // node id -> ST id
  int node_operator(int i) const { return node_is_st(i) ? kOpS : kOpG; }
  int user_operator(int k) const { return k < network.n_users_gno ? kOpG : kOpS; }
  double node_power_w(int i) const { return node_is_st(i) ? network.st_power_w : network.bs_power_w; }
  Vec2 node_pos(int i) const { return node_is_st(i) ? st_pos[st_index(i)] : bs_pos[i]; }
  double delta(int op) const { return op == kOpG ? sharing.delta_g : sharing.delta_s; }
};

// Parse + validate a JSON config (throws ValidationError naming the offending field).
ScenarioInstance load_config(const std::string& path);
ScenarioInstance config_from_json_text(const std::string& text);
void validate(const ScenarioInstance& s);

// Draw node/user geometry deterministically from the seed.
ScenarioInstance generate_scenario(const ScenarioInstance& cfg, std::uint64_t seed);

// Angle at the satellite between the beam-center direction and the ground-point direction.
double off_boresight_angle(const Vec2& nadir, double altitude_km, const Vec2& beam_center,
                           const Vec2& ground);
// Satellite-to-ground distance in km.
double slant_range(const Vec2& nadir, double altitude_km, const Vec2& ground);

}  // namespace sagin
