#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <sagin/metrics.hpp>
#include <sagin/scenario.hpp>

#include "test_util.hpp"

using namespace sagin;

TEST_CASE("index conventions on the desk-scale instance") {
  const ScenarioInstance s = generate_scenario(ScenarioInstance{}, 1);
  CHECK(s.n_nodes() == 6);
  CHECK(s.n_users() == 10);
  CHECK_FALSE(s.node_is_st(0));
  CHECK_FALSE(s.node_is_st(1));
  for (int i = 2; i < 6; ++i) {
    CHECK(s.node_is_st(i));
    CHECK(s.st_index(i) == i - 2);
    CHECK(s.node_operator(i) == kOpS);
  }
  CHECK(s.node_operator(0) == kOpG);
  for (int k = 0; k < 3; ++k) CHECK(s.user_operator(k) == kOpG);
  for (int k = 3; k < 10; ++k) CHECK(s.user_operator(k) == kOpS);
  // node powers from 52 / 49 dBm
  CHECK(s.node_power_w(0) == doctest::Approx(std::pow(10.0, 2.2)).epsilon(1e-12));
  CHECK(s.node_power_w(2) == doctest::Approx(std::pow(10.0, 1.9)).epsilon(1e-12));
  CHECK(s.satellite.max_power_w == 50.0);
  CHECK(s.bands.b_c_hz == 1e8);
  CHECK(s.satellite.b_ka_hz == 4e8);
}

TEST_CASE("generation is deterministic in the seed") {
  const ScenarioInstance a = generate_scenario(ScenarioInstance{}, 3);
  const ScenarioInstance b = generate_scenario(ScenarioInstance{}, 3);
  const ScenarioInstance d = generate_scenario(ScenarioInstance{}, 4);
  REQUIRE(a.user_pos.size() == b.user_pos.size());
  double same = 0.0, diff = 0.0;
  for (std::size_t k = 0; k < a.user_pos.size(); ++k) {
    same = std::max(same, (a.user_pos[k] - b.user_pos[k]).norm());
    diff += (a.user_pos[k] - d.user_pos[k]).norm();
  }
  CHECK(same == 0.0);
  CHECK(diff > 0.0);
  CHECK(a.generated);
  CHECK(a.weights.rows() == 6);
  CHECK(a.weights.cols() == 10);
  CHECK(a.weights.minCoeff() == 1.0);
  CHECK(a.weights.maxCoeff() == 1.0);
}

TEST_CASE("geometry respects the layout rules") {
  const ScenarioInstance s = generate_scenario(ScenarioInstance{}, 7);
  const double L = s.network.region_km;
  CHECK(s.nadir.x() == doctest::Approx(L / 2));
  CHECK(s.nadir.y() == doctest::Approx(L / 2));
  REQUIRE(static_cast<int>(s.beam_centers.size()) == s.satellite.n_beams);
  REQUIRE(static_cast<int>(s.st_beam.size()) == s.network.n_st);

  for (int t = 0; t < s.network.n_st; ++t) {
    const int beam = s.st_beam[t];
    CHECK(beam >= 0);
    CHECK(beam < s.satellite.n_beams);
    // ST is inside its assigned beam disk and that beam is the nearest
    CHECK((s.st_pos[t] - s.beam_centers[beam]).norm() <=
          s.satellite.beam_radius_km + 1e-12);
    for (int l = 0; l < s.satellite.n_beams; ++l)
      CHECK((s.st_pos[t] - s.beam_centers[beam]).norm() <=
            (s.st_pos[t] - s.beam_centers[l]).norm() + 1e-9);
  }
  for (int k = 0; k < s.n_users(); ++k) {
    bool covered = false;
    for (const auto& cb : s.beam_centers)
      covered = covered || (s.user_pos[k] - cb).norm() <= s.satellite.beam_radius_km;
    CHECK(covered);
    for (int i = 0; i < s.n_nodes(); ++i)
      CHECK((s.user_pos[k] - s.node_pos(i)).norm() >= s.network.min_pair_distance_km - 1e-12);
  }
}

TEST_CASE("slant range and boresight angle") {
  CHECK(slant_range(Vec2::Zero(), 600.0, Vec2(10.0, 0.0)) ==
        doctest::Approx(600.083327547100).epsilon(1e-12));
  CHECK(slant_range(Vec2::Zero(), 600.0, Vec2::Zero()) == doctest::Approx(600.0));
  CHECK(off_boresight_angle(Vec2::Zero(), 600.0, Vec2(5.0, 5.0), Vec2(5.0, 5.0)) ==
        doctest::Approx(0.0));
  // symmetric points, small angle ~ arctan split
  const double a = off_boresight_angle(Vec2::Zero(), 600.0, Vec2(10.0, 0.0), Vec2(-10.0, 0.0));
  CHECK(a == doctest::Approx(2.0 * std::atan(10.0 / 600.0)).epsilon(1e-9));
  CHECK_THROWS(slant_range(Vec2::Zero(), 0.0, Vec2::Zero()));
}

TEST_CASE("revenue share coefficients") {
  ScenarioInstance cfg;  // delta_g = delta_s = 0.6
  const ScenarioInstance s = generate_scenario(cfg, 1);
  const int bs = 0, st = 2, ug = 0, us = 3;
  // own node, own user
  CHECK(alpha_coefficient(s, kOpG, bs, ug) == 1.0);
  CHECK(alpha_coefficient(s, kOpS, st, us) == 1.0);
  // hosted users split by the serving operator's delta
  CHECK(alpha_coefficient(s, kOpG, bs, us) == doctest::Approx(0.6));
  CHECK(alpha_coefficient(s, kOpS, bs, us) == doctest::Approx(0.4));
  CHECK(alpha_coefficient(s, kOpS, st, ug) == doctest::Approx(0.6));
  CHECK(alpha_coefficient(s, kOpG, st, ug) == doctest::Approx(0.4));
  // an operator that is neither server nor subscriber earns nothing
  CHECK(alpha_coefficient(s, kOpS, bs, ug) == 0.0);
  CHECK(alpha_coefficient(s, kOpG, st, us) == 0.0);
  // shares always sum to one
  for (int i = 0; i < s.n_nodes(); ++i)
    for (int k = 0; k < s.n_users(); ++k)
      CHECK(alpha_coefficient(s, 0, i, k) + alpha_coefficient(s, 1, i, k) ==
            doctest::Approx(1.0));
}

TEST_CASE("config text parsing and validation") {
  const ScenarioInstance s = config_from_json_text(R"({
    "network": {"n_bs": 1, "n_st": 2, "n_users_gno": 2, "n_users_sno": 2,
                 "st_power_dbm": 40.0},
    "satellite": {"n_beams": 2, "sat_max_power_w": 20.0},
    "sharing": {"delta_g": 0.3},
    "seed": 9
  })");
  CHECK(s.network.n_bs == 1);
  CHECK(s.network.st_power_w == doctest::Approx(10.0).epsilon(1e-12));  // 40 dBm
  CHECK(s.satellite.max_power_w == 20.0);
  CHECK(s.sharing.delta_g == 0.3);
  CHECK(s.sharing.delta_s == 0.6);
  CHECK(s.seed == 9);

  CHECK_THROWS_AS(config_from_json_text("{"), ValidationError);
  CHECK_THROWS_AS(config_from_json_text(R"({"network": {"n_bs": 0}})"), ValidationError);
  CHECK_THROWS_AS(config_from_json_text(R"({"sharing": {"delta_s": 1.5}})"), ValidationError);
  CHECK_THROWS_AS(config_from_json_text(R"({"network": {"n_st": 1},
                                             "satellite": {"n_beams": 2}})"),
                  ValidationError);
}

TEST_CASE("micro instance generates cleanly") {
  const auto [s, c] = micro_instance(2);
  CHECK(s.n_nodes() == 2);
  CHECK(s.n_users() == 2);
  CHECK(s.satellite.n_beams == 1);
  CHECK(s.beam_centers[0] == s.nadir);
  CHECK(s.weights.rows() == 2);
  CHECK(c.hv(1, 1, 1).size() == 2);
}
