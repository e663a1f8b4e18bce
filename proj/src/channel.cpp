#include "sagin/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace sagin {

double ground_path_loss_db(double d_km, double f_ghz) {
  if (!(d_km > 0)) throw std::invalid_argument("ground_path_loss: d_km must be > 0");
  if (!(f_ghz > 0)) throw std::invalid_argument("ground_path_loss: f_ghz must be > 0");
  return 32.4 + 20.0 * std::log10(f_ghz) + 30.0 * std::log10(d_km);
}

double ground_path_gain(double d_km, double f_ghz) {
  return std::pow(10.0, -ground_path_loss_db(d_km, f_ghz) / 10.0);
}

double sat_path_loss_db(double d_km, double f_ghz) {
  if (!(d_km > 0)) throw std::invalid_argument("sat_path_loss: d_km must be > 0");
  if (!(f_ghz > 0)) throw std::invalid_argument("sat_path_loss: f_ghz must be > 0");
  return 92.44 + 20.0 * std::log10(f_ghz) + 20.0 * std::log10(d_km);
}

double sat_path_gain(double d_km, double f_ghz) {
  return std::pow(10.0, -sat_path_loss_db(d_km, f_ghz) / 10.0);
}

double bessel_j1(double x) {
  const double ax = std::fabs(x);
  double result;
  if (ax <= 12.0) {
    // ascending series sum_j (-1)^j (x/2)^{2j+1} / (j! (j+1)!)
    const double q = 0.5 * ax;
    const double q2 = q * q;
    double term = q;  // j = 0
    double sum = term;
    for (int j = 1; j <= 64; ++j) {
      term *= -q2 / (static_cast<double>(j) * (j + 1));
      sum += term;
      if (std::fabs(term) < 1e-17 * std::fabs(sum) + 1e-300) break;
    }
    result = sum;
  } else {
    // Hankel asymptotic expansion with a_j(1) = a_{j-1} (4 - (2j-1)^2) / (8j)
    const double inv = 1.0 / ax;
    double p = 1.0, q = 0.0;
    double a = 1.0, xpow = 1.0;
    for (int j = 1; j <= 10; ++j) {
      const double f = 2.0 * j - 1.0;
      a *= (4.0 - f * f) / (8.0 * j);
      xpow *= inv;
      const double sgn = ((j / 2) % 2 == 0) ? 1.0 : -1.0;
      if (j % 2 == 0)
        p += sgn * a * xpow;
      else
        q += sgn * a * xpow;
    }
    const double chi = ax - 2.356194490192344928846982537460;  // x - 3 pi / 4
    result = std::sqrt(0.63661977236758134307553505349006 * inv) *
             (p * std::cos(chi) - q * std::sin(chi));
  }
  return x < 0 ? -result : result;
}

double beam_gain(double zeta_rad, double g_t0_linear, double kappa_a) {
  if (!(g_t0_linear > 0)) throw std::invalid_argument("beam_gain: g_t0 must be > 0");
  if (!(kappa_a > 0)) throw std::invalid_argument("beam_gain: kappa_a must be > 0");
  const double x = kappa_a * std::sin(std::fabs(zeta_rad));
  if (x < 1e-4) {
    // J1(x)/x = 1/2 - x^2/16 + x^4/384 - ...
    const double j1_over_x = 0.5 - x * x / 16.0 + x * x * x * x / 384.0;
    return g_t0_linear * 4.0 * j1_over_x * j1_over_x;
  }
  const double r = bessel_j1(x) / x;
  return g_t0_linear * 4.0 * r * r;
}

double noise_power_ground(double psd_dbm_hz, double bandwidth_hz) {
  if (!(bandwidth_hz > 0)) throw std::invalid_argument("noise_power_ground: bandwidth must be > 0");
  return std::pow(10.0, psd_dbm_hz / 10.0) * 1e-3 * bandwidth_hz;
}

double noise_power_sat(double t_ant_k, double t_amb_k, double nf_db, double bandwidth_hz) {
  if (!(bandwidth_hz > 0)) throw std::invalid_argument("noise_power_sat: bandwidth must be > 0");
  constexpr double kb = 1.38e-23;
  const double t_sys = t_ant_k + t_amb_k * (std::pow(10.0, nf_db / 10.0) - 1.0);
  return kb * t_sys * bandwidth_hz;
}

Eigen::VectorXcd sample_rayleigh(int n, RngStream& rng) {
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.cgauss();
  return v;
}

std::complex<double> sample_sr(const SRParams& p, RngStream& rng) {
  const double a2 = rng.gamma(p.m, p.omega / p.m);
  const double phi = 2.0 * M_PI * rng.uniform();
  const std::complex<double> los = std::sqrt(a2) * std::complex<double>(std::cos(phi), std::sin(phi));
  const std::complex<double> scatter = std::sqrt(2.0 * p.b) * rng.cgauss();
  return los + scatter;
}

double hyp1f1_b1(double a, double x) {
  // sum_j (a)_j x^j / ((1)_j j!) = sum_j (a)_j x^j / (j!)^2
  double term = 1.0;
  double sum = 1.0;
  for (int j = 0; j < 10000; ++j) {
    term *= (a + j) * x / (static_cast<double>(j + 1) * (j + 1));
    sum += term;
    if (std::fabs(term) < 1e-12 * std::fabs(sum)) break;
  }
  return sum;
}

double sr_pdf(double s, const SRParams& p) {
  if (s < 0) return 0.0;
  const double two_b = 2.0 * p.b;
  const double denom = two_b * p.m + p.omega;
  const double pref = (1.0 / two_b) * std::pow(two_b * p.m / denom, p.m) * std::exp(-s / two_b);
  return pref * hyp1f1_b1(p.m, p.omega * s / (two_b * denom));
}

ChannelRealization draw_channels(const ScenarioInstance& s, RngStream& rng) {
  if (!s.generated) throw std::invalid_argument("draw_channels: scenario has no geometry");
  ChannelRealization c;
  c.n_bands = 2;
  c.n_nodes = s.n_nodes();
  c.n_users = s.n_users();
  c.n_ant = s.network.n_antennas;
  c.h.resize(static_cast<std::size_t>(c.n_bands) * c.n_nodes * c.n_users);
  c.sigma2_ground = noise_power_ground(s.bands.noise_psd_dbm_hz, s.bands.b_c_hz);
  c.sigma2_sat = noise_power_sat(s.satellite.antenna_temp_k, s.satellite.ambient_temp_k,
                                 s.satellite.noise_figure_db, s.satellite.b_ka_hz);
  c.g_r = std::pow(10.0, s.satellite.g_r_dbi / 10.0);

  for (int n = 0; n < c.n_bands; ++n)
    for (int i = 0; i < c.n_nodes; ++i)
      for (int k = 0; k < c.n_users; ++k) {
        const double d_km = std::max((s.node_pos(i) - s.user_pos[k]).norm(),
                                     s.network.min_pair_distance_km);
        const double g = ground_path_gain(d_km, s.bands.f_c_ghz);
        c.hv(n, i, k) = std::sqrt(g) * sample_rayleigh(c.n_ant, rng);
      }

  const double lambda_m = 2.99792458e8 / (s.satellite.f_ka_ghz * 1e9);
  const double kappa_a = 2.0 * M_PI / lambda_m * s.satellite.dish_radius_m;
  const double g_t0 = std::pow(10.0, s.satellite.g_t0_dbi / 10.0);
  c.f.resize(s.network.n_st);
  c.gt.resize(s.satellite.n_beams, s.network.n_st);
  for (int st = 0; st < s.network.n_st; ++st) {
    const double d = slant_range(s.nadir, s.satellite.altitude_km, s.st_pos[st]);
    const double g = sat_path_gain(d, s.satellite.f_ka_ghz);
    c.f[st] = std::sqrt(g) * sample_sr(s.satellite.fading, rng);
    for (int l = 0; l < s.satellite.n_beams; ++l) {
      const double z = off_boresight_angle(s.nadir, s.satellite.altitude_km,
                                           s.beam_centers[l], s.st_pos[st]);
      c.gt(l, st) = beam_gain(z, g_t0, kappa_a);
    }
  }
  return c;
}

}  // namespace sagin
