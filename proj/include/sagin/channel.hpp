#pragma once
#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "sagin/rng.hpp"
#include "sagin/scenario.hpp"

namespace sagin {

// ---- large-scale models (all return linear power gains / watts) ----

// Terrestrial path gain, 32.4 + 20 log10(f_GHz) + 30 log10(d_km) dB.
double ground_path_loss_db(double d_km, double f_ghz);
double ground_path_gain(double d_km, double f_ghz);

// Free-space satellite path gain, 92.44 + 20 log10(f_GHz) + 20 log10(d_km) dB.
double sat_path_loss_db(double d_km, double f_ghz);
double sat_path_gain(double d_km, double f_ghz);

// Bessel J1 (ascending series for |x| <= 12, large-argument asymptotic beyond).
double bessel_j1(double x);
// Aperture beam gain g0 * 4 |J1(ka sin z)/(ka sin z)|^2; exactly g0 at boresight.
double beam_gain(double zeta_rad, double g_t0_linear, double kappa_a);

// Thermal noise over a band from a PSD in dBm/Hz.
double noise_power_ground(double psd_dbm_hz, double bandwidth_hz);
// Receiver noise k_B (T_ant + T_amb (10^{NF/10} - 1)) B.
double noise_power_sat(double t_ant_k, double t_amb_k, double nf_db, double bandwidth_hz);

// ---- small-scale fading ----

// i.i.d. CN(0,1) entries.
Eigen::VectorXcd sample_rayleigh(int n, RngStream& rng);

// Shadowed-Rician unit sample: A e^{j phi} + Z with A^2 ~ Gamma(m, omega/m), Z ~ CN(0, 2b).
std::complex<double> sample_sr(const SRParams& p, RngStream& rng);

// Density of the squared envelope s = |f|^2 under the shadowed-Rician model
// (confluent hypergeometric series truncated at relative term 1e-12).
double sr_pdf(double s, const SRParams& p);

// Kummer's 1F1(a, 1, x) by ascending series.
double hyp1f1_b1(double a, double x);

// ---- one fading draw over the whole scenario ----

struct ChannelRealization {
  int n_bands = 2;
  int n_nodes = 0;
  int n_users = 0;
  int n_ant = 0;
  // h[(band*n_nodes + node)*n_users + user]: ground channel row vector incl. path gain
  std::vector<Eigen::VectorXcd> h;
  // f[st]: satellite->ST scalar channel incl. path gain
  std::vector<std::complex<double>> f;
  // gt(beam, st): transmit beam gain toward each ST
  Eigen::MatrixXd gt;
  double sigma2_ground = 0.0;  // per C band, watts
  double sigma2_sat = 0.0;     // over the Ka band, watts
  double g_r = 0.0;            // ST receive gain, linear

  const Eigen::VectorXcd& hv(int band, int node, int user) const {
    return h[(static_cast<std::size_t>(band) * n_nodes + node) * n_users + user];
  }
  Eigen::VectorXcd& hv(int band, int node, int user) {
    return h[(static_cast<std::size_t>(band) * n_nodes + node) * n_users + user];
  }
};

ChannelRealization draw_channels(const ScenarioInstance& s, RngStream& rng);

// channel * beamformer without conjugation (row-vector convention)
inline std::complex<double> chan_dot(const Eigen::VectorXcd& h, const Eigen::VectorXcd& w) {
  return (h.array() * w.array()).sum();
}

}  // namespace sagin
