#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "leoris/geometry.hpp"

// Signal-level quantities behind the observation model: steering vectors,
// noise-free received samples, effective NLOS-plus-thermal noise variance,
// and the radio environment (path loss, shadow fading, LOS probability).

namespace leoris {

using cd = std::complex<double>;

struct ArrayConfig {
  int rows = 1;
  int cols = 1;
  double spacing_m = 0.005;

  int size() const { return rows * cols; }
};

struct FrameConfig {
  int subcarriers = 128;          // K
  int transmissions = 8;          // G
  double symbol_duration_s = 0;   // T; defaults to 1/subcarrier spacing
  double bandwidth_hz = 240e6;    // B
  double update_interval_s = 1.0; // T_U
  double tx_power_w = 100.0;      // P_s
  double noise_power_w = 9.6e-13; // sigma^2

  double subcarrier_spacing() const { return bandwidth_hz / subcarriers; }
  double symbol_duration() const {
    return symbol_duration_s > 0 ? symbol_duration_s
                                 : 1.0 / subcarrier_spacing();
  }
};

// Atmospheric absorption lookup over (frequency GHz, elevation deg),
// bilinear interpolation clamped at the table edges.
struct AtmosphericTable {
  Eigen::VectorXd freq_ghz;   // ascending
  Eigen::VectorXd elev_deg;   // ascending
  Eigen::MatrixXd loss_db;    // freq x elev

  double lookup(double f_ghz, double elev_rad) const;
  static AtmosphericTable from_csv(const std::string& path);
  static AtmosphericTable builtin();
};

struct EnvironmentParams {
  std::string name = "rural";
  double kf_db = 3.0;
  double v_sigma = 1.40;     // shadow-fading parameters
  double v_theta = 1.00;
  Eigen::VectorXd los_prob;  // at elevations 10,20,...,90 deg
  double clutter_loss_db = 0.0;
  double scintillation_db = 0.5;

  double kf_linear() const { return std::pow(10.0, kf_db / 10.0); }
  static EnvironmentParams rural();
  static EnvironmentParams suburban();
  static EnvironmentParams urban();
};

// Antenna correlation matrices; empty means identity.
struct NoiseModel {
  std::optional<Eigen::MatrixXcd> theta_ue;
  std::optional<Eigen::MatrixXcd> theta_sat;
  std::optional<Eigen::MatrixXcd> theta_ris;
};

// Per-satellite beams, pilots, and realized channel gains for one update
// interval. Precoders and combiners are redrawn per transmission (columns
// 1..G); a single static beam pair would make the AoA/AoD components of
// rho unidentifiable from the scalar baseband output, since they would
// enter only through one complex coupling that the gain nuisance absorbs.
// Gains are zero for blocked links.
struct SatLinkSnapshot {
  cd alpha;                        // direct-path complex gain
  Eigen::VectorXcd sat_ris_gains;  // alpha_sr per RIS
  Eigen::MatrixXcd precoders;      // M_s x G, unit-norm columns
  Eigen::MatrixXcd combiners;      // M x G, unit-norm columns
  Eigen::VectorXcd pilots;         // x_s^k, unit modulus, length K
};

struct ChannelSnapshot {
  std::vector<SatLinkSnapshot> sats;
  Eigen::VectorXcd ris_ue_gains;    // alpha_r per RIS (shared across sats)
  std::vector<SatRisParams> sat_ris;  // known legs, row-major [s][r]
  std::vector<RisState> riss;         // static deployment, incl. amplification
  std::vector<Eigen::MatrixXcd> ris_profiles;  // per RIS: M_R x G reflection
  ArrayConfig sat_array, ue_array, ris_array;
  double kf_linear = 2.0;
  WaveConstants wave;
  FrameConfig frame;
  NoiseModel noise;

  int num_sats() const { return static_cast<int>(sats.size()); }
  int num_ris() const { return static_cast<int>(riss.size()); }
  const SatRisParams& known(int s, int r) const {
    return sat_ris[static_cast<size_t>(s) * riss.size() + r];
  }
};

// One propagation path of a satellite's received signal, reduced to a
// complex amplitude plus Doppler/delay pair:
//   contribution(g,k) = amp * exp(j*2*pi*((g-1)*T*doppler - k*df*delay)).
struct SignalPath {
  cd amp;
  double doppler_hz = 0.0;
  double delay_s = 0.0;
};

// Uniform planar array response for a unit-modulus element grid in the
// node's local y-z plane (boresight +x), rows along y and columns along z.
Eigen::VectorXcd steering_vector(const ArrayConfig& array,
                                 const Eigen::Vector2d& az_el,
                                 double wavelength);

// Direct plus per-RIS paths of satellite s for transmission g (1-based),
// using the snapshot's realized gains.
std::vector<SignalPath> signal_paths(int g, int s, const SatLinkParams& sat_lp,
                                     const std::vector<RisLinkParams>& ris_lps,
                                     const ChannelSnapshot& snap);

// Same, with the direct gain alpha_s and the cascaded gains
// g_sr = alpha_r * alpha_sr supplied explicitly (they are the nuisance
// parameters of the channel-estimation FIM).
std::vector<SignalPath> signal_paths_with_gains(
    int g, int s, const SatLinkParams& sat_lp,
    const std::vector<RisLinkParams>& ris_lps, cd alpha_direct,
    const Eigen::VectorXcd& cascade_gains, const ChannelSnapshot& snap);

// Noise-free received sample for transmission g (1-based) and subcarrier k
// (1-based) of satellite s.
cd noise_free_rx(int g, int k, int s, const SatLinkParams& sat_lp,
                 const std::vector<RisLinkParams>& ris_lps,
                 const ChannelSnapshot& snap);

// Effective variance of the aggregated NLOS + thermal noise, C_s^k, for
// transmission g.
double effective_noise_variance(int s, int k, const ChannelSnapshot& snap,
                                int g = 1);

double fspl_db(double distance_m, double freq_ghz);

// PL = FSPL + SF + CL + PL_g + PL_s, with SF = X*(V_sigma+V_theta*log10(el)).
double total_path_loss(double distance_m, double freq_ghz, double elev_rad,
                       const EnvironmentParams& env,
                       const AtmosphericTable& atmos, double shadow_draw);

// Table lookup with linear interpolation in elevation degrees.
double los_probability(double elev_rad, const EnvironmentParams& env);

double expected_gain_amplitude(double path_loss_db, double p_los);

// Active-RIS uniform per-element amplitude from the power budget,
// g = sqrt(1 + P_R/incident), capped.
double ris_amplification(double power_budget_w, double incident_w,
                         double cap_db = 40.0);

}  // namespace leoris
