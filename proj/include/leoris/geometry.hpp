#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "leoris/manifold.hpp"

// Deterministic mapping from satellite/RIS/UE states to geometric channel
// parameters (Dopplers, AoDs, AoAs, delays) and assembly of the stacked
// observation vector rho = h(state).

namespace leoris {

struct WaveConstants {
  double carrier_hz = 12.7e9;
  double speed_of_light = 299792458.0;

  double wavelength() const { return speed_of_light / carrier_hz; }
};

struct SatelliteState {
  Vec3 p = Vec3::Zero();   // m
  Vec3 v = Vec3::Zero();   // m/s
  Mat3 R = Mat3::Identity();
};

struct RisState {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Eigen::VectorXcd reflection;  // diagonal of Gamma_r, length M_R
  double amplification = 1.0;   // uniform per-element amplitude gain
};

// Channel parameters of one satellite-UE direct link.
struct SatLinkParams {
  double doppler_hz = 0.0;
  Eigen::Vector2d aod = Eigen::Vector2d::Zero();  // (az, el) at satellite
  Eigen::Vector2d aoa = Eigen::Vector2d::Zero();  // (az, el) at UE
  double delay_s = 0.0;                           // includes clock bias
};

// Channel parameters of one RIS-UE subchannel (shared across satellites),
// plus the per-satellite delays epsilon_sr.
struct RisLinkParams {
  double doppler_hz = 0.0;
  Eigen::Vector2d aod = Eigen::Vector2d::Zero();  // at RIS
  Eigen::Vector2d aoa = Eigen::Vector2d::Zero();  // at UE
  Eigen::VectorXd delays_s;                       // length S
};

// Known parameters of the satellite-to-RIS leg.
struct SatRisParams {
  double doppler_hz = 0.0;
  double delay_s = 0.0;                           // no clock bias
  Eigen::Vector2d aoa = Eigen::Vector2d::Zero();  // at RIS
  Eigen::Vector2d aod = Eigen::Vector2d::Zero();  // at satellite
};

// Stacked observation vector rho = [rho_0; rho_1; ...; rho_S] with
// rho_0 = [nu(R); phi_D(2R); phi_A(2R)] and
// rho_s = [u_s, theta_D(2), theta_A(2), tau_s, eps_s1..eps_sR].
struct Observation {
  Eigen::VectorXd rho;
  int num_sats = 0;
  int num_ris = 0;

  static int dim(int S, int R) { return 5 * R + S * (R + 6); }
  int sat_block_offset(int s) const { return 5 * num_ris + s * (num_ris + 6); }
};

// Indices of azimuth components within rho (phi_D/phi_A az and per-satellite
// theta_D/theta_A az), used for innovation wrapping.
std::vector<int> azimuth_indices(int S, int R);

double wrap_angle(double a);  // into (-pi, pi]

SatLinkParams sat_link_params(const SatelliteState& sat, const UeState& ue,
                              int sat_index, const WaveConstants& k);
RisLinkParams ris_link_params(const RisState& ris, const UeState& ue,
                              const Eigen::VectorXd& clock_biases,
                              const WaveConstants& k);
SatRisParams sat_ris_known_params(const SatelliteState& sat,
                                  const RisState& ris,
                                  const WaveConstants& k);

Observation assemble_observation(const UeState& ue,
                                 const std::vector<SatelliteState>& sats,
                                 const std::vector<RisState>& riss,
                                 const WaveConstants& k);

// Elevation of the satellite above the local horizontal plane at the UE.
double elevation_angle(const SatelliteState& sat, const UeState& ue);

// Elevation of an arbitrary point above the local horizontal at `from`.
double elevation_angle(const Vec3& target, const Vec3& from);

}  // namespace leoris
