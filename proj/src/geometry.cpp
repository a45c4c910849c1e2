#include "leoris/geometry.hpp"

#include <cmath>

namespace leoris {

namespace {

constexpr double kMinSeparation = 1e-6;  // m

double safe_asin(double x) {
  // Arguments may poke past +-1 by rounding only.
  if (x > 1.0) x = 1.0;
  if (x < -1.0) x = -1.0;
  return std::asin(x);
}

// Azimuth/elevation of direction d expressed in the frame R (body frame).
Eigen::Vector2d angles_in_frame(const Mat3& R, const Vec3& d) {
  const Vec3 q = R.transpose() * d;
  double az = (q.x() == 0.0 && q.y() == 0.0) ? 0.0 : std::atan2(q.y(), q.x());
  if (az <= -M_PI) az += 2.0 * M_PI;
  // q.norm() rather than d.norm(): identical for orthonormal R, and keeps
  // the elevation defined when the Euclidean baseline feeds a drifted R.
  const double el = safe_asin(q.z() / q.norm());
  return {az, el};
}

}  // namespace

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

std::vector<int> azimuth_indices(int S, int R) {
  std::vector<int> idx;
  for (int r = 0; r < R; ++r) idx.push_back(R + 2 * r);          // phi_D az
  for (int r = 0; r < R; ++r) idx.push_back(3 * R + 2 * r);      // phi_A az
  for (int s = 0; s < S; ++s) {
    const int off = 5 * R + s * (R + 6);
    idx.push_back(off + 1);  // theta_D az
    idx.push_back(off + 3);  // theta_A az
  }
  return idx;
}

SatLinkParams sat_link_params(const SatelliteState& sat, const UeState& ue,
                              int sat_index, const WaveConstants& k) {
  const Vec3 d = ue.p - sat.p;  // satellite -> UE
  const double dist = d.norm();
  if (dist < kMinSeparation) {
    throw CoincidentPoints("sat_link_params: UE coincides with satellite");
  }
  SatLinkParams out;
  out.doppler_hz = (sat.v - ue.v).dot(d) / (k.wavelength() * dist);
  out.aod = angles_in_frame(sat.R, d);
  out.aoa = angles_in_frame(ue.R, -d);
  out.delay_s = dist / k.speed_of_light + ue.b[sat_index];
  return out;
}

RisLinkParams ris_link_params(const RisState& ris, const UeState& ue,
                              const Eigen::VectorXd& clock_biases,
                              const WaveConstants& k) {
  const Vec3 d = ris.p - ue.p;  // UE -> RIS
  const double dist = d.norm();
  if (dist < kMinSeparation) {
    throw CoincidentPoints("ris_link_params: UE coincides with RIS");
  }
  RisLinkParams out;
  out.doppler_hz = ue.v.dot(d) / (k.wavelength() * dist);
  out.aod = angles_in_frame(ris.R, -d);
  out.aoa = angles_in_frame(ue.R, d);
  out.delays_s = (dist / k.speed_of_light) +
                 clock_biases.array();  // eps_sr per satellite
  return out;
}

SatRisParams sat_ris_known_params(const SatelliteState& sat,
                                  const RisState& ris,
                                  const WaveConstants& k) {
  const Vec3 d = ris.p - sat.p;  // satellite -> RIS
  const double dist = d.norm();
  if (dist < kMinSeparation) {
    throw CoincidentPoints("sat_ris_known_params: RIS coincides with satellite");
  }
  SatRisParams out;
  out.doppler_hz = sat.v.dot(d) / (k.wavelength() * dist);
  out.delay_s = dist / k.speed_of_light;
  out.aoa = angles_in_frame(ris.R, -d);
  out.aod = angles_in_frame(sat.R, d);
  return out;
}

Observation assemble_observation(const UeState& ue,
                                 const std::vector<SatelliteState>& sats,
                                 const std::vector<RisState>& riss,
                                 const WaveConstants& k) {
  const int S = static_cast<int>(sats.size());
  const int R = static_cast<int>(riss.size());
  if (ue.num_satellites() != S) {
    throw DimensionMismatch("assemble_observation: clock-bias count != S");
  }
  Observation obs;
  obs.num_sats = S;
  obs.num_ris = R;
  obs.rho.resize(Observation::dim(S, R));

  for (int r = 0; r < R; ++r) {
    const RisLinkParams lp = ris_link_params(riss[r], ue, ue.b, k);
    obs.rho[r] = lp.doppler_hz;
    obs.rho.segment<2>(R + 2 * r) = lp.aod;
    obs.rho.segment<2>(3 * R + 2 * r) = lp.aoa;
    for (int s = 0; s < S; ++s) {
      obs.rho[obs.sat_block_offset(s) + 6 + r] = lp.delays_s[s];
    }
  }
  for (int s = 0; s < S; ++s) {
    const SatLinkParams lp = sat_link_params(sats[s], ue, s, k);
    const int off = obs.sat_block_offset(s);
    obs.rho[off] = lp.doppler_hz;
    obs.rho.segment<2>(off + 1) = lp.aod;
    obs.rho.segment<2>(off + 3) = lp.aoa;
    obs.rho[off + 5] = lp.delay_s;
  }
  return obs;
}

double elevation_angle(const Vec3& target, const Vec3& from) {
  const Vec3 d = target - from;
  const double dist = d.norm();
  if (dist < kMinSeparation) {
    throw CoincidentPoints("elevation_angle: coincident points");
  }
  return std::atan2(d.z(), std::hypot(d.x(), d.y()));
}

double elevation_angle(const SatelliteState& sat, const UeState& ue) {
  return elevation_angle(sat.p, ue.p);
}

}  // namespace leoris
