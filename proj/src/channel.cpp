#include "leoris/channel.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace leoris {

namespace {

Eigen::VectorXd los_table(std::initializer_list<double> percent) {
  Eigen::VectorXd v(static_cast<int>(percent.size()));
  int i = 0;
  for (double x : percent) v[i++] = x / 100.0;
  return v;
}

double correlated_norm_sq(const std::optional<Eigen::MatrixXcd>& theta,
                          const Eigen::VectorXcd& x) {
  if (!theta) return x.squaredNorm();
  return (*theta * x).dot(x).real();  // x^H Theta x, Theta Hermitian PSD
}

}  // namespace

EnvironmentParams EnvironmentParams::rural() {
  EnvironmentParams e;
  e.name = "rural";
  e.kf_db = 3.0;
  e.v_sigma = 1.40;
  e.v_theta = 1.00;
  e.los_prob = los_table({78.2, 86.9, 91.9, 92.9, 93.5, 94.0, 94.9, 95.2, 99.8});
  return e;
}

EnvironmentParams EnvironmentParams::suburban() {
  EnvironmentParams e;
  e.name = "suburban";
  e.kf_db = 2.6;
  e.v_sigma = 1.45;
  e.v_theta = 0.85;
  e.los_prob = los_table({78.2, 86.9, 91.9, 92.9, 93.5, 94.0, 94.9, 95.2, 99.8});
  return e;
}

EnvironmentParams EnvironmentParams::urban() {
  EnvironmentParams e;
  e.name = "urban";
  e.kf_db = 1.85;
  e.v_sigma = 0.10;
  e.v_theta = 0.00;
  e.los_prob = los_table({24.6, 38.6, 49.3, 61.3, 72.6, 80.5, 91.9, 96.8, 99.2});
  return e;
}

double AtmosphericTable::lookup(double f_ghz, double elev_rad) const {
  const double elev = elev_rad * 180.0 / M_PI;
  auto clamp_index = [](const Eigen::VectorXd& grid, double x, double* frac) {
    int n = static_cast<int>(grid.size());
    if (x <= grid[0]) {
      *frac = 0.0;
      return 0;
    }
    if (x >= grid[n - 1]) {
      *frac = 0.0;
      return n - 1;
    }
    int i = 0;
    while (i + 1 < n && grid[i + 1] < x) ++i;
    *frac = (x - grid[i]) / (grid[i + 1] - grid[i]);
    return i;
  };
  double ff, fe;
  const int i = clamp_index(freq_ghz, f_ghz, &ff);
  const int j = clamp_index(elev_deg, elev, &fe);
  const int i1 = std::min<int>(i + 1, freq_ghz.size() - 1);
  const int j1 = std::min<int>(j + 1, elev_deg.size() - 1);
  const double a = loss_db(i, j) * (1 - ff) + loss_db(i1, j) * ff;
  const double b = loss_db(i, j1) * (1 - ff) + loss_db(i1, j1) * ff;
  return a * (1 - fe) + b * fe;
}

AtmosphericTable AtmosphericTable::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("atmospheric table: cannot open " + path);
  std::string line;
  std::set<double> freqs, elevs;
  std::map<std::pair<double, double>, double> cells;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    std::string tok;
    double vals[3];
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, tok, ',')) {
        throw Error("atmospheric table: malformed row '" + line + "'");
      }
      vals[i] = std::stod(tok);
    }
    freqs.insert(vals[0]);
    elevs.insert(vals[1]);
    cells[{vals[0], vals[1]}] = vals[2];
  }
  AtmosphericTable t;
  t.freq_ghz.resize(static_cast<int>(freqs.size()));
  t.elev_deg.resize(static_cast<int>(elevs.size()));
  int i = 0;
  for (double f : freqs) t.freq_ghz[i++] = f;
  i = 0;
  for (double e : elevs) t.elev_deg[i++] = e;
  t.loss_db.resize(t.freq_ghz.size(), t.elev_deg.size());
  for (int fi = 0; fi < t.freq_ghz.size(); ++fi) {
    for (int ei = 0; ei < t.elev_deg.size(); ++ei) {
      auto it = cells.find({t.freq_ghz[fi], t.elev_deg[ei]});
      if (it == cells.end()) {
        throw Error("atmospheric table: missing cell in rectangular grid");
      }
      t.loss_db(fi, ei) = it->second;
    }
  }
  return t;
}

AtmosphericTable AtmosphericTable::builtin() {
  // Zenith attenuation rising with carrier frequency, scaled by the slant
  // path (~1/sin(elev)), matching the qualitative elevation dependence.
  AtmosphericTable t;
  t.freq_ghz.resize(6);
  t.freq_ghz << 1.0, 5.0, 10.0, 12.7, 20.0, 30.0;
  Eigen::VectorXd zenith(6);
  zenith << 0.035, 0.040, 0.050, 0.060, 0.160, 0.230;
  t.elev_deg.resize(7);
  t.elev_deg << 5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 90.0;
  t.loss_db.resize(6, 7);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 7; ++j) {
      t.loss_db(i, j) = zenith[i] / std::sin(t.elev_deg[j] * M_PI / 180.0);
    }
  }
  return t;
}

Eigen::VectorXcd steering_vector(const ArrayConfig& array,
                                 const Eigen::Vector2d& az_el,
                                 double wavelength) {
  const double az = az_el[0], el = az_el[1];
  // Unit direction in the local frame; elements sit at (0, m*d, n*d).
  const double uy = std::cos(el) * std::sin(az);
  const double uz = std::sin(el);
  const double scale = 2.0 * M_PI * array.spacing_m / wavelength;
  Eigen::VectorXcd a(array.size());
  int idx = 0;
  for (int m = 0; m < array.rows; ++m) {
    for (int n = 0; n < array.cols; ++n) {
      a[idx++] = std::polar(1.0, scale * (m * uy + n * uz));
    }
  }
  return a;
}

std::vector<SignalPath> signal_paths_with_gains(
    int g, int s, const SatLinkParams& sat_lp,
    const std::vector<RisLinkParams>& ris_lps, cd alpha_direct,
    const Eigen::VectorXcd& cascade_gains, const ChannelSnapshot& snap) {
  const SatLinkSnapshot& link = snap.sats[s];
  const double lam = snap.wave.wavelength();
  const double scale =
      std::sqrt(snap.kf_linear * snap.frame.tx_power_w / (snap.kf_linear + 1.0));
  const Eigen::VectorXcd combiner = link.combiners.col(g - 1);
  const Eigen::VectorXcd precoder = link.precoders.col(g - 1);

  std::vector<SignalPath> paths;
  paths.reserve(1 + ris_lps.size());

  const cd rx_direct =
      combiner.dot(steering_vector(snap.ue_array, sat_lp.aoa, lam));
  const cd tx_direct =
      steering_vector(snap.sat_array, sat_lp.aod, lam).transpose() * precoder;
  paths.push_back({scale * alpha_direct * rx_direct * tx_direct,
                   sat_lp.doppler_hz, sat_lp.delay_s});

  for (size_t r = 0; r < ris_lps.size(); ++r) {
    const SatRisParams& known = snap.known(s, static_cast<int>(r));
    const cd rx =
        combiner.dot(steering_vector(snap.ue_array, ris_lps[r].aoa, lam));
    const Eigen::VectorXcd a_out =
        steering_vector(snap.ris_array, ris_lps[r].aod, lam);
    const Eigen::VectorXcd a_in =
        steering_vector(snap.ris_array, known.aoa, lam);
    const cd through = (a_out.array() * snap.ris_profiles[r].col(g - 1).array() *
                        a_in.array())
                           .sum();
    const cd tx =
        steering_vector(snap.sat_array, known.aod, lam).transpose() * precoder;
    paths.push_back({scale * cascade_gains[r] * rx * through * tx,
                     ris_lps[r].doppler_hz + known.doppler_hz,
                     ris_lps[r].delays_s[s] + known.delay_s});
  }
  return paths;
}

std::vector<SignalPath> signal_paths(int g, int s, const SatLinkParams& sat_lp,
                                     const std::vector<RisLinkParams>& ris_lps,
                                     const ChannelSnapshot& snap) {
  Eigen::VectorXcd cascade(snap.num_ris());
  for (int r = 0; r < snap.num_ris(); ++r) {
    cascade[r] = snap.ris_ue_gains[r] * snap.sats[s].sat_ris_gains[r];
  }
  return signal_paths_with_gains(g, s, sat_lp, ris_lps, snap.sats[s].alpha,
                                 cascade, snap);
}

cd noise_free_rx(int g, int k, int s, const SatLinkParams& sat_lp,
                 const std::vector<RisLinkParams>& ris_lps,
                 const ChannelSnapshot& snap) {
  if (g < 1 || g > snap.frame.transmissions || k < 1 ||
      k > snap.frame.subcarriers) {
    throw IndexOutOfRange("noise_free_rx: transmission/subcarrier index");
  }
  const double t = (g - 1) * snap.frame.symbol_duration();
  const double df = snap.frame.subcarrier_spacing();
  cd sum = 0.0;
  for (const SignalPath& path : signal_paths(g, s, sat_lp, ris_lps, snap)) {
    sum += path.amp * std::polar(1.0, 2.0 * M_PI * (t * path.doppler_hz -
                                                    k * df * path.delay_s));
  }
  return sum * snap.sats[s].pilots[k - 1];
}

double effective_noise_variance(int s, int k, const ChannelSnapshot& snap,
                                int g) {
  const SatLinkSnapshot& link = snap.sats[s];
  const double lam = snap.wave.wavelength();
  const double pilot_sq = std::norm(link.pilots[k - 1]);
  const Eigen::VectorXcd combiner = link.combiners.col(g - 1);
  const Eigen::VectorXcd precoder = link.precoders.col(g - 1);
  const double w_sq = correlated_norm_sq(snap.noise.theta_ue, combiner);
  // The diffuse components carry the same large-scale gain as their LOS
  // counterparts (the Rician factor splits the per-link envelope), so each
  // term is weighted by the realized |alpha|^2 of its receive leg.
  double tx_sq = std::norm(link.alpha) *
                 correlated_norm_sq(snap.noise.theta_sat, precoder);
  for (int r = 0; r < snap.num_ris(); ++r) {
    if (snap.ris_ue_gains[r] == cd(0.0) || link.sat_ris_gains[r] == cd(0.0)) {
      continue;  // blocked RIS scatters no power toward the UE
    }
    const SatRisParams& known = snap.known(s, r);
    const cd tx =
        steering_vector(snap.sat_array, known.aod, lam).transpose() * precoder;
    const Eigen::VectorXcd scattered =
        snap.ris_ue_gains[r] * snap.ris_profiles[r].col(g - 1).array() *
        steering_vector(snap.ris_array, known.aoa, lam).array() *
        (link.sat_ris_gains[r] * tx);
    tx_sq += correlated_norm_sq(snap.noise.theta_ris, scattered);
  }
  return snap.frame.tx_power_w * pilot_sq * w_sq * tx_sq /
             (snap.kf_linear + 1.0) +
         snap.frame.noise_power_w;
}

double fspl_db(double distance_m, double freq_ghz) {
  return 32.45 + 20.0 * std::log10(distance_m) + 20.0 * std::log10(freq_ghz);
}

double total_path_loss(double distance_m, double freq_ghz, double elev_rad,
                       const EnvironmentParams& env,
                       const AtmosphericTable& atmos, double shadow_draw) {
  const double sf =
      shadow_draw * (env.v_sigma + env.v_theta * std::log10(elev_rad));
  return fspl_db(distance_m, freq_ghz) + sf + env.clutter_loss_db +
         atmos.lookup(freq_ghz, elev_rad) + env.scintillation_db;
}

double los_probability(double elev_rad, const EnvironmentParams& env) {
  const double deg = elev_rad * 180.0 / M_PI;
  const int n = static_cast<int>(env.los_prob.size());
  if (deg <= 10.0) return env.los_prob[0];
  if (deg >= 10.0 * n) return env.los_prob[n - 1];
  const double pos = deg / 10.0 - 1.0;
  const int i = std::min(static_cast<int>(pos), n - 2);
  const double frac = pos - i;
  return env.los_prob[i] * (1 - frac) + env.los_prob[i + 1] * frac;
}

double expected_gain_amplitude(double path_loss_db, double p_los) {
  return p_los * std::pow(10.0, -path_loss_db / 20.0);
}

double ris_amplification(double power_budget_w, double incident_w,
                         double cap_db) {
  const double cap = std::pow(10.0, cap_db / 20.0);
  if (incident_w <= 0.0) return cap;
  return std::min(cap, std::sqrt(1.0 + power_budget_w / incident_w));
}

}  // namespace leoris
