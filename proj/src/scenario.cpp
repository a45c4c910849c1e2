#include "leoris/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace leoris {

namespace {

constexpr double kMu = 3.986e14;          // m^3/s^2
constexpr double kEarthRadius = 6.378e6;  // m

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

Mat3 rot_x(double a) {
  Mat3 R;
  R << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return R;
}

Mat3 rot_z(double a) {
  Mat3 R;
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return R;
}

// Orthonormal frame with +x along d.
Mat3 look_at(const Vec3& d) {
  const Vec3 x = d.normalized();
  Vec3 ref = Vec3::UnitZ();
  if (std::abs(x.dot(ref)) > 0.99) ref = Vec3::UnitY();
  const Vec3 y = ref.cross(x).normalized();
  const Vec3 z = x.cross(y);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return R;
}

bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly, double x,
                      double y) {
  if (poly.size() < 3) return true;
  bool inside = false;
  for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > y) != (b.y() > y) &&
        x < (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

struct SnapshotDraws {
  bool zero_shadow = false;
};

// Realizes beams, pilots, RIS coefficients and channel gains for one update
// interval. Draw order is fixed so trial streams are stable across
// configurations.
ChannelSnapshot build_snapshot(const Scenario& sc,
                               const std::vector<SatelliteState>& sats,
                               const UeState& ue, const EnvironmentParams& env,
                               const AtmosphericTable& atmos, Rng& rng,
                               const SnapshotDraws& draws = {}) {
  const int S = static_cast<int>(sats.size());
  const int R = sc.num_ris();
  const double f_ghz = sc.wave.carrier_hz / 1e9;

  ChannelSnapshot snap;
  snap.wave = sc.wave;
  snap.frame = sc.frame;
  snap.sat_array = sc.sat_array;
  snap.ue_array = sc.ue_array;
  snap.kf_linear = env.kf_linear();
  if (R > 0) snap.ris_array = sc.riss[0].array;

  snap.sats.resize(S);
  for (int s = 0; s < S; ++s) {
    SatLinkSnapshot& link = snap.sats[s];
    const double shadow_draw = rng.normal();
    const double shadow = draws.zero_shadow ? 0.0 : shadow_draw;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double elev = elevation_angle(sats[s], ue);
    const double pl = total_path_loss((sats[s].p - ue.p).norm(), f_ghz, elev,
                                      env, atmos, shadow);
    link.alpha = std::polar(
        expected_gain_amplitude(pl, los_probability(elev, env)), phase);
    const int G = sc.frame.transmissions;
    link.combiners.resize(sc.ue_array.size(), G);
    link.precoders.resize(sc.sat_array.size(), G);
    for (int g = 0; g < G; ++g) {
      link.combiners.col(g) = rng.unit_vector(sc.ue_array.size());
      link.precoders.col(g) = rng.unit_vector(sc.sat_array.size());
    }
    link.pilots.resize(sc.frame.subcarriers);
    for (int k = 0; k < sc.frame.subcarriers; ++k) {
      link.pilots[k] = rng.unit_phase();
    }
    link.sat_ris_gains = Eigen::VectorXcd::Zero(R);
  }

  snap.ris_ue_gains = Eigen::VectorXcd::Zero(R);
  snap.riss.resize(R);
  snap.sat_ris.resize(static_cast<size_t>(S) * R);
  for (int r = 0; r < R; ++r) {
    const RisDeployment& dep = sc.riss[r];
    const EnvironmentParams ris_env = sc.environment(dep.region);
    const bool visible = ris_visible(dep, ue.p);

    // RIS-UE leg: FSPL + shadow fading only, always-LOS inside the zone.
    const double shadow_draw = rng.normal();
    const double shadow = draws.zero_shadow ? 0.0 : shadow_draw;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double elev_ru =
        std::max(elevation_angle(dep.position, ue.p), 0.5 * M_PI / 180.0);
    const double dist_ru = (dep.position - ue.p).norm();
    const double pl_ru =
        fspl_db(dist_ru, f_ghz) +
        shadow * (env.v_sigma + env.v_theta * std::log10(elev_ru));
    snap.ris_ue_gains[r] =
        visible ? std::polar(std::pow(10.0, -pl_ru / 20.0), phase) : cd(0.0);

    double incident = 0.0;
    for (int s = 0; s < S; ++s) {
      const double sh_draw = rng.normal();
      const double sh = draws.zero_shadow ? 0.0 : sh_draw;
      const double ph = rng.uniform(0.0, 2.0 * M_PI);
      const double elev_sr = elevation_angle(sats[s].p, dep.position);
      const double dist_sr = (sats[s].p - dep.position).norm();
      // Elevated clutter-free deployment: the satellite-RIS leg is LOS.
      const double pl_sr =
          total_path_loss(dist_sr, f_ghz, elev_sr, ris_env, atmos, sh);
      const double amp = std::pow(10.0, -pl_sr / 20.0);
      snap.sats[s].sat_ris_gains[r] = std::polar(amp, ph);
      incident += sc.frame.tx_power_w * amp * amp * dep.array.size();
      snap.sat_ris[static_cast<size_t>(s) * R + r] =
          sat_ris_known_params(sats[s], RisState{dep.position, dep.orientation,
                                                 {}, 1.0},
                               sc.wave);
    }

    RisState state;
    state.p = dep.position;
    state.R = dep.orientation;
    const double amp =
        ris_amplification(sc.ris_power_w, incident, sc.ris_amp_cap_db);
    state.amplification = amp;
    Eigen::MatrixXcd profile(dep.array.size(), sc.frame.transmissions);
    for (int g = 0; g < sc.frame.transmissions; ++g) {
      for (int i = 0; i < dep.array.size(); ++i) {
        profile(i, g) = amp * rng.unit_phase();
      }
    }
    state.reflection = profile.col(0);
    snap.ris_profiles.push_back(std::move(profile));
    snap.riss[r] = state;
  }
  return snap;
}

FilterConfig variant_config(const Scenario& sc, const VariantSpec& v) {
  FilterConfig cfg = sc.filter_config();
  cfg.belief = v.belief;
  return cfg;
}

Eigen::MatrixXd initial_covariance(const Scenario& sc, int S) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S + 9, S + 9);
  if (!sc.init.perturbed) return P;
  P.block<3, 3>(0, 0) = sc.init.pos_std_m * sc.init.pos_std_m * Mat3::Identity();
  P.block<3, 3>(3, 3) = sc.init.vel_std * sc.init.vel_std * Mat3::Identity();
  P.block(6, 6, S, S) = sc.init.bias_std_s * sc.init.bias_std_s *
                        Eigen::MatrixXd::Identity(S, S);
  P.block<3, 3>(S + 6, S + 6) =
      sc.init.rot_std_rad * sc.init.rot_std_rad * Mat3::Identity();
  return P;
}

}  // namespace

AtmosphericTable Scenario::atmos_table() const {
  return atmos_csv.empty() ? AtmosphericTable::builtin()
                           : AtmosphericTable::from_csv(atmos_csv);
}

EnvironmentParams Scenario::environment(const std::string& region) const {
  if (region == "rural") return EnvironmentParams::rural();
  if (region == "suburban") return EnvironmentParams::suburban();
  if (region == "urban") return EnvironmentParams::urban();
  throw Error("unknown region '" + region + "'");
}

double Scenario::epsilon_for(const std::string& metrics_region) const {
  auto it = epsilon.find(metrics_region);
  return it == epsilon.end() ? 0.5 : it->second;
}

FilterConfig Scenario::filter_config() const {
  FilterConfig cfg;
  cfg.alpha = ukf_alpha;
  cfg.beta = ukf_beta;
  cfg.kappa = ukf_kappa;
  cfg.c_a = sigma_a * sigma_a * Mat3::Identity();
  cfg.c_omega = sigma_omega_rad * sigma_omega_rad * Mat3::Identity();
  cfg.dt = frame.update_interval_s;
  return cfg;
}

std::vector<OrbitElements> default_constellation(int n) {
  const double d = M_PI / 180.0;
  const std::vector<OrbitElements> all = {
      {500e3, 53.0 * d, 0.0 * d, -1.2 * d},
      {500e3, 97.0 * d, 3.0 * d, 1.0 * d},
      {500e3, 30.0 * d, -3.5 * d, 2.0 * d},
      {500e3, 70.0 * d, 6.0 * d, -2.5 * d},
      {500e3, 45.0 * d, -6.0 * d, 3.5 * d},
  };
  if (n < 1 || n > static_cast<int>(all.size())) {
    throw Error("default_constellation supports 1..5 satellites");
  }
  return {all.begin(), all.begin() + n};
}

Scenario Scenario::desk_default() {
  Scenario sc;
  sc.steps = 60;
  sc.satellites = default_constellation(3);

  RisDeployment ris;
  ris.position = Vec3(755.0, 30.0, 12.0);
  ris.orientation = look_at(Vec3(680.0, 0.0, 1.5) - ris.position);
  ris.zone = {{600.0, -60.0}, {760.0, -60.0}, {760.0, 60.0}, {600.0, 60.0}};
  sc.riss = {ris};

  sc.regions = {{"rural", 300.0}, {"suburban", 600.0}, {"urban", 1e12}};
  sc.epsilon = {{"rural", 0.5},
                {"suburban", 0.5},
                {"urban_visible", 0.0},
                {"urban_invisible", 0.5}};

  sc.frame.subcarriers = 128;
  sc.frame.transmissions = 8;
  sc.frame.bandwidth_hz = 240e6;
  sc.frame.update_interval_s = 1.0;
  sc.frame.tx_power_w = dbm_to_watt(56.0);
  sc.frame.noise_power_w = dbm_to_watt(-174.0) * 240e6;  // NF 0 dB

  sc.segments = {{12, Vec3(0.3, 0.0, 0.0), 0.0},
                 {8, Vec3(0.0, 0.0, 0.0), 1.5 * M_PI / 180.0},
                 {10, Vec3(-0.2, 0.1, 0.0), -1.5 * M_PI / 180.0},
                 {10, Vec3(0.0, 0.0, 0.0), 0.0},
                 {20, Vec3(0.0, 0.0, 0.0), 0.0}};
  return sc;
}

Scenario Scenario::paper_default() {
  Scenario sc = desk_default();
  sc.steps = 180;
  sc.satellites = default_constellation(5);
  sc.frame.subcarriers = 3000;
  sc.frame.transmissions = 32;
  sc.frame.tx_power_w = dbm_to_watt(50.0);

  RisDeployment second;
  second.position = Vec3(1650.0, -40.0, 14.0);
  second.orientation = look_at(Vec3(1560.0, 0.0, 1.5) - second.position);
  second.zone = {{1450.0, -70.0}, {1660.0, -70.0}, {1660.0, 70.0},
                 {1450.0, 70.0}};
  sc.riss.push_back(second);
  sc.riss[0].position = Vec3(1500.0, 35.0, 12.0);
  sc.riss[0].orientation = look_at(Vec3(1400.0, 0.0, 1.5) - sc.riss[0].position);
  sc.riss[0].zone = {{1300.0, -70.0}, {1510.0, -70.0}, {1510.0, 70.0},
                     {1300.0, 70.0}};

  sc.regions = {{"rural", 900.0}, {"suburban", 1800.0}, {"urban", 1e12}};
  sc.segments = {{36, Vec3(0.3, 0.0, 0.0), 0.0},
                 {24, Vec3(0.0, 0.0, 0.0), 1.0 * M_PI / 180.0},
                 {30, Vec3(-0.2, 0.1, 0.0), -1.0 * M_PI / 180.0},
                 {30, Vec3(0.0, 0.0, 0.0), 0.0},
                 {60, Vec3(0.0, 0.0, 0.0), 0.0}};
  return sc;
}

std::vector<SatelliteState> propagate_satellites(const Scenario& sc, double t) {
  if (t < 0) throw Error("propagate_satellites: negative time");
  std::vector<SatelliteState> out;
  out.reserve(sc.satellites.size());
  for (const OrbitElements& el : sc.satellites) {
    const double a = kEarthRadius + el.height_m;
    const double rate = std::sqrt(kMu / (a * a * a));
    const double theta = el.phase_rad + rate * t;
    const Mat3 plane = rot_z(el.raan_rad) * rot_x(el.inclination_rad);
    const Vec3 r_ecef =
        plane * Vec3(a * std::cos(theta), a * std::sin(theta), 0.0);
    const Vec3 v_ecef = plane * Vec3(-a * rate * std::sin(theta),
                                     a * rate * std::cos(theta), 0.0);
    SatelliteState s;
    // Anchor at (lat 0, lon 0): east = ECEF y, north = ECEF z, up = ECEF x.
    s.p = Vec3(r_ecef.y(), r_ecef.z(), r_ecef.x() - kEarthRadius);
    s.v = Vec3(v_ecef.y(), v_ecef.z(), v_ecef.x());
    s.R = look_at(Vec3(0.0, 0.0, -kEarthRadius) - s.p);  // boresight to nadir
    out.push_back(s);
  }
  return out;
}

TruthTrajectory generate_trajectory(const Scenario& sc) {
  if (sc.steps < 1) throw Error("generate_trajectory: steps must be >= 1");
  TruthTrajectory out;
  const double dt = sc.frame.update_interval_s;

  UeState state;
  state.p = sc.start_position;
  state.R = euler_to_rotation(sc.start_yaw_rad, 0.0, 0.0);
  state.v = state.R * Vec3(sc.start_speed, 0.0, 0.0);
  state.b.resize(0);

  out.states.push_back(state);
  out.arclength.push_back(0.0);

  int seg_idx = 0;
  int in_segment = 0;
  for (int n = 0; n < sc.steps; ++n) {
    TrajectorySegment seg;  // zero dynamics beyond the last segment
    if (seg_idx < static_cast<int>(sc.segments.size())) {
      seg = sc.segments[seg_idx];
      if (++in_segment >= seg.steps) {
        ++seg_idx;
        in_segment = 0;
      }
    }
    const Vec3 accel = state.R * seg.accel_body;
    const Mat3 rot = rot_z(seg.yaw_rate_rad_s * dt);
    out.accel.push_back(accel);
    out.rotation.push_back(rot);
    state = process_function(state, accel, rot, dt);
    out.arclength.push_back(out.arclength.back() +
                            (state.p - out.states.back().p).norm());
    out.states.push_back(state);

    std::string label = sc.regions.empty() ? "rural" : sc.regions.back().name;
    for (const RegionSpan& span : sc.regions) {
      if (out.arclength.back() <= span.until_arclength_m) {
        label = span.name;
        break;
      }
    }
    out.region.push_back(label);
  }
  return out;
}

bool ris_visible(const RisDeployment& ris, const Vec3& ue_position) {
  const Vec3 boresight = ris.orientation.col(0);
  if ((ue_position - ris.position).dot(boresight) <= 0.0) return false;
  return point_in_polygon(ris.zone, ue_position.x(), ue_position.y());
}

std::vector<ImuMeasurement> synthesize_imu(const TruthTrajectory& truth,
                                           const Mat3& c_a, const Mat3& c_omega,
                                           Rng& rng) {
  const Eigen::LLT<Mat3> la(c_a);
  const Eigen::LLT<Mat3> lw(c_omega);
  const Mat3 sqrt_a = c_a.isZero() ? Mat3::Zero() : Mat3(la.matrixL());
  const Mat3 sqrt_w = c_omega.isZero() ? Mat3::Zero() : Mat3(lw.matrixL());
  std::vector<ImuMeasurement> out;
  out.reserve(truth.accel.size());
  for (size_t n = 0; n < truth.accel.size(); ++n) {
    ImuMeasurement m;
    m.accel = truth.accel[n] + sqrt_a * rng.normal3();
    m.rotation =
        truth.rotation[n] * so3_boxplus(Mat3::Identity(), sqrt_w * rng.normal3());
    out.push_back(m);
  }
  return out;
}

Observation synthesize_observation(const UeState& truth,
                                   const StepContext& ctx,
                                   const Eigen::MatrixXd& sigma, Rng& rng) {
  Observation obs =
      assemble_observation(truth, ctx.sats, ctx.snap.riss, ctx.snap.wave);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const Eigen::MatrixXd root = eig.eigenvectors() *
                               eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                               eig.eigenvectors().transpose();
  obs.rho += root * rng.normal_vector(static_cast<int>(sigma.rows()));
  for (int j : azimuth_indices(obs.num_sats, obs.num_ris)) {
    obs.rho[j] = wrap_angle(obs.rho[j]);
  }
  return obs;
}

ScenarioRealization realize(const Scenario& sc, uint64_t trial_seed) {
  Rng rng(trial_seed);
  const int S = sc.num_sats();
  const AtmosphericTable atmos = sc.atmos_table();
  const FilterConfig cfg = sc.filter_config();

  Eigen::VectorXd biases(S);
  for (int s = 0; s < S; ++s) {
    biases[s] = rng.uniform(sc.clock_bias_lo_s, sc.clock_bias_hi_s);
  }

  TruthTrajectory traj = generate_trajectory(sc);
  ScenarioRealization out;
  out.truth = traj.states;
  for (UeState& st : out.truth) st.b = biases;

  const std::vector<ImuMeasurement> imu =
      synthesize_imu(traj, cfg.c_a, cfg.c_omega, rng);

  for (int n = 1; n <= sc.steps; ++n) {
    const UeState& truth_n = out.truth[n];
    const std::string& region = traj.region[n - 1];
    const EnvironmentParams env = sc.environment(region);
    StepContext ctx;
    ctx.sats = propagate_satellites(sc, n * sc.frame.update_interval_s);
    ctx.snap = build_snapshot(sc, ctx.sats, truth_n, env, atmos, rng);

    bool visible = false;
    for (const RisDeployment& dep : sc.riss) {
      visible = visible || ris_visible(dep, truth_n.p);
    }
    const std::string metrics_region =
        region == "urban" ? (visible ? "urban_visible" : "urban_invisible")
                          : region;
    out.metrics_region.push_back(metrics_region);

    const CovarianceResult cov = observation_covariance(truth_n, ctx);

    TimelineStep step;
    step.imu = imu[n - 1];
    step.measured = synthesize_observation(truth_n, ctx, cov.sigma, rng);
    step.ctx = std::move(ctx);
    step.oracle_sigma = cov.sigma;
    step.epsilon = sc.epsilon_for(metrics_region);
    out.timeline.push_back(std::move(step));
  }

  out.initial.mean = out.truth[0];
  out.initial.P = initial_covariance(sc, S);
  if (sc.init.perturbed) {
    const Eigen::MatrixXd root = sqrt_psd(out.initial.P);
    out.initial.mean = state_boxplus(
        out.truth[0], TangentVector(Eigen::VectorXd(
                          root * rng.normal_vector(S + 9))));
  }
  out.initial_p_euclidean = Eigen::MatrixXd::Zero(S + 15, S + 15);
  if (sc.init.perturbed) {
    out.initial_p_euclidean.topLeftCorner(S + 6, S + 6) =
        out.initial.P.topLeftCorner(S + 6, S + 6);
    out.initial_p_euclidean.bottomRightCorner(9, 9) =
        (std::sqrt(3.0) * sc.init.rot_std_rad * sc.init.rot_std_rad /
         (2.0 * M_PI)) *
        Eigen::MatrixXd::Identity(9, 9);
  }
  return out;
}

Metrics compute_metrics(const std::vector<UeState>& truth,
                        const std::vector<UeState>& estimates) {
  if (truth.size() != estimates.size() + 1) {
    throw LengthMismatch("compute_metrics: estimates must align to truth[1..N]");
  }
  Metrics m;
  m.per_step.reserve(estimates.size());
  for (size_t n = 0; n < estimates.size(); ++n) {
    const UeState& t = truth[n + 1];
    const UeState& e = estimates[n];
    StepError err;
    err.pos = (e.p - t.p).norm();
    err.vel = (e.v - t.v).norm();
    err.orient = so3_boxminus(e.R, t.R).norm();
    m.per_step.push_back(err);
  }
  return m;
}

std::string VariantSpec::name() const {
  std::string b;
  switch (belief) {
    case BeliefMode::identity: b = "identity"; break;
    case BeliefMode::fim_approx: b = "fim_approx"; break;
    case BeliefMode::oracle: b = "oracle"; break;
  }
  return filter + "+" + b;
}

VariantSpec parse_variant(const std::string& filter,
                          const std::string& belief) {
  VariantSpec v;
  if (filter != "riemannian" && filter != "euclidean") {
    throw Error("unknown filter variant '" + filter + "'");
  }
  v.filter = filter;
  if (belief == "identity") {
    v.belief = BeliefMode::identity;
  } else if (belief == "fim_approx") {
    v.belief = BeliefMode::fim_approx;
  } else if (belief == "oracle") {
    v.belief = BeliefMode::oracle;
  } else {
    throw Error("unknown belief mode '" + belief + "'");
  }
  return v;
}

namespace {

TrialVariantResult run_variant(const Scenario& sc,
                               const ScenarioRealization& real,
                               const VariantSpec& v, int trial) {
  TrialVariantResult row;
  row.trial = trial;
  row.variant = v.name();
  const FilterConfig cfg = variant_config(sc, v);
  try {
    std::vector<UeState> estimates;
    if (v.filter == "riemannian") {
      std::vector<UeState> truth_steps(real.truth.begin() + 1,
                                       real.truth.end());
      const TrackResult res =
          track(real.initial, real.timeline, cfg, &truth_steps);
      for (size_t i = 1; i < res.states.size(); ++i) {
        estimates.push_back(res.states[i].mean);
      }
      row.nees = res.nees;
    } else {
      const EuclideanTrackResult res = euclidean_track(
          real.initial.mean, real.initial_p_euclidean, real.timeline, cfg);
      estimates = res.projected;
      row.orthonormality = res.orthonormality_error;
    }
    row.errors = compute_metrics(real.truth, estimates).per_step;
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.message = e.what();
  }
  return row;
}

}  // namespace

MonteCarloResult run_monte_carlo(const Scenario& sc, int trials,
                                 const std::vector<VariantSpec>& variants,
                                 uint64_t root_seed, bool parallel_trials) {
  if (trials < 1) throw Error("run_monte_carlo: trials must be >= 1");
  MonteCarloResult out;
  const int V = static_cast<int>(variants.size());
  out.rows.resize(static_cast<size_t>(trials) * V);

  std::vector<std::vector<std::string>> regions(trials);
  auto run_trial = [&](int t) {
    const ScenarioRealization real = realize(sc, Rng::derive(root_seed, t));
    regions[t] = real.metrics_region;
    for (int v = 0; v < V; ++v) {
      out.rows[static_cast<size_t>(t) * V + v] =
          run_variant(sc, real, variants[v], t);
    }
  };

  if (parallel_trials) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int t = 0; t < trials; ++t) run_trial(t);
  } else {
    for (int t = 0; t < trials; ++t) run_trial(t);
  }
  out.metrics_region = regions[0];

  // Aggregate RMSE per metrics region (plus "overall"), in row order.
  struct Acc {
    double pos = 0, vel = 0, orient = 0;
    int n = 0;
  };
  std::map<std::string, std::map<std::string, Acc>> acc;
  for (const TrialVariantResult& row : out.rows) {
    if (!row.ok) {
      out.failures.push_back(row.variant + " trial " +
                             std::to_string(row.trial) + ": " + row.message);
      continue;
    }
    for (size_t n = 0; n < row.errors.size(); ++n) {
      for (const std::string& key :
           {out.metrics_region[n], std::string("overall")}) {
        Acc& a = acc[row.variant][key];
        a.pos += row.errors[n].pos * row.errors[n].pos;
        a.vel += row.errors[n].vel * row.errors[n].vel;
        a.orient += row.errors[n].orient * row.errors[n].orient;
        a.n += 1;
      }
    }
  }
  for (const auto& [variant, by_region] : acc) {
    for (const auto& [region, a] : by_region) {
      RegionStats st;
      st.count = a.n;
      st.pos_rmse = std::sqrt(a.pos / a.n);
      st.vel_rmse = std::sqrt(a.vel / a.n);
      st.orient_rmse = std::sqrt(a.orient / a.n);
      out.summary[variant][region] = st;
    }
  }
  return out;
}

std::vector<CrbPoint> crb_sweep(const Scenario& sc,
                                const std::vector<int>& g_values,
                                const std::vector<int>& s_values,
                                const std::vector<int>& k_values,
                                const std::vector<std::string>& regions,
                                uint64_t seed) {
  if (g_values.empty() || s_values.empty() || k_values.empty() ||
      regions.empty()) {
    throw Error("crb_sweep: empty grid");
  }
  if (sc.num_ris() < 1) throw NoRisLinks("crb_sweep: scenario has no RIS");
  const int s_max = *std::max_element(s_values.begin(), s_values.end());
  const int g_max = *std::max_element(g_values.begin(), g_values.end());
  const AtmosphericTable atmos = sc.atmos_table();

  // Probe at the first RIS-visible trajectory state (mid-trajectory
  // fallback), with nominal clock biases.
  const TruthTrajectory traj = generate_trajectory(sc);
  UeState probe = traj.states[traj.states.size() / 2];
  for (size_t n = 1; n < traj.states.size(); ++n) {
    bool visible = false;
    for (const RisDeployment& dep : sc.riss) {
      visible = visible || ris_visible(dep, traj.states[n].p);
    }
    if (visible) {
      probe = traj.states[n];
      break;
    }
  }

  std::vector<CrbPoint> out;
  for (int k : k_values) {
    Scenario sck = sc;
    sck.satellites = default_constellation(s_max);
    sck.frame.subcarriers = k;
    sck.frame.transmissions = g_max;
    const std::vector<SatelliteState> sats =
        propagate_satellites(sck, sck.frame.update_interval_s);
    for (const std::string& region : regions) {
      // Same stream per region: beams and phases are paired across
      // environments and satellite prefixes stay nested.
      Rng rng(Rng::derive(seed, static_cast<uint64_t>(k)));
      UeState ue = probe;
      ue.b = Eigen::VectorXd::Constant(s_max, 100e-9);
      const EnvironmentParams env = sck.environment(region);
      SnapshotDraws draws;
      draws.zero_shadow = true;
      const ChannelSnapshot full_snap =
          build_snapshot(sck, sats, ue, env, atmos, rng, draws);

      for (int s_count : s_values) {
        StepContext ctx;
        ctx.sats.assign(sats.begin(), sats.begin() + s_count);
        ctx.snap = full_snap;
        ctx.snap.sats.resize(s_count);
        ctx.snap.sat_ris.assign(
            full_snap.sat_ris.begin(),
            full_snap.sat_ris.begin() +
                static_cast<size_t>(s_count) * sck.num_ris());
        UeState ue_s = ue;
        ue_s.b = ue.b.head(s_count);

        for (int g : g_values) {
          FimOptions opt;
          opt.g_end = g;
          const FimMatrix fim = observation_fim(ue_s, ctx, opt);
          CrbPoint pt;
          pt.transmissions = g;
          pt.sats = s_count;
          pt.subcarriers = k;
          pt.region = region;
          pt.crb_phi_d = crb_phi_d(fim, sck.num_ris());
          out.push_back(pt);
        }
      }
    }
  }
  return out;
}

// --- JSON ------------------------------------------------------------------

namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>());
}

}  // namespace

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["steps"] = sc.steps;
  j["frame"] = {{"subcarriers", sc.frame.subcarriers},
                {"transmissions", sc.frame.transmissions},
                {"bandwidth_hz", sc.frame.bandwidth_hz},
                {"update_interval_s", sc.frame.update_interval_s},
                {"symbol_duration_s", sc.frame.symbol_duration_s},
                {"tx_power_dbm", watt_to_dbm(sc.frame.tx_power_w)},
                {"noise_power_dbm", watt_to_dbm(sc.frame.noise_power_w)}};
  j["carrier_hz"] = sc.wave.carrier_hz;
  json sats = json::array();
  for (const OrbitElements& el : sc.satellites) {
    sats.push_back({{"height_m", el.height_m},
                    {"inclination_rad", el.inclination_rad},
                    {"raan_rad", el.raan_rad},
                    {"phase_rad", el.phase_rad}});
  }
  j["satellites"] = sats;
  j["sat_array"] = {{"rows", sc.sat_array.rows},
                    {"cols", sc.sat_array.cols},
                    {"spacing_m", sc.sat_array.spacing_m}};
  j["ue_array"] = {{"rows", sc.ue_array.rows},
                   {"cols", sc.ue_array.cols},
                   {"spacing_m", sc.ue_array.spacing_m}};
  json riss = json::array();
  for (const RisDeployment& r : sc.riss) {
    json zone = json::array();
    for (const auto& v : r.zone) zone.push_back({v.x(), v.y()});
    riss.push_back({{"position_m", vec3_to_json(r.position)},
                    {"boresight", vec3_to_json(r.orientation.col(0))},
                    {"rows", r.array.rows},
                    {"cols", r.array.cols},
                    {"spacing_m", r.array.spacing_m},
                    {"zone_xy", zone},
                    {"region", r.region}});
  }
  j["riss"] = riss;
  j["ris_power_dbm"] = watt_to_dbm(sc.ris_power_w);
  j["ris_amp_cap_db"] = sc.ris_amp_cap_db;
  json regions = json::array();
  for (const RegionSpan& r : sc.regions) {
    regions.push_back({{"name", r.name}, {"until_arclength_m", r.until_arclength_m}});
  }
  j["regions"] = regions;
  j["epsilon"] = sc.epsilon;
  j["trajectory"] = {{"start_m", vec3_to_json(sc.start_position)},
                     {"speed_m_s", sc.start_speed},
                     {"yaw_rad", sc.start_yaw_rad}};
  json segs = json::array();
  for (const TrajectorySegment& s : sc.segments) {
    segs.push_back({{"steps", s.steps},
                    {"accel_body", vec3_to_json(s.accel_body)},
                    {"yaw_rate_rad_s", s.yaw_rate_rad_s}});
  }
  j["trajectory"]["segments"] = segs;
  j["clock_bias_s"] = {sc.clock_bias_lo_s, sc.clock_bias_hi_s};
  j["imu"] = {{"sigma_a", sc.sigma_a}, {"sigma_omega_rad", sc.sigma_omega_rad}};
  j["ukf"] = {{"alpha", sc.ukf_alpha},
              {"beta", sc.ukf_beta},
              {"kappa", sc.ukf_kappa}};
  j["init"] = {{"perturbed", sc.init.perturbed},
               {"pos_std_m", sc.init.pos_std_m},
               {"vel_std", sc.init.vel_std},
               {"bias_std_s", sc.init.bias_std_s},
               {"rot_std_rad", sc.init.rot_std_rad}};
  j["atmos_csv"] = sc.atmos_csv;
  return j.dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(std::string("scenario JSON parse error: ") + e.what());
  }
  Scenario sc = Scenario::desk_default();
  try {
    if (j.contains("steps")) sc.steps = j["steps"].get<int>();
    if (j.contains("frame")) {
      const json& f = j["frame"];
      if (f.contains("subcarriers")) sc.frame.subcarriers = f["subcarriers"];
      if (f.contains("transmissions"))
        sc.frame.transmissions = f["transmissions"];
      if (f.contains("bandwidth_hz")) sc.frame.bandwidth_hz = f["bandwidth_hz"];
      if (f.contains("update_interval_s"))
        sc.frame.update_interval_s = f["update_interval_s"];
      if (f.contains("symbol_duration_s"))
        sc.frame.symbol_duration_s = f["symbol_duration_s"];
      if (f.contains("tx_power_dbm"))
        sc.frame.tx_power_w = dbm_to_watt(f["tx_power_dbm"]);
      if (f.contains("noise_power_dbm"))
        sc.frame.noise_power_w = dbm_to_watt(f["noise_power_dbm"]);
    }
    if (j.contains("carrier_hz")) sc.wave.carrier_hz = j["carrier_hz"];
    if (j.contains("satellites")) {
      sc.satellites.clear();
      for (const json& s : j["satellites"]) {
        OrbitElements el;
        el.height_m = s.at("height_m");
        el.inclination_rad = s.at("inclination_rad");
        el.raan_rad = s.at("raan_rad");
        el.phase_rad = s.at("phase_rad");
        sc.satellites.push_back(el);
      }
    }
    auto read_array = [&](const char* key, ArrayConfig* out) {
      if (!j.contains(key)) return;
      out->rows = j[key].at("rows");
      out->cols = j[key].at("cols");
      out->spacing_m = j[key].at("spacing_m");
    };
    read_array("sat_array", &sc.sat_array);
    read_array("ue_array", &sc.ue_array);
    if (j.contains("riss")) {
      sc.riss.clear();
      for (const json& r : j["riss"]) {
        RisDeployment dep;
        dep.position = vec3_from_json(r.at("position_m"));
        dep.orientation = look_at(vec3_from_json(r.at("boresight")));
        dep.array.rows = r.at("rows");
        dep.array.cols = r.at("cols");
        dep.array.spacing_m = r.at("spacing_m");
        dep.zone.clear();
        for (const json& v : r.at("zone_xy")) {
          dep.zone.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
        }
        if (r.contains("region")) dep.region = r["region"];
        sc.riss.push_back(dep);
      }
    }
    if (j.contains("ris_power_dbm"))
      sc.ris_power_w = dbm_to_watt(j["ris_power_dbm"]);
    if (j.contains("ris_amp_cap_db")) sc.ris_amp_cap_db = j["ris_amp_cap_db"];
    if (j.contains("regions")) {
      sc.regions.clear();
      for (const json& r : j["regions"]) {
        sc.regions.push_back({r.at("name"), r.at("until_arclength_m")});
      }
    }
    if (j.contains("epsilon")) {
      sc.epsilon.clear();
      for (const auto& [key, val] : j["epsilon"].items()) {
        sc.epsilon[key] = val.get<double>();
      }
    }
    if (j.contains("trajectory")) {
      const json& t = j["trajectory"];
      if (t.contains("start_m")) sc.start_position = vec3_from_json(t["start_m"]);
      if (t.contains("speed_m_s")) sc.start_speed = t["speed_m_s"];
      if (t.contains("yaw_rad")) sc.start_yaw_rad = t["yaw_rad"];
      if (t.contains("segments")) {
        sc.segments.clear();
        for (const json& s : t["segments"]) {
          TrajectorySegment seg;
          seg.steps = s.at("steps");
          seg.accel_body = vec3_from_json(s.at("accel_body"));
          seg.yaw_rate_rad_s = s.at("yaw_rate_rad_s");
          sc.segments.push_back(seg);
        }
      }
    }
    if (j.contains("clock_bias_s")) {
      sc.clock_bias_lo_s = j["clock_bias_s"].at(0);
      sc.clock_bias_hi_s = j["clock_bias_s"].at(1);
    }
    if (j.contains("imu")) {
      if (j["imu"].contains("sigma_a")) sc.sigma_a = j["imu"]["sigma_a"];
      if (j["imu"].contains("sigma_omega_rad"))
        sc.sigma_omega_rad = j["imu"]["sigma_omega_rad"];
    }
    if (j.contains("ukf")) {
      if (j["ukf"].contains("alpha")) sc.ukf_alpha = j["ukf"]["alpha"];
      if (j["ukf"].contains("beta")) sc.ukf_beta = j["ukf"]["beta"];
      if (j["ukf"].contains("kappa")) sc.ukf_kappa = j["ukf"]["kappa"];
    }
    if (j.contains("init")) {
      const json& i = j["init"];
      if (i.contains("perturbed")) sc.init.perturbed = i["perturbed"];
      if (i.contains("pos_std_m")) sc.init.pos_std_m = i["pos_std_m"];
      if (i.contains("vel_std")) sc.init.vel_std = i["vel_std"];
      if (i.contains("bias_std_s")) sc.init.bias_std_s = i["bias_std_s"];
      if (i.contains("rot_std_rad")) sc.init.rot_std_rad = i["rot_std_rad"];
    }
    if (j.contains("atmos_csv")) sc.atmos_csv = j["atmos_csv"];
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string("scenario JSON field error: ") + e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

}  // namespace leoris
