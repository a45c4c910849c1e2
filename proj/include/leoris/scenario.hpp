#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "leoris/filter.hpp"
#include "leoris/rng.hpp"

// Synthetic world: circular-orbit satellite propagation, a UE trajectory
// across rural/suburban/urban segments with RIS visibility zones, IMU and
// observation synthesis under the efficient-estimator model, Monte Carlo
// execution, and error metrics.

namespace leoris {

struct OrbitElements {
  double height_m = 500e3;
  double inclination_rad = 0.0;
  double raan_rad = 0.0;
  double phase_rad = 0.0;
};

struct RisDeployment {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();  // boresight +x
  ArrayConfig array{20, 20, 0.005};
  std::vector<Eigen::Vector2d> zone;    // visibility polygon in the x-y plane
  std::string region = "urban";
};

struct RegionSpan {
  std::string name;
  double until_arclength_m = 0.0;
};

struct TrajectorySegment {
  int steps = 0;
  Vec3 accel_body = Vec3::Zero();   // m/s^2, applied in the UE body frame
  double yaw_rate_rad_s = 0.0;
};

struct InitialUncertainty {
  bool perturbed = false;
  double pos_std_m = 1.0;
  double vel_std = 0.1;
  double bias_std_s = 5e-9;
  double rot_std_rad = 0.5 * M_PI / 180.0;
};

struct Scenario {
  int steps = 60;
  std::vector<OrbitElements> satellites;
  std::vector<RisDeployment> riss;
  std::vector<RegionSpan> regions;
  std::map<std::string, double> epsilon;  // per metrics region
  FrameConfig frame;
  WaveConstants wave;
  ArrayConfig sat_array{4, 4, 0.005};
  ArrayConfig ue_array{4, 4, 0.005};
  double ris_power_w = 1e-3;
  double ris_amp_cap_db = 90.0;
  Vec3 start_position{0.0, 0.0, 1.5};
  double start_speed = 15.0;
  double start_yaw_rad = 0.0;
  std::vector<TrajectorySegment> segments;
  double clock_bias_lo_s = 80e-9;
  double clock_bias_hi_s = 120e-9;
  double sigma_a = 0.2;                    // m/s^2
  double sigma_omega_rad = 2.0 * M_PI / 180.0;
  double ukf_alpha = 0.001, ukf_beta = 2.0, ukf_kappa = 0.0;
  InitialUncertainty init;
  std::string atmos_csv;  // empty: builtin table

  AtmosphericTable atmos_table() const;
  EnvironmentParams environment(const std::string& region) const;
  double epsilon_for(const std::string& metrics_region) const;
  FilterConfig filter_config() const;

  int num_sats() const { return static_cast<int>(satellites.size()); }
  int num_ris() const { return static_cast<int>(riss.size()); }

  static Scenario desk_default();
  static Scenario paper_default();
};

// The five repeatable orbits used by the default scenarios and CRB sweeps.
std::vector<OrbitElements> default_constellation(int n);

std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);

std::vector<SatelliteState> propagate_satellites(const Scenario& sc, double t);

struct TruthTrajectory {
  std::vector<UeState> states;       // length steps+1, clock biases empty
  std::vector<Vec3> accel;           // inputs state[n] -> state[n+1]
  std::vector<Mat3> rotation;
  std::vector<double> arclength;     // at each state
  std::vector<std::string> region;   // label of states[1..steps]
};

TruthTrajectory generate_trajectory(const Scenario& sc);

bool ris_visible(const RisDeployment& ris, const Vec3& ue_position);

std::vector<ImuMeasurement> synthesize_imu(const TruthTrajectory& truth,
                                           const Mat3& c_a, const Mat3& c_omega,
                                           Rng& rng);

Observation synthesize_observation(const UeState& truth,
                                   const StepContext& ctx,
                                   const Eigen::MatrixXd& sigma, Rng& rng);

// One trial's realized world: truth, IMU, channel snapshots, synthesized
// observations, and the (possibly perturbed) filter start.
struct ScenarioRealization {
  std::vector<UeState> truth;          // length steps+1, biases filled
  std::vector<TimelineStep> timeline;  // length steps
  std::vector<std::string> metrics_region;  // per step, urban split by zone
  FilterState initial;
  Eigen::MatrixXd initial_p_euclidean;
};

ScenarioRealization realize(const Scenario& sc, uint64_t trial_seed);

struct StepError {
  double pos = 0.0;
  double vel = 0.0;
  double orient = 0.0;
};

struct Metrics {
  std::vector<StepError> per_step;
};

// Euclidean-norm position/velocity errors and geodesic orientation error;
// estimates align with truth[1..N].
Metrics compute_metrics(const std::vector<UeState>& truth,
                        const std::vector<UeState>& estimates);

struct VariantSpec {
  std::string filter = "riemannian";  // riemannian | euclidean
  BeliefMode belief = BeliefMode::fim_approx;

  std::string name() const;
};

VariantSpec parse_variant(const std::string& filter, const std::string& belief);

struct TrialVariantResult {
  int trial = 0;
  std::string variant;
  bool ok = false;
  std::string message;
  std::vector<StepError> errors;          // per step
  std::vector<double> nees;               // riemannian only
  std::vector<double> orthonormality;     // euclidean only
};

struct RegionStats {
  double pos_rmse = 0.0;
  double vel_rmse = 0.0;
  double orient_rmse = 0.0;
  int count = 0;
};

struct MonteCarloResult {
  std::vector<TrialVariantResult> rows;   // trial-major, variant order fixed
  std::vector<std::string> metrics_region;  // per step
  std::map<std::string, std::map<std::string, RegionStats>> summary;
  std::vector<std::string> failures;
};

MonteCarloResult run_monte_carlo(const Scenario& sc, int trials,
                                 const std::vector<VariantSpec>& variants,
                                 uint64_t root_seed, bool parallel_trials);

// CRB of the RIS AoDs at a fixed RIS-visible probe state.
struct CrbPoint {
  int transmissions = 0;
  int sats = 0;
  int subcarriers = 0;
  std::string region;
  double crb_phi_d = 0.0;
};

std::vector<CrbPoint> crb_sweep(const Scenario& sc,
                                const std::vector<int>& g_values,
                                const std::vector<int>& s_values,
                                const std::vector<int>& k_values,
                                const std::vector<std::string>& regions,
                                uint64_t seed);

}  // namespace leoris
