#pragma once

#include <Eigen/Dense>
#include <vector>

#include "leoris/fim.hpp"
#include "leoris/manifold.hpp"

// Unscented Kalman filter on R^3 x R^3 x R^S x SO(3): time update through
// the IMU-driven process model, FIM-based observation belief assignment,
// and measurement update, plus the unconstrained Euclidean baseline that
// carries vec(R) as nine free state entries.

namespace leoris {

enum class BeliefMode { identity, fim_approx, oracle };

struct FilterConfig {
  double alpha = 0.001;
  double beta = 2.0;
  double kappa = 0.0;
  Mat3 c_a = 0.04 * Mat3::Identity();      // accel covariance, (m/s^2)^2
  Mat3 c_omega = Mat3::Identity() * 1.2e-3;  // rotation covariance, rad^2
  double dt = 1.0;
  BeliefMode belief = BeliefMode::fim_approx;
  bool wrap_azimuth = true;   // wrap azimuth innovations into (-pi, pi]
  bool parallel_fim = true;   // evaluate sigma-point FIMs with OpenMP
  double karcher_tol = 1e-10;
  int karcher_max_iters = 100;
  FimOptions fim;
};

struct FilterState {
  UeState mean;
  Eigen::MatrixXd P;  // (S+9)x(S+9) tangent-space covariance
};

struct ImuMeasurement {
  Vec3 accel = Vec3::Zero();       // m/s^2
  Mat3 rotation = Mat3::Identity();  // measured rotation increment
};

struct UkfWeights {
  Eigen::VectorXd w_m;
  Eigen::VectorXd w_c;
  double lambda = 0.0;
  double spread = 0.0;  // N_p + Lambda = alpha^2 (N_p + kappa)
  int n_p = 0;
};

UkfWeights ukf_weights(int n_p, double alpha, double beta, double kappa);

UeState process_function(const UeState& state, const Vec3& accel,
                         const Mat3& rotation, double dt);

// The (S+9)x(S+9) process-noise covariance in tangent coordinates.
Eigen::MatrixXd process_noise(const Mat3& c_a, const Mat3& c_omega, double dt,
                              int num_sats);

// Symmetrize and clip negative eigenvalues at zero.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& M);

// Lower-triangular factor of the PSD-projected matrix (symmetric square
// root when the Cholesky of a rank-deficient projection fails).
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& M);

WeightedPointSet sigma_points(const UeState& mean, const Eigen::MatrixXd& P,
                              const UkfWeights& weights);

struct TimeUpdateResult {
  FilterState state;                // predicted mean and covariance
  std::vector<UeState> propagated;  // f(z_i), reused by the cross-covariance
  UkfWeights weights;
};

TimeUpdateResult time_update(const FilterState& state,
                             const ImuMeasurement& imu,
                             const FilterConfig& cfg);

// Observation belief: identity, epsilon*I + sum_i w_c[i] * J^-1(x_i), or
// the supplied oracle covariance.
Eigen::MatrixXd belief_assignment(const std::vector<UeState>& points,
                                  const Eigen::VectorXd& w_c, double epsilon,
                                  const StepContext& ctx, BeliefMode mode,
                                  const Eigen::MatrixXd* oracle_sigma,
                                  const FilterConfig& cfg);

struct MeasurementUpdateResult {
  FilterState state;
  Eigen::VectorXd innovation;
  Eigen::MatrixXd gain;
};

MeasurementUpdateResult measurement_update(
    const FilterState& predicted, const std::vector<UeState>& propagated,
    const WeightedPointSet& obs_sigma, const Observation& measured,
    const Eigen::MatrixXd& sigma_hat, const StepContext& ctx,
    const FilterConfig& cfg);

// --- Euclidean baseline -------------------------------------------------

// Unconstrained state [p, v, b, vec(R)] of dimension S+15. The rotation
// block is never projected inside the filter.
struct EuclideanState {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
};

EuclideanState euclidean_from_ue(const UeState& state);
// project=true maps the rotation block to the nearest rotation (error
// evaluation only).
UeState ue_from_euclidean(const Eigen::VectorXd& x, int num_sats,
                          bool project);

struct EuclideanStepResult {
  EuclideanState state;
  double max_orthonormality_error = 0.0;  // ||R^T R - I||_F of the estimate
};

EuclideanStepResult euclidean_ukf_step(const EuclideanState& state,
                                       const ImuMeasurement& imu,
                                       const Observation& measured,
                                       const StepContext& ctx, double epsilon,
                                       const Eigen::MatrixXd* oracle_sigma,
                                       const FilterConfig& cfg);

// --- Tracking loop --------------------------------------------------------

struct TimelineStep {
  ImuMeasurement imu;
  Observation measured;
  StepContext ctx;
  Eigen::MatrixXd oracle_sigma;  // covariance used by observation synthesis
  double epsilon = 0.5;
};

struct TrackResult {
  std::vector<FilterState> states;
  std::vector<double> nees;  // per step, when truth was provided
};

// Sequential time update, belief assignment, measurement update. Truth, if
// given, only feeds the NEES diagnostic.
TrackResult track(const FilterState& initial,
                  const std::vector<TimelineStep>& timeline,
                  const FilterConfig& cfg,
                  const std::vector<UeState>* truth = nullptr);

struct EuclideanTrackResult {
  std::vector<UeState> projected;  // estimates with R projected for metrics
  std::vector<double> orthonormality_error;  // raw-block ||R^T R - I||_F
};

EuclideanTrackResult euclidean_track(const UeState& initial_mean,
                                     const Eigen::MatrixXd& initial_p,
                                     const std::vector<TimelineStep>& timeline,
                                     const FilterConfig& cfg);

// Pseudo-inverse NEES, e^T P^+ e on the tangent residual e.
double nees(const FilterState& state, const UeState& truth);

}  // namespace leoris
