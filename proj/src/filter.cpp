#include "leoris/filter.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace leoris {

namespace {

bool inside_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

// Align the azimuth entries of h toward a reference evaluation so that a
// sigma set straddling +-pi averages on one branch.
void align_azimuths(Eigen::VectorXd& h, const Eigen::VectorXd& ref,
                    const std::vector<int>& az_idx) {
  for (int j : az_idx) {
    const double d = h[j] - ref[j];
    if (d > M_PI) h[j] -= 2.0 * M_PI;
    if (d < -M_PI) h[j] += 2.0 * M_PI;
  }
}

// K = cross * Q^-1 through an equilibrated LDLT solve.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& cross,
                            const Eigen::MatrixXd& Q) {
  const Eigen::VectorXd d = Q.diagonal().cwiseMax(1e-300).cwiseSqrt();
  const Eigen::MatrixXd Qs =
      d.cwiseInverse().asDiagonal() * Q * d.cwiseInverse().asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Qs);
  if (ldlt.info() != Eigen::Success) {
    const Eigen::MatrixXd jittered =
        Qs + 1e-12 * Eigen::MatrixXd::Identity(Qs.rows(), Qs.cols());
    ldlt.compute(jittered);
    if (ldlt.info() != Eigen::Success) {
      throw InnovationSingular("measurement_update: innovation covariance");
    }
  }
  const Eigen::MatrixXd A = cross * d.cwiseInverse().asDiagonal();
  return ldlt.solve(A.transpose()).transpose() * d.cwiseInverse().asDiagonal();
}

Eigen::VectorXd wrapped_innovation(const Eigen::VectorXd& measured,
                                   const Eigen::VectorXd& predicted,
                                   const std::vector<int>& az_idx,
                                   bool wrap) {
  Eigen::VectorXd innov = measured - predicted;
  if (wrap) {
    for (int j : az_idx) innov[j] = wrap_angle(innov[j]);
  }
  return innov;
}

}  // namespace

UkfWeights ukf_weights(int n_p, double alpha, double beta, double kappa) {
  if (alpha == 0.0) throw DegenerateSpread("ukf_weights: alpha must be nonzero");
  UkfWeights w;
  w.n_p = n_p;
  w.spread = alpha * alpha * (n_p + kappa);  // N_p + Lambda without cancellation
  if (w.spread == 0.0) {
    throw DegenerateSpread("ukf_weights: N_p + Lambda vanishes");
  }
  w.lambda = w.spread - n_p;
  const double wi = 1.0 / (2.0 * w.spread);
  w.w_m = Eigen::VectorXd::Constant(2 * n_p + 1, wi);
  w.w_c = w.w_m;
  w.w_m[0] = w.lambda / w.spread;
  w.w_c[0] = w.w_m[0] + (1.0 - alpha * alpha + beta);
  return w;
}

UeState process_function(const UeState& state, const Vec3& accel,
                         const Mat3& rotation, double dt) {
  UeState out = state;
  out.p = state.p + state.v * dt + accel * (dt * dt / 2.0);
  out.v = state.v + accel * dt;
  out.R = state.R * rotation;
  return out;
}

Eigen::MatrixXd process_noise(const Mat3& c_a, const Mat3& c_omega, double dt,
                              int num_sats) {
  const int n = num_sats + 9;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P.block<3, 3>(0, 0) = c_a * (dt * dt * dt * dt / 4.0);
  P.block<3, 3>(0, 3) = c_a * (dt * dt * dt / 2.0);
  P.block<3, 3>(3, 0) = c_a * (dt * dt * dt / 2.0);
  P.block<3, 3>(3, 3) = c_a * (dt * dt);
  P.block<3, 3>(n - 3, n - 3) = c_omega;
  return P;
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd sym = (M + M.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.eigenvalues().minCoeff() >= 0.0) return sym;
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
         eig.eigenvectors().transpose();
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& M) {
  const Eigen::MatrixXd sym = (M + M.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);
  if (ev.minCoeff() < -1e-9 * scale) {
    throw NotPsd("sqrt_psd: matrix is not positive semidefinite");
  }
  const Eigen::VectorXd clipped = ev.cwiseMax(0.0);
  if (clipped.maxCoeff() == 0.0) {
    return Eigen::MatrixXd::Zero(sym.rows(), sym.cols());
  }
  const Eigen::MatrixXd projected = eig.eigenvectors() * clipped.asDiagonal() *
                                    eig.eigenvectors().transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(projected);
  if (llt.info() == Eigen::Success) {
    return Eigen::MatrixXd(llt.matrixL());
  }
  // Rank-deficient projection: fall back to the symmetric square root.
  return eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

WeightedPointSet sigma_points(const UeState& mean, const Eigen::MatrixXd& P,
                              const UkfWeights& weights) {
  const int n = weights.n_p;
  if (P.rows() != n || P.cols() != n || mean.tangent_dim() != n) {
    throw DimensionMismatch("sigma_points: covariance dimension");
  }
  const Eigen::MatrixXd L = std::sqrt(weights.spread) * sqrt_psd(P);
  WeightedPointSet set;
  set.w_m = weights.w_m;
  set.w_c = weights.w_c;
  set.points.reserve(2 * n + 1);
  set.points.push_back(mean);
  for (int sign = 0; sign < 2; ++sign) {
    for (int i = 0; i < n; ++i) {
      TangentVector u(sign == 0 ? Eigen::VectorXd(L.col(i))
                                : Eigen::VectorXd(-L.col(i)));
      set.points.push_back(state_boxplus(mean, u));
    }
  }
  return set;
}

TimeUpdateResult time_update(const FilterState& state,
                             const ImuMeasurement& imu,
                             const FilterConfig& cfg) {
  const int S = state.mean.num_satellites();
  TimeUpdateResult out;
  out.weights = ukf_weights(S + 9, cfg.alpha, cfg.beta, cfg.kappa);
  const WeightedPointSet set = sigma_points(state.mean, state.P, out.weights);

  out.propagated.reserve(set.points.size());
  for (const UeState& z : set.points) {
    out.propagated.push_back(
        process_function(z, imu.accel, imu.rotation, cfg.dt));
  }
  out.state.mean = manifold_mean(set.w_m, out.propagated, cfg.karcher_tol,
                                 cfg.karcher_max_iters);

  Eigen::MatrixXd P = process_noise(cfg.c_a, cfg.c_omega, cfg.dt, S);
  for (size_t i = 0; i < out.propagated.size(); ++i) {
    const Eigen::VectorXd dev =
        state_boxminus(out.propagated[i], out.state.mean).u;
    P += set.w_c[i] * dev * dev.transpose();
  }
  out.state.P = psd_project(P);
  return out;
}

Eigen::MatrixXd belief_assignment(const std::vector<UeState>& points,
                                  const Eigen::VectorXd& w_c, double epsilon,
                                  const StepContext& ctx, BeliefMode mode,
                                  const Eigen::MatrixXd* oracle_sigma,
                                  const FilterConfig& cfg) {
  const int dim = Observation::dim(static_cast<int>(ctx.sats.size()),
                                   ctx.snap.num_ris());
  switch (mode) {
    case BeliefMode::identity:
      return Eigen::MatrixXd::Identity(dim, dim);
    case BeliefMode::oracle:
      if (!oracle_sigma) {
        throw Error("belief_assignment: oracle mode without oracle sigma");
      }
      return *oracle_sigma;
    case BeliefMode::fim_approx:
      break;
  }
  if (w_c.size() != static_cast<Eigen::Index>(points.size())) {
    throw DimensionMismatch("belief_assignment: weights/points mismatch");
  }
  const bool parallel = cfg.parallel_fim && !inside_parallel_region();
  const std::vector<FimMatrix> fims =
      parallel ? fim_at_states_parallel(points, ctx, cfg.fim)
               : fim_at_states_serial(points, ctx, cfg.fim);
  // One dead-component set for the whole sigma batch; the large scaled-UKF
  // weights would amplify any per-point flip of the floor decision.
  const std::vector<int> floor_set = observation_covariance(fims[0]).floored;
  Eigen::MatrixXd sigma = epsilon * Eigen::MatrixXd::Identity(dim, dim);
  for (size_t i = 0; i < fims.size(); ++i) {
    sigma += w_c[static_cast<Eigen::Index>(i)] *
             observation_covariance(fims[i], &floor_set).sigma;
  }
  return psd_project(sigma);
}

MeasurementUpdateResult measurement_update(
    const FilterState& predicted, const std::vector<UeState>& propagated,
    const WeightedPointSet& obs_sigma, const Observation& measured,
    const Eigen::MatrixXd& sigma_hat, const StepContext& ctx,
    const FilterConfig& cfg) {
  const int S = static_cast<int>(ctx.sats.size());
  const int R = ctx.snap.num_ris();
  const int dim = Observation::dim(S, R);
  const int n_points = static_cast<int>(obs_sigma.points.size());
  if (static_cast<int>(propagated.size()) != n_points) {
    throw DimensionMismatch("measurement_update: sigma set sizes differ");
  }
  const std::vector<int> az_idx = azimuth_indices(S, R);

  std::vector<Eigen::VectorXd> h(n_points);
  for (int i = 0; i < n_points; ++i) {
    h[i] = assemble_observation(obs_sigma.points[i], ctx.sats, ctx.snap.riss,
                                ctx.snap.wave)
               .rho;
    if (cfg.wrap_azimuth && i > 0) align_azimuths(h[i], h[0], az_idx);
  }

  Eigen::VectorXd rho_pred = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n_points; ++i) rho_pred += obs_sigma.w_m[i] * h[i];

  Eigen::MatrixXd Q = sigma_hat;
  Eigen::MatrixXd cross =
      Eigen::MatrixXd::Zero(predicted.mean.tangent_dim(), dim);
  for (int i = 0; i < n_points; ++i) {
    const Eigen::VectorXd dh = h[i] - rho_pred;
    Q += obs_sigma.w_c[i] * dh * dh.transpose();
    const Eigen::VectorXd dz =
        state_boxminus(propagated[i], predicted.mean).u;
    cross += obs_sigma.w_c[i] * dz * dh.transpose();
  }
  Q = (Q + Q.transpose()) / 2.0;

  MeasurementUpdateResult out;
  out.gain = kalman_gain(cross, Q);
  out.innovation =
      wrapped_innovation(measured.rho, rho_pred, az_idx, cfg.wrap_azimuth);
  out.state.mean = state_boxplus(
      predicted.mean, TangentVector(out.gain * out.innovation));
  out.state.P =
      psd_project(predicted.P - out.gain * Q * out.gain.transpose());
  return out;
}

// --- Euclidean baseline ---------------------------------------------------

EuclideanState euclidean_from_ue(const UeState& state) {
  const int S = state.num_satellites();
  EuclideanState out;
  out.x.resize(S + 15);
  out.x.segment<3>(0) = state.p;
  out.x.segment<3>(3) = state.v;
  out.x.segment(6, S) = state.b;
  out.x.segment<9>(6 + S) =
      Eigen::Map<const Eigen::VectorXd>(state.R.data(), 9);
  out.P = Eigen::MatrixXd::Zero(S + 15, S + 15);
  return out;
}

UeState ue_from_euclidean(const Eigen::VectorXd& x, int num_sats,
                          bool project) {
  UeState s;
  s.p = x.segment<3>(0);
  s.v = x.segment<3>(3);
  s.b = x.segment(6, num_sats);
  s.R = Eigen::Map<const Mat3>(x.segment<9>(6 + num_sats).data());
  if (project) s.R = project_to_rotation(s.R);
  return s;
}

namespace {

Eigen::VectorXd euclidean_process(const Eigen::VectorXd& x, int S,
                                  const Vec3& accel, const Mat3& rotation,
                                  double dt) {
  Eigen::VectorXd out = x;
  out.segment<3>(0) += x.segment<3>(3) * dt + accel * (dt * dt / 2.0);
  out.segment<3>(3) += accel * dt;
  const Mat3 R = Eigen::Map<const Mat3>(x.segment<9>(6 + S).data());
  const Mat3 Rn = R * rotation;
  out.segment<9>(6 + S) = Eigen::Map<const Eigen::VectorXd>(Rn.data(), 9);
  return out;
}

Eigen::MatrixXd euclidean_process_noise(const Mat3& c_a, const Mat3& c_omega,
                                        double dt, int S) {
  const int n = S + 15;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  P.block<3, 3>(0, 0) = c_a * (dt * dt * dt * dt / 4.0);
  P.block<3, 3>(0, 3) = c_a * (dt * dt * dt / 2.0);
  P.block<3, 3>(3, 0) = c_a * (dt * dt * dt / 2.0);
  P.block<3, 3>(3, 3) = c_a * (dt * dt);
  P.block<9, 9>(6 + S, 6 + S) =
      (c_omega.norm() / (2.0 * M_PI)) * Eigen::MatrixXd::Identity(9, 9);
  return P;
}

std::vector<Eigen::VectorXd> euclidean_sigma(const Eigen::VectorXd& mean,
                                             const Eigen::MatrixXd& P,
                                             const UkfWeights& w) {
  const Eigen::MatrixXd L = std::sqrt(w.spread) * sqrt_psd(P);
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(2 * w.n_p + 1);
  pts.push_back(mean);
  for (int sign = 0; sign < 2; ++sign) {
    for (int i = 0; i < w.n_p; ++i) {
      pts.push_back(sign == 0 ? Eigen::VectorXd(mean + L.col(i))
                              : Eigen::VectorXd(mean - L.col(i)));
    }
  }
  return pts;
}

}  // namespace

EuclideanStepResult euclidean_ukf_step(const EuclideanState& state,
                                       const ImuMeasurement& imu,
                                       const Observation& measured,
                                       const StepContext& ctx, double epsilon,
                                       const Eigen::MatrixXd* oracle_sigma,
                                       const FilterConfig& cfg) {
  const int S = static_cast<int>(ctx.sats.size());
  const int R = ctx.snap.num_ris();
  const int n = S + 15;
  const int dim = Observation::dim(S, R);
  const UkfWeights w = ukf_weights(n, cfg.alpha, cfg.beta, cfg.kappa);
  const std::vector<int> az_idx = azimuth_indices(S, R);

  // Time update.
  std::vector<Eigen::VectorXd> zs = euclidean_sigma(state.x, state.P, w);
  for (Eigen::VectorXd& z : zs) {
    z = euclidean_process(z, S, imu.accel, imu.rotation, cfg.dt);
  }
  Eigen::VectorXd x_pred = Eigen::VectorXd::Zero(n);
  for (size_t i = 0; i < zs.size(); ++i) x_pred += w.w_m[i] * zs[i];
  Eigen::MatrixXd P_pred =
      euclidean_process_noise(cfg.c_a, cfg.c_omega, cfg.dt, S);
  for (size_t i = 0; i < zs.size(); ++i) {
    const Eigen::VectorXd d = zs[i] - x_pred;
    P_pred += w.w_c[i] * d * d.transpose();
  }
  P_pred = psd_project(P_pred);

  // Measurement update on a fresh sigma set.
  const std::vector<Eigen::VectorXd> xs = euclidean_sigma(x_pred, P_pred, w);
  std::vector<UeState> ue_points;
  ue_points.reserve(xs.size());
  for (const Eigen::VectorXd& x : xs) {
    ue_points.push_back(ue_from_euclidean(x, S, false));
  }
  const Eigen::MatrixXd sigma_hat = belief_assignment(
      ue_points, w.w_c, epsilon, ctx, cfg.belief, oracle_sigma, cfg);

  std::vector<Eigen::VectorXd> h(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    h[i] = assemble_observation(ue_points[i], ctx.sats, ctx.snap.riss,
                                ctx.snap.wave)
               .rho;
    if (cfg.wrap_azimuth && i > 0) align_azimuths(h[i], h[0], az_idx);
  }
  Eigen::VectorXd rho_pred = Eigen::VectorXd::Zero(dim);
  for (size_t i = 0; i < xs.size(); ++i) rho_pred += w.w_m[i] * h[i];

  Eigen::MatrixXd Q = sigma_hat;
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, dim);
  for (size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd dh = h[i] - rho_pred;
    Q += w.w_c[i] * dh * dh.transpose();
    cross += w.w_c[i] * (xs[i] - x_pred) * dh.transpose();
  }
  Q = (Q + Q.transpose()) / 2.0;

  const Eigen::MatrixXd K = kalman_gain(cross, Q);
  const Eigen::VectorXd innov =
      wrapped_innovation(measured.rho, rho_pred, az_idx, cfg.wrap_azimuth);

  EuclideanStepResult out;
  out.state.x = x_pred + K * innov;
  out.state.P = psd_project(P_pred - K * Q * K.transpose());
  const Mat3 Rb =
      Eigen::Map<const Mat3>(out.state.x.segment<9>(6 + S).data());
  out.max_orthonormality_error =
      (Rb.transpose() * Rb - Mat3::Identity()).norm();
  return out;
}

// --- Tracking loop ----------------------------------------------------------

TrackResult track(const FilterState& initial,
                  const std::vector<TimelineStep>& timeline,
                  const FilterConfig& cfg, const std::vector<UeState>* truth) {
  TrackResult out;
  out.states.push_back(initial);
  FilterState state = initial;
  for (size_t nstep = 0; nstep < timeline.size(); ++nstep) {
    const TimelineStep& step = timeline[nstep];
    try {
      const TimeUpdateResult tu = time_update(state, step.imu, cfg);
      const WeightedPointSet xs =
          sigma_points(tu.state.mean, tu.state.P, tu.weights);
      const Eigen::MatrixXd sigma_hat =
          belief_assignment(xs.points, xs.w_c, step.epsilon, step.ctx,
                            cfg.belief, &step.oracle_sigma, cfg);
      const MeasurementUpdateResult mu = measurement_update(
          tu.state, tu.propagated, xs, step.measured, sigma_hat, step.ctx,
          cfg);
      state = mu.state;
    } catch (const Error& e) {
      throw Error("track: step " + std::to_string(nstep) + ": " + e.what());
    }
    out.states.push_back(state);
    if (truth) {
      out.nees.push_back(nees(state, (*truth)[nstep]));
    }
  }
  return out;
}

EuclideanTrackResult euclidean_track(const UeState& initial_mean,
                                     const Eigen::MatrixXd& initial_p,
                                     const std::vector<TimelineStep>& timeline,
                                     const FilterConfig& cfg) {
  const int S = initial_mean.num_satellites();
  EuclideanState state = euclidean_from_ue(initial_mean);
  state.P = initial_p;
  EuclideanTrackResult out;
  for (size_t nstep = 0; nstep < timeline.size(); ++nstep) {
    const TimelineStep& step = timeline[nstep];
    try {
      const EuclideanStepResult res =
          euclidean_ukf_step(state, step.imu, step.measured, step.ctx,
                             step.epsilon, &step.oracle_sigma, cfg);
      state = res.state;
      out.orthonormality_error.push_back(res.max_orthonormality_error);
      out.projected.push_back(ue_from_euclidean(state.x, S, true));
    } catch (const Error& e) {
      throw Error("euclidean_track: step " + std::to_string(nstep) + ": " +
                  e.what());
    }
  }
  return out;
}

double nees(const FilterState& state, const UeState& truth) {
  const Eigen::VectorXd e = state_boxminus(truth, state.mean).u;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(state.P);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double cutoff = std::max(ev.maxCoeff(), 0.0) * 1e-12;
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * e;
  double out = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff) out += proj[i] * proj[i] / ev[i];
  }
  return out;
}

}  // namespace leoris
