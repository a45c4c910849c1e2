#include "leoris/fim.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace leoris {

namespace {

enum class ParamKind { Doppler, Angle, Delay, Gain };

double step_for(ParamKind kind, const FimOptions& opt) {
  switch (kind) {
    case ParamKind::Doppler: return opt.step_doppler * opt.step_scale;
    case ParamKind::Angle: return opt.step_angle * opt.step_scale;
    case ParamKind::Delay: return opt.step_delay * opt.step_scale;
    case ParamKind::Gain: return opt.step_gain * opt.step_scale;
  }
  return 0.0;
}

int g_last(const FimOptions& opt, const FrameConfig& frame) {
  return opt.g_end > 0 ? opt.g_end : frame.transmissions;
}

// One propagation path split into its slowly-varying factors so that a
// single perturbed parameter only refreshes the factor it touches.
// amp(g) = scale * gain * rx[g-1] * mid[g-1].
struct PathFactors {
  cd gain;
  Eigen::VectorXcd rx;   // per transmission: w_g^H a_ue
  Eigen::VectorXcd mid;  // per transmission: transmit-side coupling
  double doppler = 0.0;
  double delay = 0.0;
};

struct PathModel {
  double scale = 0.0;
  std::vector<PathFactors> paths;  // [0]=direct, [1..R]=through RIS r
  // Per RIS: columns Gamma_g .* a_in(known aoa) and a_sat(known aod)^T f_g.
  std::vector<Eigen::MatrixXcd> gvec;
  std::vector<Eigen::VectorXcd> tx_known;
};

PathModel build_path_model(int s, const SatLinkParams& sat_lp,
                           const std::vector<RisLinkParams>& ris_lps,
                           cd alpha, const Eigen::VectorXcd& cascade,
                           const ChannelSnapshot& snap) {
  const SatLinkSnapshot& link = snap.sats[s];
  const double lam = snap.wave.wavelength();
  PathModel m;
  m.scale = std::sqrt(snap.kf_linear * snap.frame.tx_power_w /
                      (snap.kf_linear + 1.0));

  PathFactors direct;
  direct.gain = alpha;
  direct.rx = link.combiners.adjoint() *
              steering_vector(snap.ue_array, sat_lp.aoa, lam);
  direct.mid = link.precoders.transpose() *
               steering_vector(snap.sat_array, sat_lp.aod, lam);
  direct.doppler = sat_lp.doppler_hz;
  direct.delay = sat_lp.delay_s;
  m.paths.push_back(direct);

  const int R = static_cast<int>(ris_lps.size());
  m.gvec.resize(R);
  m.tx_known.resize(R);
  for (int r = 0; r < R; ++r) {
    const SatRisParams& known = snap.known(s, r);
    m.gvec[r] = snap.ris_profiles[r].array().colwise() *
                steering_vector(snap.ris_array, known.aoa, lam).array();
    m.tx_known[r] = link.precoders.transpose() *
                    steering_vector(snap.sat_array, known.aod, lam);
    PathFactors p;
    p.gain = cascade[r];
    p.rx = link.combiners.adjoint() *
           steering_vector(snap.ue_array, ris_lps[r].aoa, lam);
    p.mid = (m.gvec[r].transpose() *
             steering_vector(snap.ris_array, ris_lps[r].aod, lam))
                .cwiseProduct(m.tx_known[r]);
    p.doppler = ris_lps[r].doppler_hz + known.doppler_hz;
    p.delay = ris_lps[r].delays_s[s] + known.delay_s;
    m.paths.push_back(p);
  }
  return m;
}

Eigen::VectorXcd eval_model(const PathModel& m, const Eigen::VectorXcd& pilots,
                            const FrameConfig& frame, int g_begin, int g_end) {
  const int K = frame.subcarriers;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero((g_end - g_begin + 1) * K);
  for (const PathFactors& p : m.paths) {
    // Phase arguments are reduced to fractional cycles so that the huge
    // k*df*delay term does not eat the small Doppler signal.
    const double cyc_g =
        std::remainder(frame.symbol_duration() * p.doppler, 1.0);
    const double cyc_k =
        std::remainder(frame.subcarrier_spacing() * p.delay, 1.0);
    const cd wk = std::polar(1.0, -2.0 * M_PI * cyc_k);
    int idx = 0;
    for (int g = g_begin; g <= g_end; ++g) {
      const cd amp = m.scale * p.gain * p.rx[g - 1] * p.mid[g - 1];
      const double row_phase =
          2.0 * M_PI * std::remainder((g - 1) * cyc_g, 1.0);
      cd val = amp * std::polar(1.0, row_phase) * wk;  // k = 1 term
      for (int k = 1; k <= K; ++k) {
        out[idx++] += val;
        val *= wk;
      }
    }
  }
  int idx = 0;
  for (int g = g_begin; g <= g_end; ++g) {
    for (int k = 0; k < K; ++k) out[idx++] *= pilots[k];
  }
  return out;
}

void check_step(double value, double h) {
  if (value + h == value || value - h == value) {
    throw StepUnderflow("jacobian: finite-difference step vanishes");
  }
}

}  // namespace

int local_param_count(int R) { return 5 * R + (R + 6) + 2 * (R + 1); }

SatLinkParams unpack_sat_block(const Observation& obs, int s) {
  const int off = obs.sat_block_offset(s);
  SatLinkParams lp;
  lp.doppler_hz = obs.rho[off];
  lp.aod = obs.rho.segment<2>(off + 1);
  lp.aoa = obs.rho.segment<2>(off + 3);
  lp.delay_s = obs.rho[off + 5];
  return lp;
}

std::vector<RisLinkParams> unpack_ris_blocks(const Observation& obs) {
  const int R = obs.num_ris;
  const int S = obs.num_sats;
  std::vector<RisLinkParams> out(R);
  for (int r = 0; r < R; ++r) {
    out[r].doppler_hz = obs.rho[r];
    out[r].aod = obs.rho.segment<2>(R + 2 * r);
    out[r].aoa = obs.rho.segment<2>(3 * R + 2 * r);
    out[r].delays_s.resize(S);
    for (int s = 0; s < S; ++s) {
      out[r].delays_s[s] = obs.rho[obs.sat_block_offset(s) + 6 + r];
    }
  }
  return out;
}

Eigen::VectorXcd stack_signals(int s, const Observation& rho,
                               const ChannelSnapshot& snap,
                               const FimOptions& opt) {
  const SatLinkParams sat_lp = unpack_sat_block(rho, s);
  const std::vector<RisLinkParams> ris_lps = unpack_ris_blocks(rho);
  Eigen::VectorXcd cascade(snap.num_ris());
  for (int r = 0; r < snap.num_ris(); ++r) {
    cascade[r] = snap.ris_ue_gains[r] * snap.sats[s].sat_ris_gains[r];
  }
  const PathModel m = build_path_model(s, sat_lp, ris_lps,
                                       snap.sats[s].alpha, cascade, snap);
  return eval_model(m, snap.sats[s].pilots, snap.frame, opt.g_begin,
                    g_last(opt, snap.frame));
}

Eigen::MatrixXcd jacobian(int s, const Observation& rho,
                          const ChannelSnapshot& snap,
                          const FimOptions& opt) {
  const int R = rho.num_ris;
  const int K = snap.frame.subcarriers;
  const int gb = opt.g_begin;
  const int ge = g_last(opt, snap.frame);
  const int rows = (ge - gb + 1) * K;
  const int cols = local_param_count(R);
  const double lam = snap.wave.wavelength();
  const SatLinkSnapshot& link = snap.sats[s];

  const SatLinkParams sat_lp = unpack_sat_block(rho, s);
  const std::vector<RisLinkParams> ris_lps = unpack_ris_blocks(rho);
  Eigen::VectorXcd cascade(R);
  for (int r = 0; r < R; ++r) {
    cascade[r] = snap.ris_ue_gains[r] * link.sat_ris_gains[r];
  }
  PathModel model =
      build_path_model(s, sat_lp, ris_lps, snap.sats[s].alpha, cascade, snap);

  // Column classification over [rho_0 | rho_s | xi_s]; each perturbation
  // patches the one path factor it touches and restores it afterwards.
  Eigen::MatrixXcd D(rows, cols);
  for (int j = 0; j < cols; ++j) {
    ParamKind kind;
    if (j < R) kind = ParamKind::Doppler;                 // nu_r
    else if (j < 5 * R) kind = ParamKind::Angle;          // phi_D, phi_A
    else if (j == 5 * R) kind = ParamKind::Doppler;       // u_s
    else if (j < 5 * R + 5) kind = ParamKind::Angle;      // theta_D, theta_A
    else if (j < 5 * R + 6 + R) kind = ParamKind::Delay;  // tau_s, eps_sr
    else kind = ParamKind::Gain;

    const double h = step_for(kind, opt);
    Eigen::VectorXcd side[2];
    for (int sgn = 0; sgn < 2; ++sgn) {
      const double d = sgn == 0 ? h : -h;
      int touched = 0;  // 0 = direct path, 1 + r = RIS path
      if (j < R) {
        check_step(ris_lps[j].doppler_hz, h);
        touched = 1 + j;
      } else if (j < 3 * R) {
        touched = 1 + (j - R) / 2;
      } else if (j < 5 * R) {
        touched = 1 + (j - 3 * R) / 2;
      } else if (j >= 5 * R + 6 && j < 5 * R + 6 + R) {
        touched = 1 + (j - 5 * R - 6);
      } else if (j >= 5 * R + 6 + R) {
        touched = (j - (5 * R + 6 + R)) / 2;
      }
      const PathFactors saved = model.paths[touched];
      if (j < R) {
        model.paths[touched].doppler += d;
      } else if (j < 3 * R) {
        const int r = touched - 1;
        Eigen::Vector2d aod = ris_lps[r].aod;
        check_step(aod[(j - R) % 2], h);
        aod[(j - R) % 2] += d;
        model.paths[touched].mid =
            (model.gvec[r].transpose() *
             steering_vector(snap.ris_array, aod, lam))
                .cwiseProduct(model.tx_known[r]);
      } else if (j < 5 * R) {
        const int r = touched - 1;
        Eigen::Vector2d aoa = ris_lps[r].aoa;
        check_step(aoa[(j - 3 * R) % 2], h);
        aoa[(j - 3 * R) % 2] += d;
        model.paths[touched].rx =
            link.combiners.adjoint() *
            steering_vector(snap.ue_array, aoa, lam);
      } else if (j == 5 * R) {
        check_step(sat_lp.doppler_hz, h);
        model.paths[0].doppler += d;
      } else if (j < 5 * R + 3) {
        Eigen::Vector2d aod = sat_lp.aod;
        check_step(aod[j - 5 * R - 1], h);
        aod[j - 5 * R - 1] += d;
        model.paths[0].mid =
            link.precoders.transpose() *
            steering_vector(snap.sat_array, aod, lam);
      } else if (j < 5 * R + 5) {
        Eigen::Vector2d aoa = sat_lp.aoa;
        check_step(aoa[j - 5 * R - 3], h);
        aoa[j - 5 * R - 3] += d;
        model.paths[0].rx =
            link.combiners.adjoint() *
            steering_vector(snap.ue_array, aoa, lam);
      } else if (j == 5 * R + 5) {
        check_step(sat_lp.delay_s, h);
        model.paths[0].delay += d;
      } else if (j < 5 * R + 6 + R) {
        check_step(ris_lps[touched - 1].delays_s[s], h);
        model.paths[touched].delay += d;
      } else {
        const int q = j - (5 * R + 6 + R);
        model.paths[touched].gain += (q % 2 == 0) ? cd(d, 0.0) : cd(0.0, d);
      }
      side[sgn] = eval_model(model, link.pilots, snap.frame, gb, ge);
      model.paths[touched] = saved;
    }
    D.col(j) = (side[0] - side[1]) / (2.0 * h);
  }
  return D;
}

Eigen::MatrixXd slepian_bangs(const Eigen::MatrixXcd& D,
                              const Eigen::VectorXd& noise_diag) {
  if (noise_diag.size() != D.rows()) {
    throw DimensionMismatch("slepian_bangs: noise diagonal length");
  }
  if ((noise_diag.array() <= 0.0).any()) {
    throw SingularNoise("slepian_bangs: nonpositive noise variance");
  }
  const Eigen::MatrixXcd E =
      noise_diag.cwiseSqrt().cwiseInverse().asDiagonal() * D;
  return 2.0 * (E.adjoint() * E).real();
}

Eigen::VectorXd noise_diagonal(int s, const ChannelSnapshot& snap,
                               const FimOptions& opt) {
  const int K = snap.frame.subcarriers;
  const int gb = opt.g_begin;
  const int ge = g_last(opt, snap.frame);
  Eigen::VectorXd c((ge - gb + 1) * K);
  int idx = 0;
  for (int g = gb; g <= ge; ++g) {
    for (int k = 1; k <= K; ++k) {
      c[idx++] = effective_noise_variance(s, k, snap, g);
    }
  }
  return c;
}

Eigen::MatrixXd channel_fim(const UeState& state, const StepContext& ctx,
                            const FimOptions& opt) {
  const int S = static_cast<int>(ctx.sats.size());
  const int R = ctx.snap.num_ris();
  const Observation rho =
      assemble_observation(state, ctx.sats, ctx.snap.riss, ctx.snap.wave);
  const int rho_dim = Observation::dim(S, R);
  const int xi_dim = 2 * (R + 1);
  const int total = rho_dim + S * xi_dim;

  std::vector<Eigen::MatrixXd> local(S);
  auto compute = [&](int s) {
    local[s] = slepian_bangs(jacobian(s, rho, ctx.snap, opt),
                             noise_diagonal(s, ctx.snap, opt));
  };
  if (opt.parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int s = 0; s < S; ++s) compute(s);
  } else {
    for (int s = 0; s < S; ++s) compute(s);
  }

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(total, total);
  for (int s = 0; s < S; ++s) {
    // Global column indices of [rho_0 | rho_s | xi_s].
    std::vector<int> map(local_param_count(R));
    int m = 0;
    for (int i = 0; i < 5 * R; ++i) map[m++] = i;
    const int off = 5 * R + s * (R + 6);
    for (int i = 0; i < R + 6; ++i) map[m++] = off + i;
    for (int i = 0; i < xi_dim; ++i) map[m++] = rho_dim + s * xi_dim + i;
    for (size_t a = 0; a < map.size(); ++a) {
      for (size_t b = 0; b < map.size(); ++b) {
        J(map[a], map[b]) += local[s](a, b);
      }
    }
  }
  return J;
}

FimMatrix remove_nuisance(const Eigen::MatrixXd& j_ch, int S, int R) {
  const int rho_dim = Observation::dim(S, R);
  const int nui_dim = 2 * S * (R + 1);
  if (j_ch.rows() != rho_dim + nui_dim || j_ch.rows() != j_ch.cols()) {
    throw DimensionMismatch("remove_nuisance: bad partition sizes");
  }
  const Eigen::MatrixXd X = j_ch.topLeftCorner(rho_dim, rho_dim);
  const Eigen::MatrixXd Y = j_ch.topRightCorner(rho_dim, nui_dim);
  const Eigen::MatrixXd Z = j_ch.bottomRightCorner(nui_dim, nui_dim);

  FimMatrix out;
  out.num_sats = S;
  out.num_ris = R;
  if (nui_dim == 0) {
    out.J = X;
    return out;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      (Z + Z.transpose()) / 2.0);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  const double cutoff = lmax * 1e-12;
  Eigen::VectorXd inv_ev(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] > cutoff) {
      inv_ev[i] = 1.0 / ev[i];
    } else {
      inv_ev[i] = 0.0;
      out.nuisance_pseudo_inverse = true;
    }
  }
  const Eigen::MatrixXd z_inv = eig.eigenvectors() * inv_ev.asDiagonal() *
                                eig.eigenvectors().transpose();
  Eigen::MatrixXd J = X - Y * z_inv * Y.transpose();
  out.J = (J + J.transpose()) / 2.0;
  return out;
}

FimMatrix observation_fim(const UeState& state, const StepContext& ctx,
                          const FimOptions& opt) {
  const int S = static_cast<int>(ctx.sats.size());
  const int R = ctx.snap.num_ris();
  FimMatrix fim = remove_nuisance(channel_fim(state, ctx, opt), S, R);

  for (int r = 0; r < R; ++r) {
    bool any_path = false;
    for (int s = 0; s < S; ++s) {
      if (ctx.snap.ris_ue_gains[r] * ctx.snap.sats[s].sat_ris_gains[r] !=
          cd(0.0)) {
        any_path = true;
      }
    }
    if (!any_path) {
      fim.blocked.push_back(r);
      fim.blocked.push_back(R + 2 * r);
      fim.blocked.push_back(R + 2 * r + 1);
      fim.blocked.push_back(3 * R + 2 * r);
      fim.blocked.push_back(3 * R + 2 * r + 1);
      for (int s = 0; s < S; ++s) {
        fim.blocked.push_back(5 * R + s * (R + 6) + 6 + r);
      }
    }
  }
  for (int s = 0; s < S; ++s) {
    if (ctx.snap.sats[s].alpha == cd(0.0)) {
      const int off = 5 * R + s * (R + 6);
      for (int i = 0; i < 6; ++i) fim.blocked.push_back(off + i);
    }
  }
  for (int idx : fim.blocked) {
    fim.J.row(idx).setZero();
    fim.J.col(idx).setZero();
  }
  return fim;
}

CovarianceResult observation_covariance(const FimMatrix& fim,
                                        const std::vector<int>* force_floor) {
  const int n = static_cast<int>(fim.J.rows());
  std::vector<bool> is_blocked(n, false);
  for (int idx : fim.blocked) is_blocked[idx] = true;
  if (force_floor) {
    for (int idx : *force_floor) is_blocked[idx] = true;
  }
  std::vector<int> active;
  std::vector<int> floored;
  for (int i = 0; i < n; ++i) {
    if (is_blocked[i]) {
      floored.push_back(i);
    } else {
      active.push_back(i);
    }
  }
  const int na = static_cast<int>(active.size());

  CovarianceResult out;
  out.sigma = Eigen::MatrixXd::Zero(n, n);
  out.floored = floored;
  for (int idx : floored) out.sigma(idx, idx) = kBlockedFloorVariance;
  if (na == 0) return out;

  Eigen::MatrixXd JA(na, na);
  for (int a = 0; a < na; ++a) {
    for (int b = 0; b < na; ++b) JA(a, b) = fim.J(active[a], active[b]);
  }
  // Equilibrate to unit diagonal; the raw matrix mixes rad^-2, s^-2 and
  // Hz^-2 scales, which makes any absolute conditioning rule meaningless.
  const Eigen::VectorXd d = JA.diagonal().cwiseMax(1e-300).cwiseSqrt();
  Eigen::MatrixXd Jt = d.cwiseInverse().asDiagonal() * JA *
                       d.cwiseInverse().asDiagonal();
  Jt = (Jt + Jt.transpose()) / 2.0;

  // The jitter is always on so the covariance stays a smooth function of
  // the evaluation state; the sigma-point average would otherwise amplify
  // any on/off conditioning branch by the scaled-UKF weights.
  const double jitter = 1e-10 * Jt.trace() / na;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Jt);
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::VectorXd inv_ev = (ev.array() + jitter).inverse();
  Eigen::MatrixXd sigma_t = eig.eigenvectors() * inv_ev.asDiagonal() *
                            eig.eigenvectors().transpose();
  sigma_t = (sigma_t + sigma_t.transpose()) / 2.0;
  out.jitter = jitter;

  for (int a = 0; a < na; ++a) {
    for (int b = 0; b < na; ++b) {
      out.sigma(active[a], active[b]) = sigma_t(a, b) / (d[a] * d[b]);
    }
  }

  // Components whose variance exceeds the dead-observation floor carry no
  // usable information; decouple them like blocked links so their junk
  // cross terms cannot leak into the Kalman gain.
  if (!force_floor) {
    for (int a = 0; a < na; ++a) {
      const int idx = active[a];
      if (out.sigma(idx, idx) > kBlockedFloorVariance) {
        out.sigma.row(idx).setZero();
        out.sigma.col(idx).setZero();
        out.sigma(idx, idx) = kBlockedFloorVariance;
        out.floored.push_back(idx);
      }
    }
  }
  return out;
}

CovarianceResult observation_covariance(const UeState& state,
                                        const StepContext& ctx,
                                        const FimOptions& opt) {
  return observation_covariance(observation_fim(state, ctx, opt));
}

double crb_phi_d(const FimMatrix& fim, int R) {
  if (R < 1) throw NoRisLinks("crb_phi_d: no RIS links configured");
  const CovarianceResult cov = observation_covariance(fim);
  double tr = 0.0;
  for (int i = R; i < 3 * R; ++i) tr += cov.sigma(i, i);
  return std::sqrt(tr);
}

std::vector<FimMatrix> fim_at_states_serial(const std::vector<UeState>& states,
                                            const StepContext& ctx,
                                            const FimOptions& opt) {
  std::vector<FimMatrix> out(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    out[i] = observation_fim(states[i], ctx, opt);
  }
  return out;
}

std::vector<FimMatrix> fim_at_states_parallel(
    const std::vector<UeState>& states, const StepContext& ctx,
    const FimOptions& opt) {
  std::vector<FimMatrix> out(states.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (size_t i = 0; i < states.size(); ++i) {
    out[i] = observation_fim(states[i], ctx, opt);
  }
  return out;
}

}  // namespace leoris
