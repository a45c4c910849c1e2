#pragma once

#include <Eigen/Dense>
#include <vector>

#include "leoris/channel.hpp"

// Fisher information of the channel-parameter vector rho: stacked noise-free
// signals, finite-difference Jacobians, Slepian-Bangs assembly, Schur
// removal of the nuisance channel gains, and observation covariance.

namespace leoris {

// Everything the FIM needs about one update interval.
struct StepContext {
  std::vector<SatelliteState> sats;
  ChannelSnapshot snap;
};

struct FimOptions {
  double step_angle = 1e-6;    // rad
  double step_delay = 1e-12;   // s
  double step_doppler = 1e-3;  // Hz
  double step_gain = 1e-6;
  double step_scale = 1.0;     // multiplies all steps
  int g_begin = 1;             // transmission range, inclusive
  int g_end = 0;               // 0: through frame.transmissions
  bool parallel = false;       // OpenMP over satellites
};

struct FimMatrix {
  Eigen::MatrixXd J;                 // over rho, dim 5R + S(R+6)
  bool nuisance_pseudo_inverse = false;
  std::vector<int> blocked;          // structurally dead rho indices
  int num_sats = 0;
  int num_ris = 0;
};

struct CovarianceResult {
  Eigen::MatrixXd sigma;
  double jitter = 0.0;               // added on the equilibrated scale
  std::vector<int> floored;          // indices given the floor variance
};

// Variance assigned to observation components whose links are blocked.
inline constexpr double kBlockedFloorVariance = 1e6;

// Parameter layout of one satellite's Jacobian block:
// columns [rho_0 (5R) | rho_s (R+6) | xi_s (2(R+1))].
int local_param_count(int R);

// Per-satellite view of the rho vector.
SatLinkParams unpack_sat_block(const Observation& obs, int s);
std::vector<RisLinkParams> unpack_ris_blocks(const Observation& obs);

// Noise-free samples of satellite s over the transmission range, ordered
// subcarrier-major within transmission: l[(g-g_begin)*K + k - 1].
Eigen::VectorXcd stack_signals(int s, const Observation& rho,
                               const ChannelSnapshot& snap,
                               const FimOptions& opt = {});

// Central-difference Jacobian of the stacked signal of satellite s with
// respect to [rho_0 | rho_s | xi_s]; columns for other satellites' blocks
// are zero by construction and omitted.
Eigen::MatrixXcd jacobian(int s, const Observation& rho,
                          const ChannelSnapshot& snap,
                          const FimOptions& opt = {});

// 2*Re(D^H diag(c)^-1 D).
Eigen::MatrixXd slepian_bangs(const Eigen::MatrixXcd& D,
                              const Eigen::VectorXd& noise_diag);

// Effective noise variances of satellite s over the stacked sample order.
Eigen::VectorXd noise_diagonal(int s, const ChannelSnapshot& snap,
                               const FimOptions& opt = {});

// Full pre-Schur FIM over [rho; xi_1..xi_S].
Eigen::MatrixXd channel_fim(const UeState& state, const StepContext& ctx,
                            const FimOptions& opt = {});

// Schur complement removing the nuisance block: J = X - Y Z^-1 Y^T.
FimMatrix remove_nuisance(const Eigen::MatrixXd& j_ch, int S, int R);

// FIM of rho at the given state, with structural zero rows of blocked
// links recorded.
FimMatrix observation_fim(const UeState& state, const StepContext& ctx,
                          const FimOptions& opt = {});

// Sigma = J^-1 with equilibrated inversion, conditioning jitter, and floor
// variance on blocked components. Components whose variance exceeds the
// floor are decoupled like blocked links (constant floor diagonal, zero
// cross terms). force_floor pins the decoupled set, so a sigma-point batch
// shares one set and the weighted covariance average stays smooth.
CovarianceResult observation_covariance(
    const FimMatrix& fim, const std::vector<int>* force_floor = nullptr);
CovarianceResult observation_covariance(const UeState& state,
                                        const StepContext& ctx,
                                        const FimOptions& opt = {});

// sqrt(trace(J^-1) over the phi_D block), entries R..3R-1 of rho.
double crb_phi_d(const FimMatrix& fim, int R);

// FIMs at a batch of states, reduced in index order. The serial loop is the
// reference implementation; the parallel path must match it bitwise.
std::vector<FimMatrix> fim_at_states_serial(const std::vector<UeState>& states,
                                            const StepContext& ctx,
                                            const FimOptions& opt = {});
std::vector<FimMatrix> fim_at_states_parallel(
    const std::vector<UeState>& states, const StepContext& ctx,
    const FimOptions& opt = {});

}  // namespace leoris
