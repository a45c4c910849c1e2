#pragma once

#include <Eigen/Dense>
#include <vector>

#include "leoris/errors.hpp"

// Algebra of the compound state manifold R^3 x R^3 x R^S x SO(3):
// boxplus/boxminus encapsulation operators and weighted means of point sets.

namespace leoris {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Full state of the tracked user: position, velocity, per-satellite clock
// bias, and orientation as a rotation matrix.
struct UeState {
  Vec3 p = Vec3::Zero();              // m
  Vec3 v = Vec3::Zero();              // m/s
  Eigen::VectorXd b;                  // s, length S
  Mat3 R = Mat3::Identity();

  int num_satellites() const { return static_cast<int>(b.size()); }
  int tangent_dim() const { return static_cast<int>(b.size()) + 9; }
};

// Euclidean perturbation exchanged with UeState by boxplus/boxminus.
// Layout: [dp(3), dv(3), db(S), dw(3)], matching the process-noise blocks.
struct TangentVector {
  Eigen::VectorXd u;

  TangentVector() = default;
  explicit TangentVector(Eigen::VectorXd raw) : u(std::move(raw)) {}
  static TangentVector Zero(int num_sats) {
    return TangentVector(Eigen::VectorXd::Zero(num_sats + 9));
  }

  int num_satellites() const { return static_cast<int>(u.size()) - 9; }
  auto dp() { return u.segment<3>(0); }
  auto dv() { return u.segment<3>(3); }
  auto db() { return u.segment(6, num_satellites()); }
  auto dw() { return u.segment<3>(u.size() - 3); }
  auto dp() const { return u.segment<3>(0); }
  auto dv() const { return u.segment<3>(3); }
  auto db() const { return u.segment(6, num_satellites()); }
  auto dw() const { return u.segment<3>(u.size() - 3); }
};

// Sigma-point set with its mean/covariance weights.
struct WeightedPointSet {
  std::vector<UeState> points;
  Eigen::VectorXd w_m;
  Eigen::VectorXd w_c;
};

bool is_rotation(const Mat3& R, double tol = 1e-9);

// Rotation matrix from Euler angles (Z-Y-X convention: yaw alpha about z,
// pitch beta, roll gamma).
Mat3 euler_to_rotation(double alpha, double beta, double gamma);

// Nearest rotation matrix in Frobenius norm (polar projection).
Mat3 project_to_rotation(const Mat3& M);

// R * exp(skew(e)): applies the rotation about axis e/|e| with angle |e|.
Mat3 so3_boxplus(const Mat3& R, const Vec3& e);

// Inverse of so3_boxplus: the axis-angle vector e with so3_boxplus(Rb,e)=Ra.
// Sets *near_pi when the closed form was ill-conditioned (geodesic angle at
// pi within 1e-6 on sin) and the symmetric-part fallback was used.
Vec3 so3_boxminus(const Mat3& Ra, const Mat3& Rb, bool* near_pi = nullptr);

UeState state_boxplus(const UeState& state, const TangentVector& u);
TangentVector state_boxminus(const UeState& a, const UeState& b,
                             bool* near_pi = nullptr);

// Weighted mean of manifold points. Euclidean blocks are the weighted
// arithmetic mean; the rotation block is the fixed point of iterative
// tangent-space averaging started at the largest-weight point.
UeState manifold_mean(const Eigen::VectorXd& w_m,
                      const std::vector<UeState>& points,
                      double tol = 1e-10, int max_iters = 100);

}  // namespace leoris
