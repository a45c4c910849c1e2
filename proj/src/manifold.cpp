#include "leoris/manifold.hpp"

#include <cmath>

namespace leoris {

namespace {

Mat3 skew(const Vec3& w) {
  Mat3 B;
  B << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return B;
}

}  // namespace

bool is_rotation(const Mat3& R, double tol) {
  return (R.transpose() * R - Mat3::Identity()).norm() < tol &&
         std::abs(R.determinant() - 1.0) < tol;
}

Mat3 euler_to_rotation(double alpha, double beta, double gamma) {
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  Mat3 R;
  R << ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg,
       sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg,
       -sb, cb * sg, cb * cg;
  return R;
}

Mat3 project_to_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 UVt = svd.matrixU() * svd.matrixV().transpose();
  if (UVt.determinant() < 0) {
    Mat3 D = Mat3::Identity();
    D(2, 2) = -1.0;
    return svd.matrixU() * D * svd.matrixV().transpose();
  }
  return UVt;
}

Mat3 so3_boxplus(const Mat3& R, const Vec3& e) {
  const double theta = e.norm();
  if (theta < 1e-10) return R;
  const Mat3 B = skew(e);
  double s_over_t, c_over_t2;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-5) {
    const double t2 = theta * theta;
    s_over_t = 1.0 - t2 / 6.0;
    c_over_t2 = 0.5 - t2 / 24.0;
  } else {
    s_over_t = std::sin(theta) / theta;
    c_over_t2 = (1.0 - std::cos(theta)) / (theta * theta);
  }
  const Mat3 R4 = Mat3::Identity() + s_over_t * B + c_over_t2 * B * B;
  return R * R4;
}

Vec3 so3_boxminus(const Mat3& Ra, const Mat3& Rb, bool* near_pi) {
  if (near_pi) *near_pi = false;
  const Mat3 D = Rb.transpose() * Ra;
  double cos_phi = (D.trace() - 1.0) / 2.0;
  cos_phi = std::clamp(cos_phi, -1.0, 1.0);
  const double phi = std::acos(cos_phi);
  const double sin_phi = std::sin(phi);
  const Vec3 asym(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));

  if (phi > M_PI / 2 && sin_phi < 1e-6) {
    // Closed-form prefactor phi/(2 sin phi) diverges near pi. Recover the
    // axis from the dominant eigenvector of the symmetric part, then fix
    // the sign against so3_boxplus.
    if (near_pi) *near_pi = true;
    const Mat3 sym = (D + D.transpose()) / 2.0;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sym);
    Vec3 axis = eig.eigenvectors().col(2);  // largest eigenvalue
    axis.normalize();
    const Vec3 cand = phi * axis;
    const double err_pos = (so3_boxplus(Rb, cand) - Ra).norm();
    const double err_neg = (so3_boxplus(Rb, -cand) - Ra).norm();
    return err_pos <= err_neg ? cand : -cand;
  }

  double prefactor;
  if (phi < 1e-5) {
    prefactor = 0.5 + phi * phi / 12.0;  // series limit of phi/(2 sin phi)
  } else {
    prefactor = phi / (2.0 * sin_phi);
  }
  return prefactor * asym;
}

UeState state_boxplus(const UeState& state, const TangentVector& u) {
  if (u.num_satellites() != state.num_satellites()) {
    throw DimensionMismatch("state_boxplus: tangent has " +
                            std::to_string(u.num_satellites()) +
                            " clock biases, state has " +
                            std::to_string(state.num_satellites()));
  }
  UeState out = state;
  out.p += u.dp();
  out.v += u.dv();
  out.b += u.db();
  out.R = so3_boxplus(state.R, u.dw());
  return out;
}

TangentVector state_boxminus(const UeState& a, const UeState& b,
                             bool* near_pi) {
  if (a.num_satellites() != b.num_satellites()) {
    throw DimensionMismatch("state_boxminus: clock-bias lengths differ");
  }
  TangentVector u = TangentVector::Zero(a.num_satellites());
  u.dp() = a.p - b.p;
  u.dv() = a.v - b.v;
  u.db() = a.b - b.b;
  u.dw() = so3_boxminus(a.R, b.R, near_pi);
  return u;
}

UeState manifold_mean(const Eigen::VectorXd& w_m,
                      const std::vector<UeState>& points, double tol,
                      int max_iters) {
  const int n = static_cast<int>(points.size());
  if (n < 1 || w_m.size() != n) {
    throw DimensionMismatch("manifold_mean: weights/points size mismatch");
  }
  // Weights may individually be large and negative (scaled-UKF W0); they
  // must still sum to one relative to the total mass.
  const double mass = w_m.cwiseAbs().sum();
  if (std::abs(w_m.sum() - 1.0) > 1e-9 * std::max(1.0, mass)) {
    throw DimensionMismatch("manifold_mean: weights do not sum to 1");
  }

  UeState mean = points[0];
  mean.p.setZero();
  mean.v.setZero();
  mean.b.setZero();
  for (int i = 0; i < n; ++i) {
    mean.p += w_m[i] * points[i].p;
    mean.v += w_m[i] * points[i].v;
    mean.b += w_m[i] * points[i].b;
  }

  int start = 0;
  w_m.maxCoeff(&start);
  Mat3 R = points[start].R;
  for (int iter = 0; iter < max_iters; ++iter) {
    Vec3 residual = Vec3::Zero();
    for (int i = 0; i < n; ++i) {
      residual += w_m[i] * so3_boxminus(points[i].R, R);
    }
    if (residual.norm() < tol) {
      mean.R = R;
      return mean;
    }
    R = so3_boxplus(R, residual);
  }
  throw MeanNotConverged("manifold_mean: rotation average did not converge");
}

}  // namespace leoris
