#pragma once

// Projective camera model: composition, decomposition, projection, crop
// adjustment and linear triangulation. Header-only, templated on the scalar.
//
// Conventions: world coordinates in mm (right-handed); pixel coordinates with
// the origin at the top-left corner of the detector, +u right, +v down, pixel
// (i, j) covering [i, i+1) x [j, j+1) so its center sits at (i+0.5, j+0.5).

#include <frk/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

namespace frk {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Mat34 = Eigen::Matrix<Scalar, 3, 4, Eigen::RowMajor>;
template <typename Scalar>
using Isometry3 = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

/// A 3x4 projection matrix P = [M | m] with invertible M.
template <typename Scalar>
class Camera {
 public:
  using Matrix34 = Mat34<Scalar>;

  Camera() : p_(Matrix34::Zero()) { p_.template leftCols<3>().setIdentity(); }

  /// Wraps `p` as-is. Throws DegenerateCamera when M is (numerically) singular
  /// or `p` contains non-finite values.
  explicit Camera(const Matrix34& p, bool normalized = false) : p_(p), normalized_(normalized) {
    if (!p_.allFinite()) throw Error(ErrorCode::DegenerateCamera, "camera matrix has non-finite entries", "P");
    Eigen::JacobiSVD<Mat3<Scalar>> svd(left());
    const auto& s = svd.singularValues();
    if (!(s(0) > Scalar(0)) || s(2) <= s(0) * Scalar(1e-12))
      throw Error(ErrorCode::DegenerateCamera, "left 3x3 block of P is singular", "P");
  }

  const Matrix34& matrix() const noexcept { return p_; }
  Mat3<Scalar> left() const { return p_.template leftCols<3>(); }
  Vec3<Scalar> last_column() const { return p_.col(3); }
  bool normalized() const noexcept { return normalized_; }

  /// Same projective camera scaled so that ||M.row(2)|| = 1 and det(M) > 0;
  /// the decomposed K then has K(2,2) = 1.
  Camera normalize() const {
    Scalar n = p_.row(2).template head<3>().norm();
    if (left().determinant() < Scalar(0)) n = -n;
    return Camera(p_ / n, true);
  }

  /// Camera seeing the world after it has been moved by `motion`.
  Camera transformed(const Isometry3<Scalar>& motion) const {
    Eigen::Matrix<Scalar, 4, 4> inv = motion.inverse().matrix();
    return Camera(Matrix34(p_ * inv), normalized_);
  }

  Scalar operator()(int r, int c) const { return p_(r, c); }

 private:
  Matrix34 p_;
  bool normalized_ = false;
};

template <typename Scalar>
struct CameraDecomposition {
  Mat3<Scalar> k;    ///< upper-triangular intrinsics, k(2,2) = 1, px
  Mat3<Scalar> r;    ///< world-to-camera rotation
  Vec3<Scalar> x_o;  ///< focal point (source position) in world mm
};

/// Crop of a sub-window with top-left (t_x, t_y) resampled by `scale`.
template <typename Scalar>
struct CropTransform {
  Scalar t_x = 0;
  Scalar t_y = 0;
  Scalar scale = 1;

  CropTransform() = default;
  CropTransform(Scalar tx, Scalar ty, Scalar s) : t_x(tx), t_y(ty), scale(s) {
    if (!std::isfinite(tx) || !std::isfinite(ty) || !std::isfinite(s) || s <= Scalar(0))
      throw Error(ErrorCode::InvalidInput, "crop transform requires finite offsets and scale > 0", "scale");
  }

  /// Q = diag(s, s, 1) * [[1, 0, -t_x], [0, 1, -t_y], [0, 0, 1]]
  Mat3<Scalar> q() const {
    Mat3<Scalar> m;
    m << scale, 0, -scale * t_x,
         0, scale, -scale * t_y,
         0, 0, 1;
    return m;
  }

  Vec2<Scalar> apply(const Vec2<Scalar>& uv) const {
    return Vec2<Scalar>((uv.x() - t_x) * scale, (uv.y() - t_y) * scale);
  }
};

/// P = K [R | -R X_o], scaled so that K(2,2) = 1.
template <typename Scalar>
Camera<Scalar> compose_camera(const Mat3<Scalar>& k, const Mat3<Scalar>& r, const Vec3<Scalar>& x_o) {
  if (!k.allFinite() || !r.allFinite() || !x_o.allFinite())
    throw Error(ErrorCode::InvalidInput, "non-finite camera parameters");
  if (std::abs(k(1, 0)) + std::abs(k(2, 0)) + std::abs(k(2, 1)) > Scalar(0))
    throw Error(ErrorCode::InvalidInput, "intrinsics must be upper-triangular", "K");
  if (!(k(0, 0) > 0 && k(1, 1) > 0 && k(2, 2) > 0))
    throw Error(ErrorCode::InvalidInput, "intrinsics must have a positive diagonal", "K");
  const Scalar ortho = (r.transpose() * r - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
  if (ortho > Scalar(1e-6) || r.determinant() < Scalar(0))
    throw Error(ErrorCode::InvalidInput, "R is not a rotation", "R");

  const Mat3<Scalar> kn = k / k(2, 2);
  Mat34<Scalar> p;
  p.template leftCols<3>() = kn * r;
  p.col(3) = -kn * r * x_o;
  return Camera<Scalar>(p, true);
}

/// Recovers K, R and X_o: X_o = -M^-1 m, qr(M^-1) = R^T K^-1.
template <typename Scalar>
CameraDecomposition<Scalar> decompose_camera(const Camera<Scalar>& cam) {
  Mat3<Scalar> m = cam.left();
  Vec3<Scalar> m4 = cam.last_column();
  // An overall negative scale would leave det(R) = -1 after sign fixing.
  if (m.determinant() < Scalar(0)) {
    m = -m;
    m4 = -m4;
  }
  const Mat3<Scalar> m_inv = m.inverse();
  if (!m_inv.allFinite()) throw Error(ErrorCode::DegenerateCamera, "left 3x3 block of P is singular", "P");

  CameraDecomposition<Scalar> out;
  out.x_o = -m_inv * m4;

  Eigen::HouseholderQR<Mat3<Scalar>> qr(m_inv);
  Mat3<Scalar> q = qr.householderQ();
  Mat3<Scalar> upper = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int i = 0; i < 3; ++i) {
    if (upper(i, i) < Scalar(0)) {
      upper.row(i) *= Scalar(-1);
      q.col(i) *= Scalar(-1);
    }
  }
  out.r = q.transpose();
  Mat3<Scalar> k = upper.template triangularView<Eigen::Upper>().solve(Mat3<Scalar>::Identity());
  k /= k(2, 2);
  k(1, 0) = k(2, 0) = k(2, 1) = Scalar(0);
  out.k = k;
  return out;
}

/// Dehomogenized projection of a world point.
template <typename Scalar>
Vec2<Scalar> project(const Camera<Scalar>& cam, const Vec3<Scalar>& x) {
  const auto& p = cam.matrix();
  const Vec3<Scalar> h = p.template leftCols<3>() * x + p.col(3);
  const Scalar magnitude = p.row(2).template head<3>().norm() * x.norm() + std::abs(p(2, 3));
  if (!(std::abs(h.z()) > Scalar(1e-12) * magnitude))
    throw Error(ErrorCode::PointAtInfinity, "point lies on the principal plane");
  return h.template head<2>() / h.z();
}

/// P' = Q P.
template <typename Scalar>
Camera<Scalar> adjust_for_crop(const Camera<Scalar>& cam, const CropTransform<Scalar>& crop) {
  return Camera<Scalar>(Mat34<Scalar>(crop.q() * cam.matrix()), cam.normalized());
}

/// Least-squares intersection of the rays through `centers`: the right
/// singular vector of A (rows u p3 - p1, v p3 - p2) with the smallest
/// singular value, dehomogenized.
template <typename Scalar>
Vec3<Scalar> triangulate_origin(std::span<const Camera<Scalar>> cams, std::span<const Vec2<Scalar>> centers) {
  if (cams.size() != centers.size())
    throw Error(ErrorCode::InvalidInput, "camera and center counts differ");
  if (cams.size() < 2) throw Error(ErrorCode::InsufficientViews, "triangulation needs at least 2 views");

  const auto n = static_cast<Eigen::Index>(cams.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 4> a(2 * n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = cams[static_cast<std::size_t>(i)].matrix();
    const auto& c = centers[static_cast<std::size_t>(i)];
    a.row(2 * i) = c.x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = c.y() * p.row(2) - p.row(1);
  }
  Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, 4>> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s.size() < 4 || s(2) <= s(0) * Scalar(1e-10))
    throw Error(ErrorCode::DegenerateGeometry, "triangulation system has rank < 3");
  const Eigen::Matrix<Scalar, 4, 1> x = svd.matrixV().col(3);
  if (std::abs(x(3)) < Scalar(1e-10))
    throw Error(ErrorCode::DegenerateGeometry, "rays intersect at infinity");
  return x.template head<3>() / x(3);
}

template <typename Scalar>
Vec3<Scalar> triangulate_origin(const std::vector<Camera<Scalar>>& cams, const std::vector<Vec2<Scalar>>& centers) {
  return triangulate_origin(std::span<const Camera<Scalar>>(cams), std::span<const Vec2<Scalar>>(centers));
}

using CameraMatrix = Camera<double>;
using Decomposition = CameraDecomposition<double>;
using Crop = CropTransform<double>;
using Point2 = Vec2<double>;
using Point3 = Vec3<double>;

}  // namespace frk
