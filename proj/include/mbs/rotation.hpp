// Euler-parameter algebra: the H / H-tilde matrices, rotation matrices,
// angular velocities, and the derivative maps of R(theta) used by the
// constraint differentials.
//
// Conventions: theta = (theta^0, theta^1, theta^2, theta^3) is a point of
// S^3 (unit 4-vector); the rows of H(theta) and Htilde(theta) span the
// tangent space of S^3 at theta, and R = Htilde * H^T is the rotation
// matrix represented by theta. Both H and Htilde are linear in theta, so
// R extends off the sphere as the bilinear form Htilde(u) * H(v)^T; all
// constraint derivatives below differentiate that extension.
#pragma once

#include "types.hpp"

namespace mbs {

/// The pair of 3x4 tangent-basis matrices, both linear in theta.
struct HPair {
    Mat34 Htilde;
    Mat34 H;
};

inline HPair h_matrices(const Vec4& t) {
    HPair p;
    p.Htilde << -t[1],  t[0], -t[3],  t[2],
                -t[2],  t[3],  t[0], -t[1],
                -t[3], -t[2],  t[1],  t[0];
    p.H      << -t[1],  t[0],  t[3], -t[2],
                -t[2], -t[3],  t[0],  t[1],
                -t[3],  t[2], -t[1],  t[0];
    return p;
}

inline Mat34 h_tilde(const Vec4& t) { return h_matrices(t).Htilde; }
inline Mat34 h_plain(const Vec4& t) { return h_matrices(t).H; }

/// Rotation matrix of a unit Euler parameter vector, in the explicit
/// quadratic form. Rejects non-unit input.
inline Mat3 rotation_matrix(const Vec4& t) {
    if (std::abs(t.norm() - 1.0) > 1e-6) {
        throw std::invalid_argument("rotation_matrix: theta is not a unit 4-vector (|theta| = " +
                                    std::to_string(t.norm()) + ")");
    }
    Mat3 r;
    r << t[0] * t[0] + t[1] * t[1] - 0.5, t[1] * t[2] - t[0] * t[3], t[1] * t[3] + t[0] * t[2],
         t[1] * t[2] + t[0] * t[3], t[0] * t[0] + t[2] * t[2] - 0.5, t[2] * t[3] - t[0] * t[1],
         t[1] * t[3] - t[0] * t[2], t[2] * t[3] + t[0] * t[1], t[0] * t[0] + t[3] * t[3] - 0.5;
    return 2.0 * r;
}

/// Bilinear extension of the rotation map: rotation_bilinear(t, t) agrees
/// with rotation_matrix(t) for unit t and is defined for any t.
inline Mat3 rotation_bilinear(const Vec4& u, const Vec4& v) {
    return h_tilde(u) * h_plain(v).transpose();
}

/// Unit Euler parameters and a tangent velocity for one body.
struct EulerState {
    Vec4 theta;
    Vec4 theta1;
};

/// Body angular velocity Omega = 2 H theta1.
inline Vec3 body_angular_velocity(const EulerState& s) {
    return 2.0 * (h_plain(s.theta) * s.theta1);
}

/// Spatial angular velocity omega = R Omega = 2 Htilde theta1.
inline Vec3 spatial_angular_velocity(const EulerState& s) {
    return 2.0 * (h_tilde(s.theta) * s.theta1);
}

/// Hat map: hat(w) v = w x v.
inline Mat3 hat(const Vec3& w) {
    Mat3 m;
    m <<   0.0, -w[2],  w[1],
          w[2],   0.0, -w[0],
         -w[1],  w[0],   0.0;
    return m;
}

namespace detail {
inline const HPair& basis_h(int k) {
    static const HPair b[4] = {h_matrices(Vec4::Unit(0)), h_matrices(Vec4::Unit(1)),
                               h_matrices(Vec4::Unit(2)), h_matrices(Vec4::Unit(3))};
    return b[k];
}
}  // namespace detail

/// Matrix of the linear map v -> H(v)^T w (w fixed in R^3).
inline Mat4 h_transpose_map(const Vec3& w) {
    Mat4 m;
    for (int k = 0; k < 4; ++k) m.col(k) = detail::basis_h(k).H.transpose() * w;
    return m;
}

/// Matrix of the linear map v -> Htilde(v)^T w.
inline Mat4 htilde_transpose_map(const Vec3& w) {
    Mat4 m;
    for (int k = 0; k < 4; ++k) m.col(k) = detail::basis_h(k).Htilde.transpose() * w;
    return m;
}

/// Directional derivative of theta -> R(theta) chi as a 3x4 matrix:
/// rotation_jacobian(t, chi) v = (Htilde(v) H(t)^T + Htilde(t) H(v)^T) chi.
/// Uses H(v)w = -H(w)v to fold the first term into a single Htilde call.
inline Mat34 rotation_jacobian(const Vec4& t, const Vec3& chi) {
    const HPair ht = h_matrices(t);
    return -h_tilde(ht.H.transpose() * chi) + ht.Htilde * h_transpose_map(chi);
}

/// Hessian of theta -> <mu, R(theta) chi> (symmetric 4x4).
inline Mat4 rotation_hessian(const Vec3& mu, const Vec3& chi) {
    const Mat4 x = htilde_transpose_map(mu).transpose() * h_transpose_map(chi);
    return x + x.transpose();
}

}  // namespace mbs
