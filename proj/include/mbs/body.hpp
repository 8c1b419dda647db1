// Rigid-body data and the per-body block operators of the jet-space
// equations of motion: E = diag(m I3, 4 I), the 6x7 velocity map
// Hop = diag(I3, H), the curvature correction Iop = diag(0, |theta1|^2 I4),
// and the Christoffel vector Ktilde = (0, K(theta1, theta1)).
#pragma once

#include "rotation.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mbs {

struct RigidBody {
    double mass = 1.0;
    Mat3 inertia = Mat3::Identity();  // body frame, about the centre of mass
    std::string label;

    void validate() const {
        if (!(mass > 0.0)) throw std::invalid_argument("RigidBody: mass must be positive");
        if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw std::invalid_argument("RigidBody: inertia must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("RigidBody: inertia must be positive definite");
    }
};

/// A point of the first jet space: time, configuration y and velocity y1,
/// with the per-body layout (r^(i) in R^3, theta^(i) in R^4).
struct SystemJet {
    double t = 0.0;
    VecX y;
    VecX y1;

    int bodies() const { return static_cast<int>(y.size() / 7); }

    // Body indices are 1-based to leave 0 for the fixed ground body.
    Vec3 r(int b) const { return y.segment<3>(7 * (b - 1)); }
    Vec4 theta(int b) const { return y.segment<4>(7 * (b - 1) + 3); }
    Vec3 r1(int b) const { return y1.segment<3>(7 * (b - 1)); }
    Vec4 theta1(int b) const { return y1.segment<4>(7 * (b - 1) + 3); }

    void set_r(int b, const Vec3& v) { y.segment<3>(7 * (b - 1)) = v; }
    void set_theta(int b, const Vec4& v) { y.segment<4>(7 * (b - 1) + 3) = v; }
    void set_r1(int b, const Vec3& v) { y1.segment<3>(7 * (b - 1)) = v; }
    void set_theta1(int b, const Vec4& v) { y1.segment<4>(7 * (b - 1) + 3) = v; }

    EulerState euler(int b) const { return {theta(b), theta1(b)}; }

    static SystemJet zero(int n_bodies) {
        SystemJet j;
        j.y = VecX::Zero(7 * n_bodies);
        j.y1 = VecX::Zero(7 * n_bodies);
        for (int b = 1; b <= n_bodies; ++b) j.y[7 * (b - 1) + 3] = 1.0;
        return j;
    }
};

/// External force data: uniform gravity (enters through the potential),
/// constant per-body torques in body frame and spatial forces. A hook for
/// an additional potential contribution (value and gradient w.r.t. y) is
/// provided for non-gravity potentials such as test springs.
struct ForceModel {
    Vec3 gravity = Vec3::Zero();
    std::vector<Vec3> torque;  // per body, body frame; empty means zero
    std::vector<Vec3> force;   // per body, spatial; empty means zero

    std::function<double(const VecX&)> extra_potential;
    std::function<VecX(const VecX&)> extra_potential_grad;

    Vec3 torque_of(int b) const {
        return torque.empty() ? Vec3::Zero() : torque[static_cast<size_t>(b - 1)];
    }
    Vec3 force_of(int b) const {
        return force.empty() ? Vec3::Zero() : force[static_cast<size_t>(b - 1)];
    }

    bool has_external_forces() const {
        for (const auto& t : torque)
            if (t.squaredNorm() > 0.0) return true;
        for (const auto& f : force)
            if (f.squaredNorm() > 0.0) return true;
        return false;
    }

    /// F_e = (F^(1), 2 tau^(1), ..., F^(nb), 2 tau^(nb)).
    VecX assemble_fe(int n_bodies) const {
        VecX fe = VecX::Zero(6 * n_bodies);
        for (int b = 1; b <= n_bodies; ++b) {
            fe.segment<3>(6 * (b - 1)) = force_of(b);
            fe.segment<3>(6 * (b - 1) + 3) = 2.0 * torque_of(b);
        }
        return fe;
    }
};

/// Christoffel map K(theta1, theta1) = H H1^T I H theta1.
inline Vec3 christoffel_map(const RigidBody& body, const EulerState& s) {
    const Mat34 h = h_plain(s.theta);
    const Mat34 h1 = h_plain(s.theta1);
    return h * (h1.transpose() * (body.inertia * (h * s.theta1)));
}

/// Assembled block operators at a jet point.
struct BlockOperators {
    std::vector<Mat6> E_blocks;       // diag(m I3, 4 I) per body
    MatX Hop;                         // 6nb x 7nb block diagonal of (I3, H)
    VecX Iop_diag;                    // diagonal of Iop: per body (0,0,0, |theta1|^2 x4)
    VecX Ktilde;                      // 6nb; per body (0, K(theta1, theta1))

    VecX apply_Iop(const VecX& v) const { return Iop_diag.cwiseProduct(v); }

    /// Solves E u = b per 6x6 block (direct, exact).
    VecX solve_E(const VecX& b) const {
        VecX u(b.size());
        for (size_t i = 0; i < E_blocks.size(); ++i) {
            u.segment<6>(6 * static_cast<Eigen::Index>(i)) =
                E_blocks[i].ldlt().solve(b.segment<6>(6 * static_cast<Eigen::Index>(i)));
        }
        return u;
    }
};

inline BlockOperators block_operators(const std::vector<RigidBody>& bodies, const SystemJet& jet) {
    const int nb = static_cast<int>(bodies.size());
    BlockOperators ops;
    ops.E_blocks.resize(static_cast<size_t>(nb));
    ops.Hop = MatX::Zero(6 * nb, 7 * nb);
    ops.Iop_diag = VecX::Zero(7 * nb);
    ops.Ktilde = VecX::Zero(6 * nb);
    for (int b = 1; b <= nb; ++b) {
        const RigidBody& body = bodies[static_cast<size_t>(b - 1)];
        Mat6 e = Mat6::Zero();
        e.topLeftCorner<3, 3>() = body.mass * Mat3::Identity();
        e.bottomRightCorner<3, 3>() = 4.0 * body.inertia;
        ops.E_blocks[static_cast<size_t>(b - 1)] = e;

        ops.Hop.block<3, 3>(6 * (b - 1), 7 * (b - 1)) = Mat3::Identity();
        ops.Hop.block<3, 4>(6 * (b - 1) + 3, 7 * (b - 1) + 3) = h_plain(jet.theta(b));

        ops.Iop_diag.segment<4>(7 * (b - 1) + 3).setConstant(jet.theta1(b).squaredNorm());

        ops.Ktilde.segment<3>(6 * (b - 1) + 3) = christoffel_map(body, jet.euler(b));
    }
    return ops;
}

/// Potential energy U(y) = -sum_i m_i <gravity, r^(i)> plus any hook term.
inline double potential_energy(const std::vector<RigidBody>& bodies, const ForceModel& f,
                               const VecX& y) {
    double u = 0.0;
    for (int b = 1; b <= static_cast<int>(bodies.size()); ++b) {
        u -= bodies[static_cast<size_t>(b - 1)].mass * f.gravity.dot(y.segment<3>(7 * (b - 1)));
    }
    if (f.extra_potential) u += f.extra_potential(y);
    return u;
}

inline VecX potential_gradient(const std::vector<RigidBody>& bodies, const ForceModel& f,
                               const VecX& y) {
    VecX g = VecX::Zero(y.size());
    for (int b = 1; b <= static_cast<int>(bodies.size()); ++b) {
        g.segment<3>(7 * (b - 1)) = -bodies[static_cast<size_t>(b - 1)].mass * f.gravity;
    }
    if (f.extra_potential_grad) g += f.extra_potential_grad(y);
    return g;
}

inline double kinetic_energy(const std::vector<RigidBody>& bodies, const SystemJet& jet) {
    double t = 0.0;
    for (int b = 1; b <= static_cast<int>(bodies.size()); ++b) {
        const RigidBody& body = bodies[static_cast<size_t>(b - 1)];
        const Vec3 u = h_plain(jet.theta(b)) * jet.theta1(b);
        t += 0.5 * body.mass * jet.r1(b).squaredNorm() + 2.0 * u.dot(body.inertia * u);
    }
    return t;
}

struct Energies {
    double T = 0.0;
    double U = 0.0;
    double W = 0.0;        // T + U
    double W_total = 0.0;  // T + U - W_ext
};

inline Energies energies(const std::vector<RigidBody>& bodies, const SystemJet& jet,
                         const ForceModel& f, double w_ext) {
    Energies e;
    e.T = kinetic_energy(bodies, jet);
    e.U = potential_energy(bodies, f, jet.y);
    e.W = e.T + e.U;
    e.W_total = e.W - w_ext;
    return e;
}

/// Instantaneous power of the external forces, <Hop y1, F_e>
/// = sum_i <r1, F> + 2 <H theta1, tau>. Integrating this over time gives
/// W_ext, so that W_total = T + U - W_ext stays constant.
inline double external_power(const std::vector<RigidBody>& bodies, const ForceModel& f,
                             const SystemJet& jet) {
    double p = 0.0;
    for (int b = 1; b <= static_cast<int>(bodies.size()); ++b) {
        p += jet.r1(b).dot(f.force_of(b));
        p += 2.0 * (h_plain(jet.theta(b)) * jet.theta1(b)).dot(f.torque_of(b));
    }
    return p;
}

}  // namespace mbs
