// Invariants f_inv : J_1(E) -> R^r enforced by projection. Unlike
// constraints they carry no Lagrange multipliers in the dynamics; they only
// define the manifold M_inv the integrator projects accepted points onto.
//
// The stock invariant is energy: f = T + U - W_ext - W_ref, where W_ext is
// accumulated with the trapezoidal rule. During a step of size h the
// candidate point's own power enters the trapezoid, so the step-local
// invariant closes over (w_ext_prev, power_prev, h).
#pragma once

#include "dynamics.hpp"

namespace mbs {

/// An invariant map with analytic first derivative and Hessian contraction.
/// jacobian is dim x 14nb (derivative w.r.t. the stacked point (y, y1));
/// hessian_contraction(p, mu) = sum_k mu_k Hess f_k(p), 14nb x 14nb.
struct InvariantFunction {
    int dim = 0;
    std::function<VecX(const SystemJet&)> value;
    std::function<MatX(const SystemJet&)> jacobian;
    std::function<MatX(const SystemJet&, const VecX&)> hessian_contraction;

    bool enabled() const { return dim > 0; }
};

namespace detail {

inline VecX energy_gradient(const MultibodySystem& sys, const SystemJet& jet) {
    const int nb = sys.body_count();
    VecX g = VecX::Zero(14 * nb);
    g.head(7 * nb) = potential_gradient(sys.bodies, sys.forces, jet.y);
    for (int b = 1; b <= nb; ++b) {
        const RigidBody& body = sys.bodies[static_cast<size_t>(b - 1)];
        const Mat34 h = h_plain(jet.theta(b));
        const Mat34 h1 = h_plain(jet.theta1(b));
        const Vec3 iu = body.inertia * (h * jet.theta1(b));
        g.segment<4>(7 * (b - 1) + 3) += -4.0 * (h1.transpose() * iu);
        g.segment<3>(7 * nb + 7 * (b - 1)) = body.mass * jet.r1(b);
        g.segment<4>(7 * nb + 7 * (b - 1) + 3) = 4.0 * (h.transpose() * iu);
    }
    return g;
}

inline MatX energy_hessian(const MultibodySystem& sys, const SystemJet& jet) {
    const int nb = sys.body_count();
    MatX hess = MatX::Zero(14 * nb, 14 * nb);
    for (int b = 1; b <= nb; ++b) {
        const RigidBody& body = sys.bodies[static_cast<size_t>(b - 1)];
        const Mat34 h = h_plain(jet.theta(b));
        const Mat34 h1 = h_plain(jet.theta1(b));
        const Vec3 iu = body.inertia * (h * jet.theta1(b));
        const Mat4 ghat = h_transpose_map(iu);  // v -> H(v)^T (I u), antisymmetric
        const int th = 7 * (b - 1) + 3;
        const int r1 = 7 * nb + 7 * (b - 1);
        const int th1 = r1 + 3;
        hess.block<4, 4>(th, th) = 4.0 * h1.transpose() * body.inertia * h1;
        hess.block<4, 4>(th1, th1) = 4.0 * h.transpose() * body.inertia * h;
        hess.block<3, 3>(r1, r1) = body.mass * Mat3::Identity();
        const Mat4 cross = -4.0 * (ghat + h1.transpose() * body.inertia * h);
        hess.block<4, 4>(th, th1) = cross;
        hess.block<4, 4>(th1, th) = cross.transpose();
    }
    if (sys.forces.extra_potential_grad) {
        // Hook potentials provide only gradients; close the Hessian block
        // by central differences of the gradient.
        const Eigen::Index n = 7 * nb;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double step = 1e-6 * (1.0 + std::abs(jet.y[j]));
            VecX yp = jet.y, ym = jet.y;
            yp[j] += step;
            ym[j] -= step;
            hess.col(j).head(n) +=
                (sys.forces.extra_potential_grad(yp) - sys.forces.extra_potential_grad(ym)) /
                (2.0 * step);
        }
    }
    return hess;
}

inline VecX power_gradient(const MultibodySystem& sys, const SystemJet& jet) {
    const int nb = sys.body_count();
    VecX g = VecX::Zero(14 * nb);
    for (int b = 1; b <= nb; ++b) {
        const Vec3 tau = sys.forces.torque_of(b);
        const Mat34 h = h_plain(jet.theta(b));
        const Mat34 h1 = h_plain(jet.theta1(b));
        g.segment<4>(7 * (b - 1) + 3) = -2.0 * (h1.transpose() * tau);
        g.segment<3>(7 * nb + 7 * (b - 1)) = sys.forces.force_of(b);
        g.segment<4>(7 * nb + 7 * (b - 1) + 3) = 2.0 * (h.transpose() * tau);
    }
    return g;
}

inline MatX power_hessian(const MultibodySystem& sys, const SystemJet& jet) {
    const int nb = sys.body_count();
    MatX hess = MatX::Zero(14 * nb, 14 * nb);
    (void)jet;
    for (int b = 1; b <= nb; ++b) {
        const Vec3 tau = sys.forces.torque_of(b);
        const Mat4 ghat = h_transpose_map(tau);
        const int th = 7 * (b - 1) + 3;
        const int th1 = 7 * nb + 7 * (b - 1) + 3;
        hess.block<4, 4>(th, th1) = -2.0 * ghat;
        hess.block<4, 4>(th1, th) = 2.0 * ghat;
    }
    return hess;
}

}  // namespace detail

/// Energy invariant f = T + U - W_ext - w_ref with
/// W_ext = w_ext_base + (h/2) (power_prev + P(p)). Pass trapezoid_h = 0 for
/// a frozen W_ext (no dependence of the trapezoid term on the point).
inline InvariantFunction energy_invariant(const MultibodySystem& sys, double w_ref,
                                          double w_ext_base = 0.0, double trapezoid_h = 0.0,
                                          double power_prev = 0.0) {
    InvariantFunction f;
    f.dim = 1;
    f.value = [&sys, w_ref, w_ext_base, trapezoid_h, power_prev](const SystemJet& jet) {
        const double w_ext =
            w_ext_base + 0.5 * trapezoid_h * (power_prev + external_power(sys.bodies, sys.forces, jet));
        VecX v(1);
        v[0] = kinetic_energy(sys.bodies, jet) + potential_energy(sys.bodies, sys.forces, jet.y) -
               w_ext - w_ref;
        return v;
    };
    f.jacobian = [&sys, trapezoid_h](const SystemJet& jet) {
        VecX g = detail::energy_gradient(sys, jet);
        if (trapezoid_h != 0.0) g -= 0.5 * trapezoid_h * detail::power_gradient(sys, jet);
        return MatX(g.transpose());
    };
    f.hessian_contraction = [&sys, trapezoid_h](const SystemJet& jet, const VecX& mu) {
        MatX h = detail::energy_hessian(sys, jet);
        if (trapezoid_h != 0.0) h -= 0.5 * trapezoid_h * detail::power_hessian(sys, jet);
        return MatX(mu[0] * h);
    };
    return f;
}

}  // namespace mbs
