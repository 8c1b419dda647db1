// Independent planar engine. Orientations are plain angles, so the model
// collapses: per body the state is (r, beta) in R^2 x R, the mass matrix is
// E = diag(m I2, Ip), and no Christoffel term appears. The dynamics solve is
//
//   E y2 + dg^T lambda + grad U = F_e,   dg y2 = -d2g(y1, y1)
//
// with pin (coincidence) joints only. Besides being a fast 2D engine this
// module is the oracle for planar problems run through the 3D code: a
// genuinely planar 3D trajectory restricts to a planar one, with
// beta = 2 atan2(theta^3, theta^0).
#pragma once

#include "integrator.hpp"

namespace mbs::planar {

struct Body {
    double mass = 1.0;
    double inertia_p = 1.0;  // scalar inertia about the out-of-plane axis
    std::string label;
};

struct Pin {
    int body_i = 0;  // 0 = ground
    int body_j = 0;
    Vec2 chi_i = Vec2::Zero();
    Vec2 chi_j = Vec2::Zero();
};

struct Mechanism {
    std::vector<Body> bodies;
    std::vector<Pin> pins;
    Vec2 gravity = Vec2::Zero();
    std::vector<double> torque;  // scalar per body; empty = zero
    std::vector<Vec2> force;     // per body; empty = zero

    int body_count() const { return static_cast<int>(bodies.size()); }
    int ell() const { return 2 * static_cast<int>(pins.size()); }
    double torque_of(int b) const { return torque.empty() ? 0.0 : torque[static_cast<size_t>(b - 1)]; }
    Vec2 force_of(int b) const { return force.empty() ? Vec2::Zero() : force[static_cast<size_t>(b - 1)]; }
};

/// Planar jet: per body (r_x, r_y, beta), beta unwrapped in R.
struct Jet {
    double t = 0.0;
    VecX y;
    VecX y1;

    int bodies() const { return static_cast<int>(y.size() / 3); }
    Vec2 r(int b) const { return y.segment<2>(3 * (b - 1)); }
    double beta(int b) const { return y[3 * (b - 1) + 2]; }
    Vec2 r1(int b) const { return y1.segment<2>(3 * (b - 1)); }
    double beta1(int b) const { return y1[3 * (b - 1) + 2]; }

    static Jet zero(int n_bodies) {
        Jet j;
        j.y = VecX::Zero(3 * n_bodies);
        j.y1 = VecX::Zero(3 * n_bodies);
        return j;
    }
};

inline Mat2 rot2(double beta) {
    Mat2 m;
    m << std::cos(beta), -std::sin(beta), std::sin(beta), std::cos(beta);
    return m;
}

inline Mat2 rot2_deriv(double beta) {
    Mat2 m;
    m << -std::sin(beta), -std::cos(beta), std::cos(beta), -std::sin(beta);
    return m;
}

namespace detail2d {
struct BodyConfig {
    Vec2 r;
    double beta;
    bool ground;
    int col;  // -1 for ground
};
inline BodyConfig cfg(const VecX& y, int b) {
    if (b == 0) return {Vec2::Zero(), 0.0, true, -1};
    return {y.segment<2>(3 * (b - 1)), y[3 * (b - 1) + 2], false, 3 * (b - 1)};
}
}  // namespace detail2d

inline VecX residual(const Mechanism& m, const VecX& y) {
    VecX g(m.ell());
    int row = 0;
    for (const Pin& p : m.pins) {
        const auto bi = detail2d::cfg(y, p.body_i);
        const auto bj = detail2d::cfg(y, p.body_j);
        g.segment<2>(row) = bj.r + rot2(bj.beta) * p.chi_j - bi.r - rot2(bi.beta) * p.chi_i;
        row += 2;
    }
    return g;
}

inline MatX jacobian(const Mechanism& m, const VecX& y) {
    MatX dg = MatX::Zero(m.ell(), y.size());
    int row = 0;
    for (const Pin& p : m.pins) {
        const auto bi = detail2d::cfg(y, p.body_i);
        const auto bj = detail2d::cfg(y, p.body_j);
        if (!bj.ground) {
            dg.block<2, 2>(row, bj.col) = Mat2::Identity();
            dg.block<2, 1>(row, bj.col + 2) = rot2_deriv(bj.beta) * p.chi_j;
        }
        if (!bi.ground) {
            dg.block<2, 2>(row, bi.col) = -Mat2::Identity();
            dg.block<2, 1>(row, bi.col + 2) = -rot2_deriv(bi.beta) * p.chi_i;
        }
        row += 2;
    }
    return dg;
}

inline VecX second_differential(const Mechanism& m, const VecX& y, const VecX& v) {
    VecX d2(m.ell());
    int row = 0;
    for (const Pin& p : m.pins) {
        const auto bi = detail2d::cfg(y, p.body_i);
        const auto bj = detail2d::cfg(y, p.body_j);
        Vec2 acc = Vec2::Zero();
        if (!bj.ground) {
            const double vb = v[bj.col + 2];
            acc -= rot2(bj.beta) * p.chi_j * (vb * vb);
        }
        if (!bi.ground) {
            const double vb = v[bi.col + 2];
            acc += rot2(bi.beta) * p.chi_i * (vb * vb);
        }
        d2.segment<2>(row) = acc;
        row += 2;
    }
    return d2;
}

/// sum_k mu_k Hess g_k; only the (beta, beta) diagonal entries are nonzero.
inline MatX hessian_contraction(const Mechanism& m, const VecX& y, const VecX& mu) {
    MatX h = MatX::Zero(y.size(), y.size());
    int row = 0;
    for (const Pin& p : m.pins) {
        const auto bi = detail2d::cfg(y, p.body_i);
        const auto bj = detail2d::cfg(y, p.body_j);
        const Vec2 w = mu.segment<2>(row);
        if (!bj.ground) h(bj.col + 2, bj.col + 2) -= w.dot(rot2(bj.beta) * p.chi_j);
        if (!bi.ground) h(bi.col + 2, bi.col + 2) += w.dot(rot2(bi.beta) * p.chi_i);
        row += 2;
    }
    return h;
}

inline double kinetic_energy(const Mechanism& m, const Jet& jet) {
    double t = 0.0;
    for (int b = 1; b <= m.body_count(); ++b) {
        const Body& body = m.bodies[static_cast<size_t>(b - 1)];
        t += 0.5 * body.mass * jet.r1(b).squaredNorm() +
             0.5 * body.inertia_p * jet.beta1(b) * jet.beta1(b);
    }
    return t;
}

inline double potential_energy(const Mechanism& m, const VecX& y) {
    double u = 0.0;
    for (int b = 1; b <= m.body_count(); ++b)
        u -= m.bodies[static_cast<size_t>(b - 1)].mass * m.gravity.dot(y.segment<2>(3 * (b - 1)));
    return u;
}

inline double external_power(const Mechanism& m, const Jet& jet) {
    double p = 0.0;
    for (int b = 1; b <= m.body_count(); ++b)
        p += jet.r1(b).dot(m.force_of(b)) + jet.beta1(b) * m.torque_of(b);
    return p;
}

struct DistributionResult {
    VecX y2;
    VecX lambda;
};

/// Solves the planar saddle system through its Schur complement.
inline DistributionResult distribution(const Mechanism& m, const Jet& jet) {
    const int nb = m.body_count();
    VecX e_diag(3 * nb);
    VecX fe(3 * nb);
    VecX grad_u = VecX::Zero(3 * nb);
    for (int b = 1; b <= nb; ++b) {
        const Body& body = m.bodies[static_cast<size_t>(b - 1)];
        e_diag.segment<2>(3 * (b - 1)).setConstant(body.mass);
        e_diag[3 * (b - 1) + 2] = body.inertia_p;
        fe.segment<2>(3 * (b - 1)) = m.force_of(b);
        fe[3 * (b - 1) + 2] = m.torque_of(b);
        grad_u.segment<2>(3 * (b - 1)) = -body.mass * m.gravity;
    }
    const VecX b = fe - grad_u;

    DistributionResult res;
    if (m.pins.empty()) {
        res.y2 = b.cwiseQuotient(e_diag);
        res.lambda = VecX::Zero(0);
        return res;
    }
    const MatX dg = jacobian(m, jet.y);
    const VecX d2 = second_differential(m, jet.y, jet.y1);
    const MatX einv_gt = e_diag.cwiseInverse().asDiagonal() * dg.transpose();
    const MatX s = dg * einv_gt;  // dg E^{-1} dg^T, SPD for full-rank dg
    Eigen::LLT<MatX> llt(s);
    if (llt.info() != Eigen::Success)
        throw ConstraintDegeneracyError("planar constraints are rank deficient", {});
    res.lambda = llt.solve(dg * (b.cwiseQuotient(e_diag)) + d2);
    res.y2 = (b - dg.transpose() * res.lambda).cwiseQuotient(e_diag);
    return res;
}

// ---------------------------------------------------------------------------
// Projection (hc and energy; there is no theta manifold in the plane)
// ---------------------------------------------------------------------------

inline Jet project_hc(const Jet& in, const Mechanism& m, const ProjectionConfig& cfg,
                      ProjectionReport& report) {
    if (m.pins.empty()) return in;
    Jet out = in;
    const Eigen::Index n = in.y.size();
    const Eigen::Index ell = m.ell();
    VecX y = in.y;
    VecX mu = VecX::Zero(ell);
    for (int it = 0; it <= cfg.max_newton; ++it) {
        const VecX g = residual(m, y);
        const MatX dg = jacobian(m, y);
        const VecX f1 = y - in.y + dg.transpose() * mu;
        if (std::max(scaled_inf_norm(f1, in.y), inf_norm(g)) <= cfg.tol_abs) break;
        if (it == cfg.max_newton)
            throw ProjectionNonConvergence("planar configuration projection did not converge",
                                           report);
        MatX jac = MatX::Zero(n + ell, n + ell);
        jac.topLeftCorner(n, n) = MatX::Identity(n, n) + hessian_contraction(m, y, mu);
        jac.topRightCorner(n, ell) = dg.transpose();
        jac.bottomLeftCorner(ell, n) = dg;
        VecX f(n + ell);
        f.head(n) = f1;
        f.tail(ell) = g;
        const VecX dz = jac.partialPivLu().solve(-f);
        y += dz.head(n);
        mu += dz.tail(ell);
        report.newton_iterations += 1;
    }
    out.y = y;
    const MatX dg = jacobian(m, y);
    const VecX alpha = Eigen::LLT<MatX>(dg * dg.transpose()).solve(dg * in.y1);
    out.y1 = in.y1 - dg.transpose() * alpha;
    return out;
}

inline Jet project_energy(const Jet& in, const Mechanism& m, double w_ref, double w_ext_base,
                          double trapezoid_h, double power_prev, const ProjectionConfig& cfg,
                          ProjectionReport& report) {
    const Eigen::Index n = in.y.size();
    const int nb = in.bodies();
    Jet p = in;
    double mu = 0.0;
    VecX a(2 * n);
    a << in.y, in.y1;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        const double w_ext =
            w_ext_base + 0.5 * trapezoid_h * (power_prev + external_power(m, p));
        const double fv = kinetic_energy(m, p) + potential_energy(m, p.y) - w_ext - w_ref;

        VecX df = VecX::Zero(2 * n);
        for (int b = 1; b <= nb; ++b) {
            const Body& body = m.bodies[static_cast<size_t>(b - 1)];
            df.segment<2>(3 * (b - 1)) = -body.mass * m.gravity;
            df.segment<2>(n + 3 * (b - 1)) =
                body.mass * p.r1(b) - 0.5 * trapezoid_h * m.force_of(b);
            df[n + 3 * (b - 1) + 2] =
                body.inertia_p * p.beta1(b) - 0.5 * trapezoid_h * m.torque_of(b);
        }
        VecX pvec(2 * n);
        pvec << p.y, p.y1;
        const VecX f1 = pvec - a + mu * df;
        if (std::max(scaled_inf_norm(f1, a), std::abs(fv)) <= cfg.tol_abs) break;
        if (it == cfg.max_newton)
            throw ProjectionNonConvergence("planar energy projection did not converge", report);

        VecX hess_diag = VecX::Zero(2 * n);  // Hess(T); U and P have none
        for (int b = 1; b <= nb; ++b) {
            const Body& body = m.bodies[static_cast<size_t>(b - 1)];
            hess_diag.segment<2>(n + 3 * (b - 1)).setConstant(body.mass);
            hess_diag[n + 3 * (b - 1) + 2] = body.inertia_p;
        }
        MatX jac = MatX::Zero(2 * n + 1, 2 * n + 1);
        jac.topLeftCorner(2 * n, 2 * n) =
            MatX::Identity(2 * n, 2 * n) + mu * MatX(hess_diag.asDiagonal());
        jac.topRightCorner(2 * n, 1) = df;
        jac.bottomLeftCorner(1, 2 * n) = df.transpose();
        VecX f(2 * n + 1);
        f.head(2 * n) = f1;
        f[2 * n] = fv;
        const VecX dz = jac.partialPivLu().solve(-f);
        p.y += dz.head(n);
        p.y1 += dz.segment(n, n);
        mu += dz[2 * n];
        report.newton_iterations += 1;
    }
    return p;
}

inline double residual_hc(const Jet& jet, const Mechanism& m) {
    if (m.pins.empty()) return 0.0;
    return std::max(inf_norm(residual(m, jet.y)), inf_norm(jacobian(m, jet.y) * jet.y1));
}

// ---------------------------------------------------------------------------
// Time integration (same tableau and controller as the 3D engine)
// ---------------------------------------------------------------------------

inline TrajectoryRecord integrate(const Mechanism& m, const Jet& initial,
                                  const IntegratorConfig& cfg) {
    TrajectoryRecord rec;
    Jet jet = initial;
    double w_ext = 0.0;
    rec.w_total_ref = kinetic_energy(m, jet) + potential_energy(m, jet.y);
    const Eigen::Index n = jet.y.size();

    auto record_point = [&](double h_used, bool cp) {
        StepRecord r;
        r.t = jet.t;
        r.h = h_used;
        r.y = jet.y;
        r.y1 = jet.y1;
        r.T = kinetic_energy(m, jet);
        r.U = potential_energy(m, jet.y);
        r.W = r.T + r.U;
        r.W_ext = w_ext;
        r.W_total = r.W - w_ext;
        r.res_hc = residual_hc(jet, m);
        r.checkpoint = cp;
        rec.steps.push_back(r);
    };
    record_point(0.0, false);

    double h = cfg.control.h0;
    const double t_end = cfg.control.t_end;
    size_t next_cp = 0;

    auto full_project = [&](Jet p, double trap_h, double power_prev) {
        ProjectionReport rep;
        for (int sweep = 0; sweep < cfg.projection.max_outer; ++sweep) {
            const VecX yb = p.y, y1b = p.y1;
            p = project_hc(p, m, cfg.projection, rep);
            if (cfg.invariants_on)
                p = project_energy(p, m, rec.w_total_ref, w_ext, trap_h, power_prev,
                                   cfg.projection, rep);
            const double disp = std::max(scaled_inf_norm(p.y - yb, yb),
                                         scaled_inf_norm(p.y1 - y1b, y1b));
            double res_inv = 0.0;
            if (cfg.invariants_on) {
                const double we = w_ext + 0.5 * trap_h * (power_prev + external_power(m, p));
                res_inv = std::abs(kinetic_energy(m, p) + potential_energy(m, p.y) - we -
                                   rec.w_total_ref);
            }
            if (residual_hc(p, m) <= cfg.projection.tol_abs && res_inv <= cfg.projection.tol_abs &&
                disp <= cfg.projection.tol_abs) {
                rec.stats.newton_total += rep.newton_iterations;
                rec.stats.newton_max =
                    std::max<long>(rec.stats.newton_max, rep.newton_iterations);
                rec.stats.n_proj += 1;
                return p;
            }
        }
        throw ProjectionNonConvergence("planar combined projection did not converge", {});
    };

    while (jet.t < t_end * (1.0 - 1e-14)) {
        while (next_cp < cfg.checkpoints.size() && cfg.checkpoints[next_cp] <= jet.t * (1.0 + 1e-14))
            ++next_cp;
        double h_try = std::min(h, t_end - jet.t);
        bool lands_cp = false;
        if (next_cp < cfg.checkpoints.size()) {
            const double to_cp = cfg.checkpoints[next_cp] - jet.t;
            if (to_cp <= h_try * (1.0 + 1e-12)) {
                h_try = to_cp;
                lands_cp = true;
            }
        }
        if (h_try < 1e-12 * std::max(t_end, 1.0))
            throw IntegrationError("planar step size underflow at t = " + std::to_string(jet.t));

        const double power_prev = external_power(m, jet);
        bool projection_failed = false;
        double err = std::numeric_limits<double>::infinity();
        Jet j5;
        double w_ext_new = w_ext, power_new = power_prev;
        try {
            std::array<VecX, dopri::stages> k;
            VecX p0(2 * n);
            p0 << jet.y, jet.y1;
            auto deriv = [&](const Jet& p) {
                const DistributionResult d = distribution(m, p);
                rec.stats.n_dist += 1;
                VecX kk(2 * n);
                kk << p.y1, d.y2;
                return kk;
            };
            k[0] = deriv(jet);
            for (int s = 1; s < dopri::stages; ++s) {
                VecX ps = p0;
                for (int j = 0; j < s; ++j) ps += (h_try * dopri::a[s][j]) * k[j];
                Jet stage;
                stage.t = jet.t + dopri::c[s] * h_try;
                stage.y = ps.head(n);
                stage.y1 = ps.tail(n);
                ProjectionReport rep;
                stage = project_hc(stage, m, cfg.projection, rep);
                rec.stats.n_proj += 1;
                rec.stats.newton_total += rep.newton_iterations;
                k[s] = deriv(stage);
            }
            VecX p5v = p0, p4v = p0;
            for (int s = 0; s < dopri::stages; ++s) {
                p5v += (h_try * dopri::b5[s]) * k[s];
                p4v += (h_try * dopri::b4[s]) * k[s];
            }
            Jet c5, c4;
            c5.t = c4.t = jet.t + h_try;
            c5.y = p5v.head(n);
            c5.y1 = p5v.tail(n);
            c4.y = p4v.head(n);
            c4.y1 = p4v.tail(n);
            j5 = full_project(c5, h_try, power_prev);
            const Jet j4 = full_project(c4, h_try, power_prev);

            double sum = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double s5 = cfg.control.atol +
                                  cfg.control.rtol * std::max(std::abs(p0[i]), std::abs(j5.y[i]));
                const double sv = cfg.control.atol +
                                  cfg.control.rtol *
                                      std::max(std::abs(p0[n + i]), std::abs(j5.y1[i]));
                sum += std::pow((j5.y[i] - j4.y[i]) / s5, 2) +
                       std::pow((j5.y1[i] - j4.y1[i]) / sv, 2);
            }
            err = std::sqrt(sum / static_cast<double>(2 * n));
            power_new = external_power(m, j5);
            w_ext_new = w_ext + 0.5 * h_try * (power_prev + power_new);
        } catch (const ProjectionNonConvergence&) {
            projection_failed = true;
        }

        if (projection_failed) {
            rec.stats.rej_projection += 1;
            h = 0.5 * h_try;
            continue;
        }
        if (err <= 1.0) {
            rec.stats.succ_steps += 1;
            jet = j5;
            w_ext = w_ext_new;
            record_point(h_try, lands_cp || jet.t >= t_end * (1.0 - 1e-14));
        } else {
            rec.stats.rej_steps += 1;
        }
        double fac = cfg.control.safety * std::pow(std::max(err, 1e-12), -0.2);
        if (err > 1.0) fac = std::min(1.0, fac);
        h = h_try * std::min(cfg.control.fac_max, std::max(cfg.control.fac_min, fac));
    }
    rec.w_ext_final = w_ext;
    return rec;
}

// ---------------------------------------------------------------------------
// Lift / restrict between the planar and spatial formulations
// ---------------------------------------------------------------------------

inline constexpr double kPlanarityTol = 1e-8;

/// beta -> theta = (cos(beta/2), 0, 0, sin(beta/2)).
inline Vec4 theta_from_beta(double beta) {
    return {std::cos(0.5 * beta), 0.0, 0.0, std::sin(0.5 * beta)};
}

inline SystemJet lift_jet(const Jet& p) {
    const int nb = p.bodies();
    SystemJet j = SystemJet::zero(nb);
    j.t = p.t;
    for (int b = 1; b <= nb; ++b) {
        j.set_r(b, Vec3(p.r(b)[0], p.r(b)[1], 0.0));
        const double half = 0.5 * p.beta(b);
        j.set_theta(b, theta_from_beta(p.beta(b)));
        j.set_theta1(b, 0.5 * p.beta1(b) * Vec4(-std::sin(half), 0.0, 0.0, std::cos(half)));
        j.set_r1(b, Vec3(p.r1(b)[0], p.r1(b)[1], 0.0));
    }
    return j;
}

/// Inverse of lift_jet for genuinely planar 3D states. The angle comes back
/// wrapped to (-2 pi, 2 pi]; trajectory comparisons unwrap against a
/// reference.
inline Jet restrict_jet(const SystemJet& j) {
    const int nb = j.bodies();
    Jet p = Jet::zero(nb);
    p.t = j.t;
    for (int b = 1; b <= nb; ++b) {
        const Vec4 th = j.theta(b), th1 = j.theta1(b);
        const double out_of_plane =
            std::max({std::abs(j.r(b)[2]), std::abs(j.r1(b)[2]), std::abs(th[1]), std::abs(th[2]),
                      std::abs(th1[1]), std::abs(th1[2])});
        if (out_of_plane > kPlanarityTol)
            throw std::invalid_argument("restrict_jet: state is not planar (out-of-plane " +
                                        std::to_string(out_of_plane) + ")");
        p.y.segment<2>(3 * (b - 1)) = j.r(b).head<2>();
        p.y[3 * (b - 1) + 2] = 2.0 * std::atan2(th[3], th[0]);
        p.y1.segment<2>(3 * (b - 1)) = j.r1(b).head<2>();
        p.y1[3 * (b - 1) + 2] =
            2.0 * (th[0] * th1[3] - th[3] * th1[0]) / (th[0] * th[0] + th[3] * th[3]);
    }
    return p;
}

/// Lifts a planar mechanism to the spatial formulation: pins become
/// spherical joints, the scalar inertia becomes diag(Ip, Ip, Ip) (any
/// out-of-plane inertia works; planar motion only sees the (3,3) entry),
/// torques act about e3.
inline MultibodySystem lift_mechanism(const Mechanism& m) {
    MultibodySystem sys;
    for (const Body& b : m.bodies) {
        RigidBody rb;
        rb.mass = b.mass;
        rb.inertia = b.inertia_p * Mat3::Identity();
        rb.label = b.label;
        sys.bodies.push_back(rb);
    }
    for (const Pin& pin : m.pins) {
        JointSpec js;
        js.type = JointType::Spherical;
        js.body_i = pin.body_i;
        js.body_j = pin.body_j;
        js.chi_i = Vec3(pin.chi_i[0], pin.chi_i[1], 0.0);
        js.chi_j = Vec3(pin.chi_j[0], pin.chi_j[1], 0.0);
        for (const auto& prim : make_joint(js)) sys.constraints.add(prim);
    }
    sys.forces.gravity = Vec3(m.gravity[0], m.gravity[1], 0.0);
    for (int b = 1; b <= m.body_count(); ++b) {
        sys.forces.torque.push_back(Vec3(0.0, 0.0, m.torque_of(b)));
        const Vec2 f = m.force_of(b);
        sys.forces.force.push_back(Vec3(f[0], f[1], 0.0));
    }
    return sys;
}

}  // namespace mbs::planar
