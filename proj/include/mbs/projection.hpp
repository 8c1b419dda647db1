// Projection of near-manifold points onto M_theta, M_hc and M_inv.
//
// Quasi-orthogonal mode (the cheap cascade):
//   theta: theta = a/|a|, theta1 = a1 - <a1, theta> theta   (per body)
//   hc:    Newton on  { y + dg^T mu - a = 0, g(y) = 0 }, then the linear
//          velocity system { y1 + dg^T alpha - a1 = 0, dg y1 = 0 }
//   inv:   Newton on  { p + df_inv^T mu - a = 0, f_inv(p) = 0 }
//
// Orthogonal mode (reference): the full first-order optimality systems,
//   per body  { theta + mu1 theta + mu2 theta1 = a, theta1 + mu2 theta = a1,
//               |theta|^2 = 1, <theta, theta1> = 0 }
//   and       F(y, y1, alpha, beta) =
//               ( y + d2g(y1,.)^T alpha + dg^T beta - a,
//                 y1 + dg^T alpha - a1, dg y1, g ) = 0,
// solved by Newton with analytic dg/d2g; the single d3g-bearing Jacobian
// block is closed with central finite differences.
//
// The outer loop cycles theta -> hc -> inv until every residual family and
// the per-sweep displacement fall below tol_abs.
#pragma once

#include "invariants.hpp"

namespace mbs {

enum class ProjectionMode { Quasi, Orthogonal };

struct ProjectionConfig {
    double tol_abs = 1e-5;
    int max_outer = 20;
    int max_newton = 50;
    /// Optional inexact-Newton forcing: when > 0 an inner Newton loop may
    /// stop once the residual has dropped to forcing * (entry residual);
    /// the outer sweeps still drive everything to tol_abs.
    double forcing = 0.0;
    ProjectionMode mode = ProjectionMode::Quasi;
};

struct ProjectionReport {
    int newton_iterations = 0;
    int outer_sweeps = 0;
    bool converged = false;
    double res_theta = 0.0;
    double res_hc = 0.0;
    double res_inv = 0.0;
    EvalCounters evals;
};

class ProjectionNonConvergence : public ProjectionError {
  public:
    ProjectionNonConvergence(const std::string& what, ProjectionReport r)
        : ProjectionError(what), report(std::move(r)) {}
    ProjectionReport report;
};

// ---------------------------------------------------------------------------
// M_theta
// ---------------------------------------------------------------------------

/// Quasi-orthogonal projection onto T S^3: normalize and tangent-project.
inline EulerState project_theta(const Vec4& a, const Vec4& a1) {
    const double n = a.norm();
    if (n < 1e-12) throw ProjectionError("project_theta: degenerate input, |a| ~ 0");
    EulerState s;
    s.theta = a / n;
    s.theta1 = a1 - a1.dot(s.theta) * s.theta;
    return s;
}

inline void project_theta_inplace(SystemJet& jet) {
    for (int b = 1; b <= jet.bodies(); ++b) {
        const EulerState s = project_theta(jet.theta(b), jet.theta1(b));
        jet.set_theta(b, s.theta);
        jet.set_theta1(b, s.theta1);
    }
}

/// Orthogonal projection onto T S^3 through the full optimality system.
inline EulerState project_theta_orthogonal(const Vec4& a, const Vec4& a1,
                                           const ProjectionConfig& cfg, ProjectionReport& report) {
    EulerState s = project_theta(a, a1);  // start from the quasi projection
    double mu1 = 0.0, mu2 = 0.0;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        Eigen::Matrix<double, 10, 1> f;
        f.segment<4>(0) = s.theta + mu1 * s.theta + mu2 * s.theta1 - a;
        f.segment<4>(4) = s.theta1 + mu2 * s.theta - a1;
        f[8] = s.theta.squaredNorm() - 1.0;
        f[9] = s.theta.dot(s.theta1);
        if (f.cwiseAbs().maxCoeff() <= cfg.tol_abs * 1e-4) break;  // reference: converge tightly
        if (it == cfg.max_newton)
            throw ProjectionNonConvergence("orthogonal theta projection did not converge", report);
        Eigen::Matrix<double, 10, 10> jac = Eigen::Matrix<double, 10, 10>::Zero();
        jac.block<4, 4>(0, 0) = (1.0 + mu1) * Mat4::Identity();
        jac.block<4, 4>(0, 4) = mu2 * Mat4::Identity();
        jac.block<4, 1>(0, 8) = s.theta;
        jac.block<4, 1>(0, 9) = s.theta1;
        jac.block<4, 4>(4, 0) = mu2 * Mat4::Identity();
        jac.block<4, 4>(4, 4) = Mat4::Identity();
        jac.block<4, 1>(4, 9) = s.theta;
        jac.block<1, 4>(8, 0) = 2.0 * s.theta.transpose();
        jac.block<1, 4>(9, 0) = s.theta1.transpose();
        jac.block<1, 4>(9, 4) = s.theta.transpose();
        const Eigen::Matrix<double, 10, 1> dz = jac.partialPivLu().solve(-f);
        s.theta += dz.segment<4>(0);
        s.theta1 += dz.segment<4>(4);
        mu1 += dz[8];
        mu2 += dz[9];
        report.newton_iterations += 1;
    }
    return s;
}

// ---------------------------------------------------------------------------
// M_hc
// ---------------------------------------------------------------------------

struct HcProjectionResult {
    SystemJet jet;
    VecX alpha;  // velocity-stage multipliers
};

/// Quasi-orthogonal projection onto the holonomic-constraint manifold:
/// Newton for the configuration, one linear solve for the velocity.
inline HcProjectionResult project_hc(const SystemJet& in, const ConstraintSet& set,
                                     const ProjectionConfig& cfg, ProjectionReport& report) {
    HcProjectionResult out{in, VecX::Zero(set.ell)};
    if (set.ell == 0) return out;

    const Eigen::Index n = in.y.size();
    const Eigen::Index ell = set.ell;
    VecX y = in.y;
    VecX mu = VecX::Zero(ell);

    double entry_residual = -1.0;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        const VecX g = residual(set, y, &report.evals);
        const MatX dg = jacobian(set, y, &report.evals);
        VecX f1 = y - in.y + dg.transpose() * mu;
        const double err = std::max(scaled_inf_norm(f1, in.y), inf_norm(g));
        if (entry_residual < 0.0) entry_residual = err;
        const double stop =
            cfg.forcing > 0.0 ? std::max(cfg.tol_abs, cfg.forcing * entry_residual) : cfg.tol_abs;
        if (err <= stop) break;
        if (it == cfg.max_newton) {
            report.res_hc = err;
            throw ProjectionNonConvergence("configuration projection (M_hc) did not converge",
                                           report);
        }

        MatX jac = MatX::Zero(n + ell, n + ell);
        jac.topLeftCorner(n, n) = MatX::Identity(n, n);
        if (mu.cwiseAbs().maxCoeff() > 0.0)
            jac.topLeftCorner(n, n) += hessian_contraction(set, y, mu, &report.evals);
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
    out.jet.y = y;

    // Velocity stage: a linear system, solved exactly through its Schur
    // complement dg dg^T (SPD for full-rank dg).
    const MatX dg = jacobian(set, y, &report.evals);
    Eigen::LLT<MatX> llt(dg * dg.transpose());
    if (llt.info() != Eigen::Success)
        throw ConstraintDegeneracyError("velocity projection: dg dg^T is singular",
                                        detail::dependent_rows(dg));
    out.alpha = llt.solve(dg * in.y1);
    out.jet.y1 = in.y1 - dg.transpose() * out.alpha;
    return out;
}

/// Orthogonal projection onto M_hc: Newton on the full optimality system.
inline HcProjectionResult project_hc_orthogonal(const SystemJet& in, const ConstraintSet& set,
                                                const ProjectionConfig& cfg,
                                                ProjectionReport& report) {
    HcProjectionResult out{in, VecX::Zero(set.ell)};
    if (set.ell == 0) return out;

    const Eigen::Index n = in.y.size();
    const Eigen::Index ell = set.ell;
    VecX y = in.y, y1 = in.y1;
    VecX alpha = VecX::Zero(ell), beta = VecX::Zero(ell);

    double entry_residual = -1.0;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        const VecX g = residual(set, y, &report.evals);
        const MatX dg = jacobian(set, y, &report.evals);
        const MatX halpha = hessian_contraction(set, y, alpha, &report.evals);
        VecX f(2 * n + 2 * ell);
        f.head(n) = y - in.y + halpha * y1 + dg.transpose() * beta;
        f.segment(n, n) = y1 - in.y1 + dg.transpose() * alpha;
        f.segment(2 * n, ell) = dg * y1;
        f.tail(ell) = g;
        const double err = std::max({scaled_inf_norm(f.head(n), in.y),
                                     scaled_inf_norm(f.segment(n, n), in.y1),
                                     inf_norm(f.tail(2 * ell))});
        if (entry_residual < 0.0) entry_residual = err;
        const double stop =
            cfg.forcing > 0.0 ? std::max(cfg.tol_abs, cfg.forcing * entry_residual) : cfg.tol_abs;
        if (err <= stop) break;
        if (it == cfg.max_newton) {
            report.res_hc = err;
            throw ProjectionNonConvergence(
                "orthogonal configuration projection (M_hc) did not converge", report);
        }

        const MatX d2g_y1 = jacobian_directional(set, y, y1, &report.evals);
        MatX jac = MatX::Zero(2 * n + 2 * ell, 2 * n + 2 * ell);
        jac.block(0, 0, n, n) = MatX::Identity(n, n);
        if (beta.cwiseAbs().maxCoeff() > 0.0)
            jac.block(0, 0, n, n) += hessian_contraction(set, y, beta, &report.evals);
        if (alpha.cwiseAbs().maxCoeff() > 0.0) {
            // d3g-bearing block: central differences of y -> d2g(y1,.)^T alpha.
            report.evals.n_d3g_fd += 1;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double step = 1e-6 * (1.0 + std::abs(y[j]));
                VecX yp = y, ym = y;
                yp[j] += step;
                ym[j] -= step;
                jac.block(0, 0, n, n).col(j) +=
                    (hessian_contraction(set, yp, alpha, &report.evals) * y1 -
                     hessian_contraction(set, ym, alpha, &report.evals) * y1) /
                    (2.0 * step);
            }
        }
        jac.block(0, n, n, n) = halpha;
        jac.block(0, 2 * n, n, ell) = d2g_y1.transpose();
        jac.block(0, 2 * n + ell, n, ell) = dg.transpose();
        jac.block(n, 0, n, n) = halpha;
        jac.block(n, n, n, n) = MatX::Identity(n, n);
        jac.block(n, 2 * n, n, ell) = dg.transpose();
        jac.block(2 * n, 0, ell, n) = d2g_y1;
        jac.block(2 * n, n, ell, n) = dg;
        jac.block(2 * n + ell, 0, ell, n) = dg;

        const VecX dz = jac.partialPivLu().solve(-f);
        y += dz.head(n);
        y1 += dz.segment(n, n);
        alpha += dz.segment(2 * n, ell);
        beta += dz.tail(ell);
        report.newton_iterations += 1;
    }
    out.jet.y = y;
    out.jet.y1 = y1;
    out.alpha = alpha;
    return out;
}

// ---------------------------------------------------------------------------
// M_inv
// ---------------------------------------------------------------------------

/// Projection onto the invariant manifold f_inv = 0 (Eq. style
/// { p + df^T mu = a, f(p) = 0 }, Newton in (p, mu)).
inline SystemJet project_invariants(const SystemJet& in, const InvariantFunction& f_inv,
                                    const ProjectionConfig& cfg, ProjectionReport& report) {
    if (!f_inv.enabled()) return in;
    const Eigen::Index n = in.y.size();
    const Eigen::Index m = 2 * n;
    const Eigen::Index r = f_inv.dim;

    SystemJet p = in;
    VecX mu = VecX::Zero(r);
    VecX a(m);
    a << in.y, in.y1;

    double entry_residual = -1.0;
    for (int it = 0; it <= cfg.max_newton; ++it) {
        report.evals.n_f_inv += 1;
        const VecX fv = f_inv.value(p);
        report.evals.n_df_inv += 1;
        const MatX df = f_inv.jacobian(p);
        VecX pvec(m);
        pvec << p.y, p.y1;
        const VecX f1 = pvec - a + df.transpose() * mu;
        const double err = std::max(scaled_inf_norm(f1, a), inf_norm(fv));
        if (entry_residual < 0.0) entry_residual = err;
        const double stop =
            cfg.forcing > 0.0 ? std::max(cfg.tol_abs, cfg.forcing * entry_residual) : cfg.tol_abs;
        if (err <= stop) break;
        if (it == cfg.max_newton) {
            report.res_inv = err;
            throw ProjectionNonConvergence("invariant projection (M_inv) did not converge",
                                           report);
        }

        MatX jac = MatX::Zero(m + r, m + r);
        jac.topLeftCorner(m, m) = MatX::Identity(m, m);
        if (mu.cwiseAbs().maxCoeff() > 0.0) {
            report.evals.n_d2f_inv += 1;
            jac.topLeftCorner(m, m) += f_inv.hessian_contraction(p, mu);
        }
        jac.topRightCorner(m, r) = df.transpose();
        jac.bottomLeftCorner(r, m) = df;
        VecX f(m + r);
        f.head(m) = f1;
        f.tail(r) = fv;
        const VecX dz = jac.partialPivLu().solve(-f);
        p.y += dz.head(n);
        p.y1 += dz.segment(n, n);
        mu += dz.segment(m, r);
        report.newton_iterations += 1;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Residual families and the combined sweep
// ---------------------------------------------------------------------------

inline double residual_theta(const SystemJet& jet) {
    double m = 0.0;
    for (int b = 1; b <= jet.bodies(); ++b) {
        m = std::max(m, std::abs(jet.theta(b).squaredNorm() - 1.0));
        m = std::max(m, std::abs(jet.theta(b).dot(jet.theta1(b))));
    }
    return m;
}

inline double residual_hc(const SystemJet& jet, const ConstraintSet& set,
                          EvalCounters* counters = nullptr) {
    if (set.ell == 0) return 0.0;
    const VecX g = residual(set, jet.y, counters);
    const MatX dg = jacobian(set, jet.y, counters);
    return std::max(inf_norm(g), inf_norm(dg * jet.y1));
}

/// Combined projection onto M_theta, M_hc and (optionally) M_inv: cycles
/// the three stage projections until every residual family and the
/// per-sweep displacement are below tol_abs.
inline SystemJet project_full(const SystemJet& in, const ConstraintSet& set,
                              const InvariantFunction& f_inv, const ProjectionConfig& cfg,
                              ProjectionReport& report) {
    SystemJet p = in;
    for (int sweep = 0; sweep < cfg.max_outer; ++sweep) {
        report.outer_sweeps += 1;
        const VecX y_before = p.y, y1_before = p.y1;

        if (cfg.mode == ProjectionMode::Quasi) {
            project_theta_inplace(p);
        } else {
            for (int b = 1; b <= p.bodies(); ++b) {
                const EulerState s =
                    project_theta_orthogonal(p.theta(b), p.theta1(b), cfg, report);
                p.set_theta(b, s.theta);
                p.set_theta1(b, s.theta1);
            }
        }
        if (set.ell > 0) {
            p = (cfg.mode == ProjectionMode::Quasi ? project_hc(p, set, cfg, report)
                                                   : project_hc_orthogonal(p, set, cfg, report))
                    .jet;
        }
        p = project_invariants(p, f_inv, cfg, report);

        report.res_theta = residual_theta(p);
        report.res_hc = residual_hc(p, set, &report.evals);
        if (f_inv.enabled()) {
            report.evals.n_f_inv += 1;
            report.res_inv = inf_norm(f_inv.value(p));
        }
        const double displacement = std::max(scaled_inf_norm(p.y - y_before, y_before),
                                             scaled_inf_norm(p.y1 - y1_before, y1_before));
        if (report.res_theta <= cfg.tol_abs && report.res_hc <= cfg.tol_abs &&
            report.res_inv <= cfg.tol_abs && displacement <= cfg.tol_abs) {
            report.converged = true;
            return p;
        }
    }
    throw ProjectionNonConvergence("combined projection did not converge within max_outer sweeps",
                                   report);
}

/// Reference orthogonal projection onto M_theta and M_hc (no invariants).
inline SystemJet project_orthogonal(const SystemJet& in, const ConstraintSet& set,
                                    const ProjectionConfig& cfg, ProjectionReport& report) {
    ProjectionConfig c = cfg;
    c.mode = ProjectionMode::Orthogonal;
    return project_full(in, set, InvariantFunction{}, c, report);
}

/// Quasi-orthogonal stage projection used at integrator stage points:
/// M_theta then M_hc, one pass each (no invariants, no outer loop).
inline SystemJet project_stage(const SystemJet& in, const ConstraintSet& set,
                               const ProjectionConfig& cfg, ProjectionReport& report) {
    SystemJet p = in;
    project_theta_inplace(p);
    if (set.ell > 0) {
        ProjectionConfig c = cfg;
        c.mode = ProjectionMode::Quasi;
        p = project_hc(p, set, c, report).jet;
    }
    return p;
}

}  // namespace mbs
