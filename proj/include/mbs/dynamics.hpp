// Computation of the dynamics distribution: at a consistent jet point the
// accelerations y2 and constraint multipliers lambda solve the saddle system
//
//   [ E        Hop dg^T ] [ d      ]   [ F_e - 8 Ktilde - Hop grad U ]
//   [ dg Hop^T     0    ] [ lambda ] = [ dg Iop y - d2g(y1, y1)      ]
//
// followed by y2 = Hop^T d - Iop y. The block system is reduced to the
// ell x ell Schur complement S = -G E^{-1} G^T with G = dg Hop^T; the E
// solves are per-body direct factorizations.
#pragma once

#include "constraints.hpp"

#include <sstream>

namespace mbs {

/// A complete mechanism: bodies, assembled constraints, and force data.
struct MultibodySystem {
    std::vector<RigidBody> bodies;
    ConstraintSet constraints;
    ForceModel forces;

    int body_count() const { return static_cast<int>(bodies.size()); }
};

struct SaddleSystem {
    std::vector<Mat6> E_blocks;
    MatX G;          // ell x 6nb
    VecX rhs_top;    // 6nb
    VecX rhs_bottom; // ell
};

struct SchurOptions {
    /// When true, the Schur system is solved by conjugate gradients on -S
    /// instead of a direct factorization (fidelity switch; converged
    /// answers are unchanged).
    bool iterative = false;
    double cg_tol = 1e-13;
    int cg_max_iter = 500;
};

namespace detail {

inline VecX solve_blocks(const std::vector<Mat6>& blocks, const VecX& b) {
    VecX u(b.size());
    for (size_t i = 0; i < blocks.size(); ++i) {
        u.segment<6>(6 * static_cast<Eigen::Index>(i)) =
            blocks[i].ldlt().solve(b.segment<6>(6 * static_cast<Eigen::Index>(i)));
    }
    return u;
}

/// Identifies rows of G that are linearly dependent (rank-revealing QR on
/// G^T); used for the degeneracy diagnostic.
inline std::vector<int> dependent_rows(const MatX& G) {
    Eigen::ColPivHouseholderQR<MatX> qr(G.transpose());
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    std::vector<int> rows;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = rank; k < G.rows(); ++k) rows.push_back(perm[k]);
    return rows;
}

[[noreturn]] inline void throw_degenerate(const MatX& G) {
    auto rows = dependent_rows(G);
    std::ostringstream os;
    os << "constraint degeneracy: Schur complement is singular; dependent constraint rows:";
    for (int r : rows) os << ' ' << r;
    throw ConstraintDegeneracyError(os.str(), rows);
}

inline VecX conjugate_gradient_spd(const MatX& A, const VecX& b, double tol, int max_iter) {
    VecX x = VecX::Zero(b.size());
    VecX r = b;
    VecX p = r;
    double rs = r.squaredNorm();
    const double stop = tol * tol * std::max(b.squaredNorm(), 1e-300);
    for (int it = 0; it < max_iter && rs > stop; ++it) {
        const VecX ap = A * p;
        const double alpha = rs / p.dot(ap);
        x += alpha * p;
        r -= alpha * ap;
        const double rs_new = r.squaredNorm();
        p = r + (rs_new / rs) * p;
        rs = rs_new;
    }
    return x;
}

}  // namespace detail

struct SchurSolution {
    VecX d;       // 6nb
    VecX lambda;  // ell
};

/// Algorithm: solve E u1 = rhs_top; v1 = G u1 - rhs_bottom;
/// solve S v2 = v1 with S = -G E^{-1} G^T; u2 = G^T v2; solve E u3 = u2;
/// (d, lambda) = (u1 + u3, -v2).
inline SchurSolution schur_solve(const SaddleSystem& sys, const SchurOptions& opts = {}) {
    SchurSolution sol;
    const VecX u1 = detail::solve_blocks(sys.E_blocks, sys.rhs_top);
    const Eigen::Index ell = sys.G.rows();
    if (ell == 0) {
        sol.d = u1;
        sol.lambda = VecX::Zero(0);
        return sol;
    }
    const VecX v1 = sys.G * u1 - sys.rhs_bottom;

    // -S = G E^{-1} G^T is symmetric positive definite when G has full row rank.
    MatX einv_gt(sys.G.cols(), ell);
    for (Eigen::Index k = 0; k < ell; ++k)
        einv_gt.col(k) = detail::solve_blocks(sys.E_blocks, sys.G.row(k).transpose());
    const MatX minus_s = sys.G * einv_gt;

    VecX v2;
    if (opts.iterative) {
        v2 = -detail::conjugate_gradient_spd(minus_s, v1, opts.cg_tol, opts.cg_max_iter);
    } else {
        Eigen::LLT<MatX> llt(minus_s);
        if (llt.info() != Eigen::Success) detail::throw_degenerate(sys.G);
        v2 = -llt.solve(v1);
    }
    // LLT does not always flag near-singular systems; verify the residual.
    if ((minus_s * (-v2) - v1).norm() > 1e-6 * (1.0 + v1.norm())) detail::throw_degenerate(sys.G);

    const VecX u2 = sys.G.transpose() * v2;
    const VecX u3 = detail::solve_blocks(sys.E_blocks, u2);
    sol.d = u1 + u3;
    sol.lambda = -v2;
    return sol;
}

struct DistributionResult {
    VecX y2;      // 7nb accelerations
    VecX lambda;  // ell multipliers
    VecX d;       // 6nb intermediate (r2, c) blocks

    // Defects of the differentiated constraints, recorded at every
    // evaluation so runs can audit |dg y2 + d2g(y1,y1)| and
    // |<theta, theta2> + |theta1|^2| cheaply.
    double constraint_defect = 0.0;
    double theta_defect = 0.0;

    bool residual_warning = false;  // input point was far off the manifold
};

/// Computes the direction field (1, y1, y2) at a jet point on M.
inline DistributionResult distribution(const MultibodySystem& sys, const SystemJet& jet,
                                       const SchurOptions& opts = {},
                                       EvalCounters* counters = nullptr,
                                       double residual_warn_tol = 1e-4) {
    const int nb = sys.body_count();
    const BlockOperators ops = block_operators(sys.bodies, jet);

    SaddleSystem saddle;
    saddle.E_blocks = ops.E_blocks;
    saddle.rhs_top = sys.forces.assemble_fe(nb) - 8.0 * ops.Ktilde -
                     ops.Hop * potential_gradient(sys.bodies, sys.forces, jet.y);

    MatX dg;
    VecX d2g_y1;
    if (sys.constraints.ell > 0) {
        dg = jacobian(sys.constraints, jet.y, counters);
        d2g_y1 = second_differential(sys.constraints, jet.y, jet.y1, counters);
        saddle.G = dg * ops.Hop.transpose();
        saddle.rhs_bottom = dg * ops.apply_Iop(jet.y) - d2g_y1;
    } else {
        saddle.G = MatX::Zero(0, 6 * nb);
        saddle.rhs_bottom = VecX::Zero(0);
    }

    const SchurSolution sol = schur_solve(saddle, opts);

    DistributionResult res;
    res.d = sol.d;
    res.lambda = sol.lambda;
    res.y2 = ops.Hop.transpose() * sol.d - ops.apply_Iop(jet.y);

    if (sys.constraints.ell > 0) {
        res.constraint_defect = inf_norm(dg * res.y2 + d2g_y1);
    }
    for (int b = 1; b <= nb; ++b) {
        const double defect =
            jet.theta(b).dot(res.y2.segment<4>(7 * (b - 1) + 3)) + jet.theta1(b).squaredNorm();
        res.theta_defect = std::max(res.theta_defect, std::abs(defect));
    }

    if (sys.constraints.ell > 0) {
        const VecX g = residual(sys.constraints, jet.y, nullptr);
        if (inf_norm(g) > residual_warn_tol) res.residual_warning = true;
    }
    return res;
}

}  // namespace mbs
