// Holonomic constraints. Three primitive maps cover all supported joints:
//
//   C  (coincidence, 3 conditions):
//        g = r^(j) + R^(j) chi^(j) - r^(i) - R^(i) chi^(i)
//   SO (symmetric orthogonality, 1 condition):
//        g = <R^(i) a^(i), R^(j) a^(j)>
//   O  (nonsymmetric orthogonality, 1 condition):
//        g = <R^(i) a^(i), d^(i,j)>,  d^(i,j) = r^(j) + R^(j) chi^(j) - r^(i) - R^(i) chi^(i)
//
// Body index 0 is the fixed ground body with r = 0 and R = I; it
// contributes no unknowns. All differentials are analytic and use the
// bilinear extension R(theta) = Htilde(theta) H(theta)^T, so they are
// polynomial on the whole ambient space.
#pragma once

#include "body.hpp"

#include <optional>
#include <vector>

namespace mbs {

enum class ConstraintKind { Coincidence, SymmetricOrthogonality, Orthogonality };

struct ConstraintPrimitive {
    ConstraintKind kind;
    int body_i = 0;
    int body_j = 0;
    Vec3 chi_i = Vec3::Zero();  // C, O
    Vec3 chi_j = Vec3::Zero();  // C, O
    Vec3 a_i = Vec3::Zero();    // SO, O (axis in body-i frame)
    Vec3 a_j = Vec3::Zero();    // SO

    int conditions() const { return kind == ConstraintKind::Coincidence ? 3 : 1; }
};

/// Threshold below which the O-constraint direction d^(i,j) is treated as
/// degenerate (the constraint has a singularity when d vanishes).
inline constexpr double kOrthogonalityDegeneracyTol = 1e-10;

struct ConstraintSet {
    std::vector<ConstraintPrimitive> primitives;

    int ell = 0;  // total scalar conditions

    void add(const ConstraintPrimitive& p) {
        if (p.body_i == p.body_j)
            throw std::invalid_argument("ConstraintPrimitive: body_i must differ from body_j");
        primitives.push_back(p);
        ell += p.conditions();
    }

    bool empty() const { return primitives.empty(); }
};

namespace detail {

struct BodyConfig {
    Vec3 r;
    Vec4 theta;
    Mat3 R;      // bilinear extension Htilde(theta) H(theta)^T
    bool ground;
    int col_r;   // column offsets into y; -1 for ground
    int col_th;
};

inline BodyConfig body_config(const VecX& y, int b) {
    BodyConfig c;
    if (b == 0) {
        c.r = Vec3::Zero();
        c.theta = Vec4::Unit(0);
        c.R = Mat3::Identity();
        c.ground = true;
        c.col_r = c.col_th = -1;
    } else {
        c.r = y.segment<3>(7 * (b - 1));
        c.theta = y.segment<4>(7 * (b - 1) + 3);
        c.R = rotation_bilinear(c.theta, c.theta);
        c.ground = false;
        c.col_r = 7 * (b - 1);
        c.col_th = 7 * (b - 1) + 3;
    }
    return c;
}

// Differential of theta -> R(theta) chi at the body's theta; zero for ground.
inline Mat34 d_rchi(const BodyConfig& c, const Vec3& chi) {
    return c.ground ? Mat34::Zero() : rotation_jacobian(c.theta, chi);
}

}  // namespace detail

/// Stacked residual g(y) in primitive order. Returns the index of any
/// O-primitive whose direction d^(i,j) is degenerate through the optional
/// out-parameter; callers that treat degeneracy as an error should check it.
inline VecX residual(const ConstraintSet& set, const VecX& y, EvalCounters* counters = nullptr,
                     std::optional<int>* degenerate_primitive = nullptr) {
    if (counters) counters->n_g += 1;
    VecX g(set.ell);
    int row = 0;
    for (size_t k = 0; k < set.primitives.size(); ++k) {
        const ConstraintPrimitive& p = set.primitives[k];
        const auto bi = detail::body_config(y, p.body_i);
        const auto bj = detail::body_config(y, p.body_j);
        switch (p.kind) {
            case ConstraintKind::Coincidence: {
                g.segment<3>(row) = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
                row += 3;
                break;
            }
            case ConstraintKind::SymmetricOrthogonality: {
                g[row] = (bi.R * p.a_i).dot(bj.R * p.a_j);
                row += 1;
                break;
            }
            case ConstraintKind::Orthogonality: {
                const Vec3 d = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
                if (degenerate_primitive && d.norm() < kOrthogonalityDegeneracyTol &&
                    !degenerate_primitive->has_value()) {
                    *degenerate_primitive = static_cast<int>(k);
                }
                g[row] = (bi.R * p.a_i).dot(d);
                row += 1;
                break;
            }
        }
    }
    return g;
}

/// Analytic Jacobian dg(y), ell x 7nb; rows in primitive order, columns in
/// jet ordering (r^(1), theta^(1), ...).
inline MatX jacobian(const ConstraintSet& set, const VecX& y, EvalCounters* counters = nullptr) {
    if (counters) counters->n_dg += 1;
    const Eigen::Index n = y.size();
    MatX dg = MatX::Zero(set.ell, n);
    int row = 0;
    for (const ConstraintPrimitive& p : set.primitives) {
        const auto bi = detail::body_config(y, p.body_i);
        const auto bj = detail::body_config(y, p.body_j);
        switch (p.kind) {
            case ConstraintKind::Coincidence: {
                if (!bj.ground) {
                    dg.block<3, 3>(row, bj.col_r) = Mat3::Identity();
                    dg.block<3, 4>(row, bj.col_th) = detail::d_rchi(bj, p.chi_j);
                }
                if (!bi.ground) {
                    dg.block<3, 3>(row, bi.col_r) = -Mat3::Identity();
                    dg.block<3, 4>(row, bi.col_th) = -detail::d_rchi(bi, p.chi_i);
                }
                row += 3;
                break;
            }
            case ConstraintKind::SymmetricOrthogonality: {
                const Vec3 u = bi.R * p.a_i;
                const Vec3 w = bj.R * p.a_j;
                if (!bi.ground)
                    dg.block<1, 4>(row, bi.col_th) = w.transpose() * detail::d_rchi(bi, p.a_i);
                if (!bj.ground)
                    dg.block<1, 4>(row, bj.col_th) = u.transpose() * detail::d_rchi(bj, p.a_j);
                row += 1;
                break;
            }
            case ConstraintKind::Orthogonality: {
                const Vec3 u = bi.R * p.a_i;
                const Vec3 d = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
                if (!bj.ground) {
                    dg.block<1, 3>(row, bj.col_r) = u.transpose();
                    dg.block<1, 4>(row, bj.col_th) = u.transpose() * detail::d_rchi(bj, p.chi_j);
                }
                if (!bi.ground) {
                    dg.block<1, 3>(row, bi.col_r) = -u.transpose();
                    dg.block<1, 4>(row, bi.col_th) =
                        d.transpose() * detail::d_rchi(bi, p.a_i) -
                        u.transpose() * detail::d_rchi(bi, p.chi_i);
                }
                row += 1;
                break;
            }
        }
    }
    return dg;
}

/// The second differential as a directional derivative of the Jacobian:
/// returns d2g(v, .) as an ell x 7nb matrix (row k equals v^T Hess g_k).
/// Exact; the constraint maps are polynomial.
inline MatX jacobian_directional(const ConstraintSet& set, const VecX& y, const VecX& v,
                                 EvalCounters* counters = nullptr) {
    if (counters) counters->n_d2g += 1;
    const Eigen::Index n = y.size();
    MatX dj = MatX::Zero(set.ell, n);
    int row = 0;
    auto vtheta = [&](const detail::BodyConfig& c) -> Vec4 {
        return c.ground ? Vec4::Zero() : Vec4(v.segment<4>(c.col_th));
    };
    auto vr = [&](const detail::BodyConfig& c) -> Vec3 {
        return c.ground ? Vec3::Zero() : Vec3(v.segment<3>(c.col_r));
    };
    for (const ConstraintPrimitive& p : set.primitives) {
        const auto bi = detail::body_config(y, p.body_i);
        const auto bj = detail::body_config(y, p.body_j);
        const Vec4 vi = vtheta(bi), vj = vtheta(bj);
        switch (p.kind) {
            case ConstraintKind::Coincidence: {
                if (!bj.ground) dj.block<3, 4>(row, bj.col_th) = rotation_jacobian(vj, p.chi_j);
                if (!bi.ground) dj.block<3, 4>(row, bi.col_th) = -rotation_jacobian(vi, p.chi_i);
                row += 3;
                break;
            }
            case ConstraintKind::SymmetricOrthogonality: {
                const Vec3 u = bi.R * p.a_i;
                const Vec3 w = bj.R * p.a_j;
                const Vec3 du = detail::d_rchi(bi, p.a_i) * vi;
                const Vec3 dw = detail::d_rchi(bj, p.a_j) * vj;
                if (!bi.ground)
                    dj.block<1, 4>(row, bi.col_th) =
                        dw.transpose() * detail::d_rchi(bi, p.a_i) +
                        w.transpose() * rotation_jacobian(vi, p.a_i);
                if (!bj.ground)
                    dj.block<1, 4>(row, bj.col_th) =
                        du.transpose() * detail::d_rchi(bj, p.a_j) +
                        u.transpose() * rotation_jacobian(vj, p.a_j);
                row += 1;
                break;
            }
            case ConstraintKind::Orthogonality: {
                const Vec3 u = bi.R * p.a_i;
                const Vec3 d = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
                const Vec3 du = detail::d_rchi(bi, p.a_i) * vi;
                const Vec3 dd =
                    vr(bj) + detail::d_rchi(bj, p.chi_j) * vj - vr(bi) - detail::d_rchi(bi, p.chi_i) * vi;
                if (!bj.ground) {
                    dj.block<1, 3>(row, bj.col_r) = du.transpose();
                    dj.block<1, 4>(row, bj.col_th) =
                        du.transpose() * detail::d_rchi(bj, p.chi_j) +
                        u.transpose() * rotation_jacobian(vj, p.chi_j);
                }
                if (!bi.ground) {
                    dj.block<1, 3>(row, bi.col_r) = -du.transpose();
                    dj.block<1, 4>(row, bi.col_th) =
                        dd.transpose() * detail::d_rchi(bi, p.a_i) +
                        d.transpose() * rotation_jacobian(vi, p.a_i) -
                        du.transpose() * detail::d_rchi(bi, p.chi_i) -
                        u.transpose() * rotation_jacobian(vi, p.chi_i);
                }
                row += 1;
                break;
            }
        }
    }
    return dj;
}

/// Bilinear second differential evaluated on the diagonal: d2g(v, v).
inline VecX second_differential(const ConstraintSet& set, const VecX& y, const VecX& v,
                                EvalCounters* counters = nullptr) {
    return jacobian_directional(set, y, v, counters) * v;
}

/// Contraction of the constraint Hessians with a multiplier vector:
/// sum_k mu_k Hess g_k(y), a symmetric 7nb x 7nb matrix. This is the
/// matrix of the linear map v -> d2g(v, .)^T mu.
inline MatX hessian_contraction(const ConstraintSet& set, const VecX& y, const VecX& mu,
                                EvalCounters* counters = nullptr) {
    if (counters) counters->n_d2g += 1;
    const Eigen::Index n = y.size();
    MatX h = MatX::Zero(n, n);
    int row = 0;
    for (const ConstraintPrimitive& p : set.primitives) {
        const auto bi = detail::body_config(y, p.body_i);
        const auto bj = detail::body_config(y, p.body_j);
        switch (p.kind) {
            case ConstraintKind::Coincidence: {
                const Vec3 m = mu.segment<3>(row);
                if (!bj.ground)
                    h.block<4, 4>(bj.col_th, bj.col_th) += rotation_hessian(m, p.chi_j);
                if (!bi.ground)
                    h.block<4, 4>(bi.col_th, bi.col_th) -= rotation_hessian(m, p.chi_i);
                row += 3;
                break;
            }
            case ConstraintKind::SymmetricOrthogonality: {
                const double s = mu[row];
                const Vec3 u = bi.R * p.a_i;
                const Vec3 w = bj.R * p.a_j;
                if (!bi.ground)
                    h.block<4, 4>(bi.col_th, bi.col_th) += s * rotation_hessian(w, p.a_i);
                if (!bj.ground)
                    h.block<4, 4>(bj.col_th, bj.col_th) += s * rotation_hessian(u, p.a_j);
                if (!bi.ground && !bj.ground) {
                    const Mat4 cross = detail::d_rchi(bi, p.a_i).transpose() * detail::d_rchi(bj, p.a_j);
                    h.block<4, 4>(bi.col_th, bj.col_th) += s * cross;
                    h.block<4, 4>(bj.col_th, bi.col_th) += s * cross.transpose();
                }
                row += 1;
                break;
            }
            case ConstraintKind::Orthogonality: {
                const double s = mu[row];
                const Vec3 u = bi.R * p.a_i;
                const Vec3 d = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
                const Mat34 dui = detail::d_rchi(bi, p.a_i);
                if (!bi.ground) {
                    const Mat4 mixed = dui.transpose() * detail::d_rchi(bi, p.chi_i);
                    h.block<4, 4>(bi.col_th, bi.col_th) +=
                        s * (rotation_hessian(d, p.a_i) - mixed - mixed.transpose() -
                             rotation_hessian(u, p.chi_i));
                }
                if (!bj.ground)
                    h.block<4, 4>(bj.col_th, bj.col_th) += s * rotation_hessian(u, p.chi_j);
                if (!bi.ground && !bj.ground) {
                    const Mat4 cross = dui.transpose() * detail::d_rchi(bj, p.chi_j);
                    h.block<4, 4>(bi.col_th, bj.col_th) += s * cross;
                    h.block<4, 4>(bj.col_th, bi.col_th) += s * cross.transpose();
                }
                if (!bi.ground && !bj.ground) {
                    h.block<3, 4>(bj.col_r, bi.col_th) += s * dui;
                    h.block<4, 3>(bi.col_th, bj.col_r) += s * dui.transpose();
                }
                if (!bi.ground) {
                    h.block<3, 4>(bi.col_r, bi.col_th) -= s * dui;
                    h.block<4, 3>(bi.col_th, bi.col_r) -= s * dui.transpose();
                }
                row += 1;
                break;
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Joint catalogue
// ---------------------------------------------------------------------------

enum class JointType { Spherical, Universal, Revolute, Cylindrical, Translational };

struct JointSpec {
    JointType type;
    int body_i = 0;
    int body_j = 0;
    Vec3 chi_i = Vec3::Zero();
    Vec3 chi_j = Vec3::Zero();
    std::optional<Vec3> a_i, b_i, a_j, b_j;
};

inline const char* joint_type_name(JointType t) {
    switch (t) {
        case JointType::Spherical: return "spherical";
        case JointType::Universal: return "universal";
        case JointType::Revolute: return "revolute";
        case JointType::Cylindrical: return "cylindrical";
        case JointType::Translational: return "translational";
    }
    return "?";
}

/// Expands a joint into its primitive constraints. The orthogonality
/// primitives are taken from the ordered lists
///   SO: (a_i, a_j), (b_i, a_j), (a_i, b_j)
///   O:  (a_i, d),   (b_i, d)
/// starting from the left, as many as the joint type requires.
inline std::vector<ConstraintPrimitive> make_joint(const JointSpec& j) {
    auto need = [&](const std::optional<Vec3>& v, const char* name) -> Vec3 {
        if (!v)
            throw std::invalid_argument(std::string("joint '") + joint_type_name(j.type) +
                                        "' requires axis vector " + name);
        if (std::abs(v->norm() - 1.0) > 1e-12)
            throw std::invalid_argument(std::string("joint axis ") + name + " must be unit length");
        return *v;
    };
    auto C = [&]() {
        ConstraintPrimitive p;
        p.kind = ConstraintKind::Coincidence;
        p.body_i = j.body_i;
        p.body_j = j.body_j;
        p.chi_i = j.chi_i;
        p.chi_j = j.chi_j;
        return p;
    };
    auto SO = [&](const Vec3& ai, const Vec3& aj) {
        ConstraintPrimitive p;
        p.kind = ConstraintKind::SymmetricOrthogonality;
        p.body_i = j.body_i;
        p.body_j = j.body_j;
        p.a_i = ai;
        p.a_j = aj;
        return p;
    };
    auto O = [&](const Vec3& ai) {
        ConstraintPrimitive p;
        p.kind = ConstraintKind::Orthogonality;
        p.body_i = j.body_i;
        p.body_j = j.body_j;
        p.a_i = ai;
        p.chi_i = j.chi_i;
        p.chi_j = j.chi_j;
        return p;
    };

    std::vector<ConstraintPrimitive> out;
    switch (j.type) {
        case JointType::Spherical:
            out = {C()};
            break;
        case JointType::Universal:
            out = {C(), SO(need(j.a_i, "a_i"), need(j.a_j, "a_j"))};
            break;
        case JointType::Revolute:
            out = {C(), SO(need(j.a_i, "a_i"), need(j.a_j, "a_j")),
                   SO(need(j.b_i, "b_i"), need(j.a_j, "a_j"))};
            break;
        case JointType::Cylindrical:
            out = {SO(need(j.a_i, "a_i"), need(j.a_j, "a_j")),
                   SO(need(j.b_i, "b_i"), need(j.a_j, "a_j")), O(need(j.a_i, "a_i")),
                   O(need(j.b_i, "b_i"))};
            break;
        case JointType::Translational:
            out = {SO(need(j.a_i, "a_i"), need(j.a_j, "a_j")),
                   SO(need(j.b_i, "b_i"), need(j.a_j, "a_j")),
                   SO(need(j.a_i, "a_i"), need(j.b_j, "b_j")), O(need(j.a_i, "a_i")),
                   O(need(j.b_i, "b_i"))};
            break;
    }
    return out;
}

}  // namespace mbs
