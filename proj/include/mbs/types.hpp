// Common scalar/matrix aliases and small numeric helpers shared by all
// mbs headers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mbs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;

using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat67 = Eigen::Matrix<double, 6, 7>;
using MatX = Eigen::MatrixXd;

/// Evaluation counters for the differentials of the constraint map g and
/// the invariant map f_inv. Callers that want run statistics pass a
/// counter object down; a null pointer disables counting.
struct EvalCounters {
    std::int64_t n_g = 0;
    std::int64_t n_dg = 0;
    std::int64_t n_d2g = 0;
    std::int64_t n_d3g_fd = 0;  // finite-difference closures over d2g blocks
    std::int64_t n_f_inv = 0;
    std::int64_t n_df_inv = 0;
    std::int64_t n_d2f_inv = 0;

    EvalCounters& operator+=(const EvalCounters& o) {
        n_g += o.n_g;
        n_dg += o.n_dg;
        n_d2g += o.n_d2g;
        n_d3g_fd += o.n_d3g_fd;
        n_f_inv += o.n_f_inv;
        n_df_inv += o.n_df_inv;
        n_d2f_inv += o.n_d2f_inv;
        return *this;
    }
};

/// Max-norm of v with components weighted by 1/(1 + |ref_i|). Balances
/// mixed units (metres vs dimensionless Euler parameters) in projection
/// convergence tests.
inline double scaled_inf_norm(const VecX& v, const VecX& ref) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        m = std::max(m, std::abs(v[i]) / (1.0 + std::abs(ref[i])));
    }
    return m;
}

inline double inf_norm(const VecX& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

class ProjectionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConstraintDegeneracyError : public std::runtime_error {
  public:
    ConstraintDegeneracyError(const std::string& what, std::vector<int> rows)
        : std::runtime_error(what), offending_rows(std::move(rows)) {}
    std::vector<int> offending_rows;
};

class IntegrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace mbs
