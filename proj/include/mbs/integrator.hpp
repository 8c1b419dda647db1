// Dormand-Prince 5(4) embedded Runge-Kutta on the jet space. The advanced
// state is the pair (y, y1); stage derivatives (y1, y2) come from the
// dynamics distribution evaluated at stage points that were first pushed
// back onto M_theta and M_hc with the quasi-orthogonal projection. The
// 5th-order candidate and its 4th-order companion are each fully projected
// (including M_inv when the energy invariant is enforced) before the
// embedded error estimate is formed, so accepted points are consistent by
// construction and constraint drift cannot accumulate.
//
// FSAL reuse is disabled: the post-step projection moves the accepted
// point, so the saved last-stage derivative would not match it.
#pragma once

#include "projection.hpp"

#include <array>
#include <functional>
#include <limits>
#include <vector>

namespace mbs {

struct StepControl {
    double atol = 1e-6;
    double rtol = 1e-6;
    double h0 = 0.25;
    double fac_max = 3.0;
    double fac_min = 0.2;
    double safety = 0.9;
    double t_end = 10.0;
};

struct IntegratorConfig {
    StepControl control;
    ProjectionConfig projection;
    bool invariants_on = true;
    SchurOptions schur;
    /// Sorted times the integrator must land on exactly (used to compare
    /// trajectories across runs at matched output times).
    std::vector<double> checkpoints;
};

namespace dopri {
// Dormand-Prince 5(4) coefficients.
inline constexpr int stages = 7;
inline constexpr double c[stages] = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
inline constexpr double a[stages][stages] = {
    {},
    {1.0 / 5.0},
    {3.0 / 40.0, 9.0 / 40.0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0}};
inline constexpr double b5[stages] = {35.0 / 384.0,     0.0,  500.0 / 1113.0, 125.0 / 192.0,
                                      -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
inline constexpr double b4[stages] = {5179.0 / 57600.0,     0.0,           7571.0 / 16695.0,
                                      393.0 / 640.0,        -92097.0 / 339200.0,
                                      187.0 / 2100.0,       1.0 / 40.0};
}  // namespace dopri

struct StepRecord {
    double t = 0.0;
    double h = 0.0;
    VecX y;
    VecX y1;
    double T = 0.0, U = 0.0, W = 0.0, W_ext = 0.0, W_total = 0.0;
    double res_hc = 0.0;
    double res_theta = 0.0;
    int newton_iters = 0;
    bool checkpoint = false;
};

struct RunStats {
    long succ_steps = 0;
    long rej_steps = 0;       // rejected by the error estimate
    long rej_projection = 0;  // rejected because a projection failed
    long n_dist = 0;
    long n_proj = 0;
    long newton_total = 0;
    long newton_max = 0;  // largest iteration count of a single projection call
    EvalCounters evals;
    double dist_defect_max = 0.0;   // max |dg y2 + d2g(y1,y1)| over the run
    double theta_defect_max = 0.0;  // max |<theta,theta2> + |theta1|^2|
    double wall_time = 0.0;

    double newton_avg() const {
        return n_proj > 0 ? static_cast<double>(newton_total) / static_cast<double>(n_proj) : 0.0;
    }
};

struct TrajectoryRecord {
    std::vector<StepRecord> steps;
    RunStats stats;
    SystemJet final_jet;
    double w_ext_final = 0.0;
    double w_total_ref = 0.0;
};

using StepSink = std::function<void(const StepRecord&)>;

struct StepOutcome {
    bool accepted = false;
    bool projection_failed = false;
    double err = std::numeric_limits<double>::infinity();
    SystemJet jet;  // fully projected 5th-order candidate
    double power = 0.0;
    double w_ext = 0.0;
    int newton_iterations = 0;
    int newton_max_call = 0;
    int n_proj = 0;
    int n_dist = 0;
    EvalCounters evals;
    double dist_defect = 0.0;
    double theta_defect = 0.0;
};

namespace detail {

inline VecX stack(const SystemJet& j) {
    VecX p(j.y.size() + j.y1.size());
    p << j.y, j.y1;
    return p;
}

inline SystemJet unstack(double t, const VecX& p) {
    SystemJet j;
    const Eigen::Index n = p.size() / 2;
    j.t = t;
    j.y = p.head(n);
    j.y1 = p.tail(n);
    return j;
}

}  // namespace detail

/// One attempted step of size h from a consistent jet. Returns the
/// projected candidate, the embedded error estimate and all instrumentation
/// for the caller's statistics; does not decide the next step size.
inline StepOutcome step(const MultibodySystem& sys, const SystemJet& jet, double h,
                        const IntegratorConfig& cfg, double w_ext, double w_total_ref) {
    StepOutcome out;
    const Eigen::Index n = jet.y.size();
    const double power_prev = external_power(sys.bodies, sys.forces, jet);

    auto eval_derivative = [&](const SystemJet& p) {
        const DistributionResult dist = distribution(sys, p, cfg.schur, &out.evals);
        out.n_dist += 1;
        out.dist_defect = std::max(out.dist_defect, dist.constraint_defect);
        out.theta_defect = std::max(out.theta_defect, dist.theta_defect);
        VecX k(2 * n);
        k << p.y1, dist.y2;
        return k;
    };

    const VecX p0 = detail::stack(jet);
    std::array<VecX, dopri::stages> k;
    try {
        k[0] = eval_derivative(jet);
        for (int s = 1; s < dopri::stages; ++s) {
            VecX ps = p0;
            for (int j = 0; j < s; ++j) ps += (h * dopri::a[s][j]) * k[j];
            SystemJet stage_jet = detail::unstack(jet.t + dopri::c[s] * h, ps);
            ProjectionReport rep;
            stage_jet = project_stage(stage_jet, sys.constraints, cfg.projection, rep);
            out.n_proj += 1;
            out.newton_iterations += rep.newton_iterations;
            out.newton_max_call = std::max(out.newton_max_call, rep.newton_iterations);
            out.evals += rep.evals;
            k[s] = eval_derivative(stage_jet);
        }

        VecX p5 = p0, p4 = p0;
        for (int s = 0; s < dopri::stages; ++s) {
            p5 += (h * dopri::b5[s]) * k[s];
            p4 += (h * dopri::b4[s]) * k[s];
        }

        const InvariantFunction f_inv =
            cfg.invariants_on ? energy_invariant(sys, w_total_ref, w_ext, h, power_prev)
                              : InvariantFunction{};
        auto project_candidate = [&](const VecX& p) {
            SystemJet cand = detail::unstack(jet.t + h, p);
            ProjectionReport rep;
            cand = project_full(cand, sys.constraints, f_inv, cfg.projection, rep);
            out.n_proj += 1;
            out.newton_iterations += rep.newton_iterations;
            out.newton_max_call = std::max(out.newton_max_call, rep.newton_iterations);
            out.evals += rep.evals;
            return cand;
        };
        const SystemJet j5 = project_candidate(p5);
        const SystemJet j4 = project_candidate(p4);

        double sum = 0.0;
        const VecX v5 = detail::stack(j5), v4 = detail::stack(j4);
        for (Eigen::Index i = 0; i < v5.size(); ++i) {
            const double scale =
                cfg.control.atol + cfg.control.rtol * std::max(std::abs(p0[i]), std::abs(v5[i]));
            const double d = (v5[i] - v4[i]) / scale;
            sum += d * d;
        }
        out.err = std::sqrt(sum / static_cast<double>(v5.size()));
        out.accepted = out.err <= 1.0;
        out.jet = j5;
        out.power = external_power(sys.bodies, sys.forces, j5);
        out.w_ext = w_ext + 0.5 * h * (power_prev + out.power);
    } catch (const ProjectionNonConvergence&) {
        out.projection_failed = true;
        out.accepted = false;
    }
    return out;
}

/// Adaptive integration with the classic controller
/// h_new = h min(fac_max, max(fac_min, safety err^(-1/5))).
inline TrajectoryRecord integrate(const MultibodySystem& sys, const SystemJet& initial,
                                  const IntegratorConfig& cfg, const StepSink& sink = nullptr) {
    TrajectoryRecord rec;
    SystemJet jet = initial;
    double w_ext = 0.0;
    rec.w_total_ref = kinetic_energy(sys.bodies, jet) +
                      potential_energy(sys.bodies, sys.forces, jet.y);

    size_t next_checkpoint = 0;
    auto record_point = [&](double h_used, int newton, bool at_checkpoint) {
        StepRecord r;
        r.t = jet.t;
        r.h = h_used;
        r.y = jet.y;
        r.y1 = jet.y1;
        const Energies e = energies(sys.bodies, jet, sys.forces, w_ext);
        r.T = e.T;
        r.U = e.U;
        r.W = e.W;
        r.W_ext = w_ext;
        r.W_total = e.W_total;
        r.res_hc = residual_hc(jet, sys.constraints, nullptr);
        r.res_theta = residual_theta(jet);
        r.newton_iters = newton;
        r.checkpoint = at_checkpoint;
        rec.steps.push_back(r);
        if (sink) sink(r);
    };
    record_point(0.0, 0, false);

    double h = cfg.control.h0;
    const double t_end = cfg.control.t_end;
    const double h_min = 1e-12 * std::max(t_end, 1.0);

    while (jet.t < t_end * (1.0 - 1e-14)) {
        while (next_checkpoint < cfg.checkpoints.size() &&
               cfg.checkpoints[next_checkpoint] <= jet.t * (1.0 + 1e-14)) {
            ++next_checkpoint;
        }
        double h_try = std::min(h, t_end - jet.t);
        bool lands_on_checkpoint = false;
        if (next_checkpoint < cfg.checkpoints.size()) {
            const double to_cp = cfg.checkpoints[next_checkpoint] - jet.t;
            if (to_cp <= h_try * (1.0 + 1e-12)) {
                h_try = to_cp;
                lands_on_checkpoint = true;
            }
        }
        if (h_try < h_min) {
            throw IntegrationError(
                "step size underflow at t = " + std::to_string(jet.t) +
                " (h = " + std::to_string(h_try) + "); the problem appears stiff or a "
                "projection is repeatedly failing");
        }

        const StepOutcome o = step(sys, jet, h_try, cfg, w_ext, rec.w_total_ref);
        rec.stats.n_dist += o.n_dist;
        rec.stats.n_proj += o.n_proj;
        rec.stats.newton_total += o.newton_iterations;
        rec.stats.newton_max = std::max<long>(rec.stats.newton_max, o.newton_max_call);
        rec.stats.evals += o.evals;
        rec.stats.dist_defect_max = std::max(rec.stats.dist_defect_max, o.dist_defect);
        rec.stats.theta_defect_max = std::max(rec.stats.theta_defect_max, o.theta_defect);

        if (o.projection_failed) {
            rec.stats.rej_projection += 1;
            h = 0.5 * h_try;
            continue;
        }
        if (o.accepted) {
            rec.stats.succ_steps += 1;
            jet = o.jet;
            w_ext = o.w_ext;
            record_point(h_try, o.newton_iterations,
                         lands_on_checkpoint || jet.t >= t_end * (1.0 - 1e-14));
        } else {
            rec.stats.rej_steps += 1;
        }
        const double err = std::max(o.err, 1e-12);
        double fac = cfg.control.safety * std::pow(err, -0.2);
        if (!o.accepted) fac = std::min(1.0, fac);
        h = h_try * std::min(cfg.control.fac_max, std::max(cfg.control.fac_min, fac));
    }

    rec.final_jet = jet;
    rec.w_ext_final = w_ext;
    return rec;
}

}  // namespace mbs
