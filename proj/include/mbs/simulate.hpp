// Simulation driver: checks a model, runs the integrator, streams the
// trajectory as CSV and reports run statistics both as a human-readable
// table and as JSON.
#pragma once

#include "model.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

namespace mbs {

namespace detail_csv {

/// 17 significant digits: enough to reconstruct the exact double.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail_csv

inline std::string csv_header(const ModelSpec& spec) {
    std::ostringstream os;
    os << "t,h";
    const int nb = spec.body_count();
    for (int b = 1; b <= nb; ++b) {
        const std::string p = "b" + std::to_string(b) + "_";
        if (!spec.planar) {
            os << ',' << p << "rx," << p << "ry," << p << "rz";
            os << ',' << p << "q0," << p << "q1," << p << "q2," << p << "q3";
            os << ',' << p << "vx," << p << "vy," << p << "vz";
            os << ',' << p << "w0," << p << "w1," << p << "w2," << p << "w3";
        } else {
            os << ',' << p << "rx," << p << "ry," << p << "beta";
            os << ',' << p << "vx," << p << "vy," << p << "beta1";
        }
    }
    os << ",T,U,W,W_ext,W_total,res_hc_inf,res_theta_inf,newton_iters";
    return os.str();
}

inline std::string csv_row(const StepRecord& r) {
    using detail_csv::fmt;
    std::ostringstream os;
    os << fmt(r.t) << ',' << fmt(r.h);
    const Eigen::Index n = r.y.size();
    const Eigen::Index per = (n % 7 == 0) ? 7 : 3;
    const Eigen::Index nb = n / per;
    for (Eigen::Index b = 0; b < nb; ++b) {
        for (Eigen::Index i = 0; i < per; ++i) os << ',' << fmt(r.y[per * b + i]);
        for (Eigen::Index i = 0; i < per; ++i) os << ',' << fmt(r.y1[per * b + i]);
    }
    os << ',' << fmt(r.T) << ',' << fmt(r.U) << ',' << fmt(r.W) << ',' << fmt(r.W_ext) << ','
       << fmt(r.W_total) << ',' << fmt(r.res_hc) << ',' << fmt(r.res_theta) << ','
       << r.newton_iters;
    return os.str();
}

struct SimulationResult {
    TrajectoryRecord trajectory;
    RunStats stats;  // includes wall time
    ConsistencyReport check;
};

/// Runs a validated model over [0, t_end]. Per-step CSV rows go to the
/// optional row sink as they are produced.
inline SimulationResult simulate(const ModelSpec& spec,
                                 const std::function<void(const std::string&)>& csv_sink = nullptr,
                                 const std::vector<double>& checkpoints = {}) {
    SimulationResult result;
    result.check = check_model(spec);

    IntegratorConfig cfg;
    cfg.control = spec.control;
    cfg.projection = spec.projection;
    cfg.invariants_on = spec.invariants_on;
    cfg.checkpoints = checkpoints;

    if (csv_sink) csv_sink(csv_header(spec));
    const auto t0 = std::chrono::steady_clock::now();
    if (!spec.planar) {
        auto [sys, jet0] = to_system(spec);
        (void)jet0;
        StepSink sink;
        if (csv_sink) sink = [&](const StepRecord& r) { csv_sink(csv_row(r)); };
        result.trajectory = integrate(sys, result.check.projected, cfg, sink);
    } else {
        auto [m, jet0] = to_planar(spec);
        (void)jet0;
        result.trajectory = planar::integrate(m, result.check.projected2d, cfg);
        if (csv_sink)
            for (size_t i = 0; i < result.trajectory.steps.size(); ++i)
                csv_sink(csv_row(result.trajectory.steps[i]));
    }
    const auto t1 = std::chrono::steady_clock::now();
    result.trajectory.stats.wall_time = std::chrono::duration<double>(t1 - t0).count();
    result.stats = result.trajectory.stats;
    return result;
}

/// Run-characteristics table in the layout of the paper-style reports.
inline std::string stats_table(const RunStats& s) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "# succ. (rej.) steps    %ld(%ld)\n", s.succ_steps,
                  s.rej_steps);
    os << buf;
    std::snprintf(buf, sizeof(buf), "# proj-rejected steps   %ld\n", s.rej_projection);
    os << buf;
    std::snprintf(buf, sizeof(buf), "Newton: av(max)         %.3g(%ld)\n", s.newton_avg(),
                  s.newton_max);
    os << buf;
    std::snprintf(buf, sizeof(buf), "# dist                  %ld\n", s.n_dist);
    os << buf;
    std::snprintf(buf, sizeof(buf), "# proj                  %ld\n", s.n_proj);
    os << buf;
    std::snprintf(buf, sizeof(buf), "#~dg                    %lld\n",
                  static_cast<long long>(s.evals.n_dg));
    os << buf;
    std::snprintf(buf, sizeof(buf), "#~d2g                   %lld\n",
                  static_cast<long long>(s.evals.n_d2g));
    os << buf;
    std::snprintf(buf, sizeof(buf), "#~d3g (fd)              %lld\n",
                  static_cast<long long>(s.evals.n_d3g_fd));
    os << buf;
    std::snprintf(buf, sizeof(buf), "#~df_inv                %lld\n",
                  static_cast<long long>(s.evals.n_df_inv));
    os << buf;
    std::snprintf(buf, sizeof(buf), "#~d2f_inv               %lld\n",
                  static_cast<long long>(s.evals.n_d2f_inv));
    os << buf;
    std::snprintf(buf, sizeof(buf), "CPU total               %.2f\n", s.wall_time);
    os << buf;
    return os.str();
}

/// Machine-readable statistics, including the effective configuration so
/// that runs are self-describing (controller constants the schema does not
/// carry are echoed here).
inline Json stats_json(const ModelSpec& spec, const SimulationResult& result) {
    const RunStats& s = result.stats;
    Json j;
    j["model"] = spec.name;
    j["succ_steps"] = s.succ_steps;
    j["rej_steps"] = s.rej_steps;
    j["rej_projection"] = s.rej_projection;
    j["newton_avg"] = s.newton_avg();
    j["newton_max"] = s.newton_max;
    j["n_dist"] = s.n_dist;
    j["n_proj"] = s.n_proj;
    j["n_g"] = s.evals.n_g;
    j["n_dg"] = s.evals.n_dg;
    j["n_d2g"] = s.evals.n_d2g;
    j["n_d3g_fd"] = s.evals.n_d3g_fd;
    j["n_f_inv"] = s.evals.n_f_inv;
    j["n_df_inv"] = s.evals.n_df_inv;
    j["n_d2f_inv"] = s.evals.n_d2f_inv;
    j["dist_defect_max"] = s.dist_defect_max;
    j["theta_defect_max"] = s.theta_defect_max;
    j["wall_time"] = s.wall_time;
    j["dof"] = result.check.dof;
    j["config"] = Json{{"atol", spec.control.atol},
                       {"rtol", spec.control.rtol},
                       {"h0", spec.control.h0},
                       {"fac_max", spec.control.fac_max},
                       {"fac_min", spec.control.fac_min},
                       {"safety", spec.control.safety},
                       {"t_end", spec.control.t_end},
                       {"tol_abs", spec.projection.tol_abs},
                       {"max_newton", spec.projection.max_newton},
                       {"max_outer", spec.projection.max_outer},
                       {"mode", spec.projection.mode == ProjectionMode::Quasi ? "quasi"
                                                                              : "orthogonal"},
                       {"invariants", spec.invariants_on ? "on" : "off"}};
    return j;
}

}  // namespace mbs
