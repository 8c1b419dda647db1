// Declarative model description: a versioned JSON schema covering bodies,
// joints, forces and run configuration, plus the built-in benchmark
// mechanisms (pendulum, quadrangle, crank, planar-quadrangle). All
// quantities are SI; unknown fields are rejected so that files stay
// diff-friendly and typos surface early.
#pragma once

#include "planar.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace mbs {

using Json = nlohmann::ordered_json;

class ModelError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ModelSpec {
    int schema = 1;
    std::string name;
    bool planar = false;

    struct Body3 {
        std::string label;
        double mass = 1.0;
        std::vector<double> inertia;  // 3 entries (diagonal) or 9 (row-major full)
        Vec3 r = Vec3::Zero();
        Vec4 theta = Vec4::Unit(0);
        Vec3 r1 = Vec3::Zero();
        Vec4 theta1 = Vec4::Zero();
        Vec3 torque = Vec3::Zero();
        Vec3 force = Vec3::Zero();
    };
    struct Joint3 {
        JointType type = JointType::Spherical;
        int body_i = 0;
        int body_j = 0;
        Vec3 chi_i = Vec3::Zero();
        Vec3 chi_j = Vec3::Zero();
        std::optional<Vec3> a_i, b_i, a_j, b_j;
    };
    struct BodyP {
        std::string label;
        double mass = 1.0;
        double inertia_p = 1.0;
        Vec2 r = Vec2::Zero();
        double beta = 0.0;
        Vec2 r1 = Vec2::Zero();
        double beta1 = 0.0;
        double torque = 0.0;
        Vec2 force = Vec2::Zero();
    };
    struct JointP {
        int body_i = 0;
        int body_j = 0;
        Vec2 chi_i = Vec2::Zero();
        Vec2 chi_j = Vec2::Zero();
    };

    std::vector<Body3> bodies3;
    std::vector<Joint3> joints3;
    Vec3 gravity3 = Vec3::Zero();

    std::vector<BodyP> bodiesP;
    std::vector<JointP> jointsP;
    Vec2 gravity2 = Vec2::Zero();

    StepControl control;
    ProjectionConfig projection;
    bool invariants_on = true;

    int body_count() const {
        return planar ? static_cast<int>(bodiesP.size()) : static_cast<int>(bodies3.size());
    }
};

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace detail_json {

inline void reject_unknown(const Json& j, const std::vector<std::string>& known,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ModelError("unknown field '" + it.key() + "' in " + where);
    }
}

inline double num(const Json& j, const std::string& where) {
    if (!j.is_number()) throw ModelError("expected a number in " + where);
    return j.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const Json& j, const std::string& where) {
    if (!j.is_array() || j.size() != N)
        throw ModelError("expected an array of " + std::to_string(N) + " numbers in " + where);
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = num(j[static_cast<size_t>(i)], where);
    return v;
}

template <int N>
Json arr(const Eigen::Matrix<double, N, 1>& v) {
    Json a = Json::array();
    for (int i = 0; i < N; ++i) a.push_back(v[i]);
    return a;
}

}  // namespace detail_json

inline JointType joint_type_from_string(const std::string& s) {
    if (s == "spherical") return JointType::Spherical;
    if (s == "universal") return JointType::Universal;
    if (s == "revolute") return JointType::Revolute;
    if (s == "cylindrical") return JointType::Cylindrical;
    if (s == "translational") return JointType::Translational;
    throw ModelError("unknown joint type '" + s + "'");
}

inline Json serialize(const ModelSpec& spec) {
    using detail_json::arr;
    Json j;
    j["schema"] = spec.schema;
    j["name"] = spec.name;
    j["planar"] = spec.planar;
    j["bodies"] = Json::array();
    if (!spec.planar) {
        for (const auto& b : spec.bodies3) {
            Json jb;
            jb["label"] = b.label;
            jb["mass"] = b.mass;
            Json in = Json::array();
            for (double v : b.inertia) in.push_back(v);
            jb["inertia"] = in;
            jb["r"] = arr<3>(b.r);
            jb["theta"] = arr<4>(b.theta);
            jb["r1"] = arr<3>(b.r1);
            jb["theta1"] = arr<4>(b.theta1);
            jb["torque"] = arr<3>(b.torque);
            jb["force"] = arr<3>(b.force);
            j["bodies"].push_back(jb);
        }
        j["joints"] = Json::array();
        for (const auto& joint : spec.joints3) {
            Json jj;
            jj["type"] = joint_type_name(joint.type);
            jj["body_i"] = joint.body_i;
            jj["body_j"] = joint.body_j;
            jj["chi_i"] = arr<3>(joint.chi_i);
            jj["chi_j"] = arr<3>(joint.chi_j);
            if (joint.a_i) jj["a_i"] = arr<3>(*joint.a_i);
            if (joint.b_i) jj["b_i"] = arr<3>(*joint.b_i);
            if (joint.a_j) jj["a_j"] = arr<3>(*joint.a_j);
            if (joint.b_j) jj["b_j"] = arr<3>(*joint.b_j);
            j["joints"].push_back(jj);
        }
        j["gravity"] = arr<3>(spec.gravity3);
    } else {
        for (const auto& b : spec.bodiesP) {
            Json jb;
            jb["label"] = b.label;
            jb["mass"] = b.mass;
            jb["inertia_p"] = b.inertia_p;
            jb["r"] = arr<2>(b.r);
            jb["beta"] = b.beta;
            jb["r1"] = arr<2>(b.r1);
            jb["beta1"] = b.beta1;
            jb["torque"] = b.torque;
            jb["force"] = arr<2>(b.force);
            j["bodies"].push_back(jb);
        }
        j["joints"] = Json::array();
        for (const auto& joint : spec.jointsP) {
            Json jj;
            jj["type"] = "pin";
            jj["body_i"] = joint.body_i;
            jj["body_j"] = joint.body_j;
            jj["chi_i"] = arr<2>(joint.chi_i);
            jj["chi_j"] = arr<2>(joint.chi_j);
            j["joints"].push_back(jj);
        }
        j["gravity"] = arr<2>(spec.gravity2);
    }
    j["integrator"] = Json{{"atol", spec.control.atol},
                           {"rtol", spec.control.rtol},
                           {"h0", spec.control.h0},
                           {"fac_max", spec.control.fac_max},
                           {"t_end", spec.control.t_end}};
    j["projection"] =
        Json{{"tol_abs", spec.projection.tol_abs},
             {"mode", spec.projection.mode == ProjectionMode::Quasi ? "quasi" : "orthogonal"}};
    j["invariants"] = spec.invariants_on ? "on" : "off";
    return j;
}

inline std::string serialize_text(const ModelSpec& spec) { return serialize(spec).dump(2) + "\n"; }

inline ModelSpec parse_model(const Json& j) {
    using detail_json::num;
    using detail_json::reject_unknown;
    using detail_json::vec;

    if (!j.is_object()) throw ModelError("model file must contain a JSON object");
    reject_unknown(j, {"schema", "name", "planar", "bodies", "joints", "gravity", "integrator",
                       "projection", "invariants"},
                   "model");
    ModelSpec spec;
    if (!j.contains("schema") || !j["schema"].is_number_integer() || j["schema"].get<int>() != 1)
        throw ModelError("field 'schema' must be the integer 1");
    spec.schema = 1;
    spec.name = j.value("name", std::string{});
    spec.planar = j.value("planar", false);

    if (!j.contains("bodies") || !j["bodies"].is_array() || j["bodies"].empty())
        throw ModelError("field 'bodies' must be a non-empty array");

    if (!spec.planar) {
        for (size_t i = 0; i < j["bodies"].size(); ++i) {
            const Json& jb = j["bodies"][i];
            const std::string where = "bodies[" + std::to_string(i) + "]";
            reject_unknown(jb, {"label", "mass", "inertia", "r", "theta", "r1", "theta1",
                                "torque", "force"},
                           where);
            ModelSpec::Body3 b;
            b.label = jb.value("label", std::string{});
            if (!jb.contains("mass")) throw ModelError(where + ": missing field 'mass'");
            b.mass = num(jb["mass"], where + ".mass");
            if (!jb.contains("inertia") || !jb["inertia"].is_array() ||
                (jb["inertia"].size() != 3 && jb["inertia"].size() != 9))
                throw ModelError(where + ".inertia must have 3 (diagonal) or 9 (full) entries");
            for (const auto& v : jb["inertia"]) b.inertia.push_back(num(v, where + ".inertia"));
            if (!jb.contains("r") || !jb.contains("theta"))
                throw ModelError(where + ": fields 'r' and 'theta' are required");
            b.r = vec<3>(jb["r"], where + ".r");
            b.theta = vec<4>(jb["theta"], where + ".theta");
            if (jb.contains("r1")) b.r1 = vec<3>(jb["r1"], where + ".r1");
            if (jb.contains("theta1")) b.theta1 = vec<4>(jb["theta1"], where + ".theta1");
            if (jb.contains("torque")) b.torque = vec<3>(jb["torque"], where + ".torque");
            if (jb.contains("force")) b.force = vec<3>(jb["force"], where + ".force");
            spec.bodies3.push_back(b);
        }
        if (j.contains("joints")) {
            for (size_t i = 0; i < j["joints"].size(); ++i) {
                const Json& jj = j["joints"][i];
                const std::string where = "joints[" + std::to_string(i) + "]";
                reject_unknown(jj, {"type", "body_i", "body_j", "chi_i", "chi_j", "a_i", "b_i",
                                    "a_j", "b_j"},
                               where);
                ModelSpec::Joint3 joint;
                if (!jj.contains("type")) throw ModelError(where + ": missing field 'type'");
                joint.type = joint_type_from_string(jj["type"].get<std::string>());
                joint.body_i = jj.value("body_i", 0);
                joint.body_j = jj.value("body_j", 0);
                if (jj.contains("chi_i")) joint.chi_i = vec<3>(jj["chi_i"], where + ".chi_i");
                if (jj.contains("chi_j")) joint.chi_j = vec<3>(jj["chi_j"], where + ".chi_j");
                if (jj.contains("a_i")) joint.a_i = vec<3>(jj["a_i"], where + ".a_i");
                if (jj.contains("b_i")) joint.b_i = vec<3>(jj["b_i"], where + ".b_i");
                if (jj.contains("a_j")) joint.a_j = vec<3>(jj["a_j"], where + ".a_j");
                if (jj.contains("b_j")) joint.b_j = vec<3>(jj["b_j"], where + ".b_j");
                spec.joints3.push_back(joint);
            }
        }
        if (j.contains("gravity")) spec.gravity3 = vec<3>(j["gravity"], "gravity");
    } else {
        for (size_t i = 0; i < j["bodies"].size(); ++i) {
            const Json& jb = j["bodies"][i];
            const std::string where = "bodies[" + std::to_string(i) + "]";
            reject_unknown(jb, {"label", "mass", "inertia_p", "r", "beta", "r1", "beta1",
                                "torque", "force"},
                           where);
            ModelSpec::BodyP b;
            b.label = jb.value("label", std::string{});
            if (!jb.contains("mass") || !jb.contains("inertia_p"))
                throw ModelError(where + ": fields 'mass' and 'inertia_p' are required");
            b.mass = num(jb["mass"], where + ".mass");
            b.inertia_p = num(jb["inertia_p"], where + ".inertia_p");
            if (!jb.contains("r") || !jb.contains("beta"))
                throw ModelError(where + ": fields 'r' and 'beta' are required");
            b.r = vec<2>(jb["r"], where + ".r");
            b.beta = num(jb["beta"], where + ".beta");
            if (jb.contains("r1")) b.r1 = vec<2>(jb["r1"], where + ".r1");
            if (jb.contains("beta1")) b.beta1 = num(jb["beta1"], where + ".beta1");
            if (jb.contains("torque")) b.torque = num(jb["torque"], where + ".torque");
            if (jb.contains("force")) b.force = vec<2>(jb["force"], where + ".force");
            spec.bodiesP.push_back(b);
        }
        if (j.contains("joints")) {
            for (size_t i = 0; i < j["joints"].size(); ++i) {
                const Json& jj = j["joints"][i];
                const std::string where = "joints[" + std::to_string(i) + "]";
                reject_unknown(jj, {"type", "body_i", "body_j", "chi_i", "chi_j"}, where);
                if (!jj.contains("type") || jj["type"].get<std::string>() != "pin")
                    throw ModelError(where + ": planar joints must have type 'pin'");
                ModelSpec::JointP joint;
                joint.body_i = jj.value("body_i", 0);
                joint.body_j = jj.value("body_j", 0);
                if (jj.contains("chi_i")) joint.chi_i = vec<2>(jj["chi_i"], where + ".chi_i");
                if (jj.contains("chi_j")) joint.chi_j = vec<2>(jj["chi_j"], where + ".chi_j");
                spec.jointsP.push_back(joint);
            }
        }
        if (j.contains("gravity")) spec.gravity2 = vec<2>(j["gravity"], "gravity");
    }

    if (j.contains("integrator")) {
        const Json& ji = j["integrator"];
        reject_unknown(ji, {"atol", "rtol", "h0", "fac_max", "t_end"}, "integrator");
        if (ji.contains("atol")) spec.control.atol = num(ji["atol"], "integrator.atol");
        if (ji.contains("rtol")) spec.control.rtol = num(ji["rtol"], "integrator.rtol");
        if (ji.contains("h0")) spec.control.h0 = num(ji["h0"], "integrator.h0");
        if (ji.contains("fac_max")) spec.control.fac_max = num(ji["fac_max"], "integrator.fac_max");
        if (ji.contains("t_end")) spec.control.t_end = num(ji["t_end"], "integrator.t_end");
    }
    if (j.contains("projection")) {
        const Json& jp = j["projection"];
        reject_unknown(jp, {"tol_abs", "mode"}, "projection");
        if (jp.contains("tol_abs"))
            spec.projection.tol_abs = num(jp["tol_abs"], "projection.tol_abs");
        if (jp.contains("mode")) {
            const std::string m = jp["mode"].get<std::string>();
            if (m == "quasi")
                spec.projection.mode = ProjectionMode::Quasi;
            else if (m == "orthogonal")
                spec.projection.mode = ProjectionMode::Orthogonal;
            else
                throw ModelError("projection.mode must be 'quasi' or 'orthogonal'");
        }
    }
    if (j.contains("invariants")) {
        const std::string m = j["invariants"].get<std::string>();
        if (m == "on")
            spec.invariants_on = true;
        else if (m == "off")
            spec.invariants_on = false;
        else
            throw ModelError("invariants must be 'on' or 'off'");
    }
    return spec;
}

inline ModelSpec parse_model_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError(std::string("JSON parse error: ") + e.what());
    }
    return parse_model(j);
}

// ---------------------------------------------------------------------------
// Validation and conversion to runtime structures
// ---------------------------------------------------------------------------

inline void validate(const ModelSpec& spec) {
    const int nb = spec.body_count();
    auto check_body_index = [&](int idx, const std::string& where) {
        if (idx < 0 || idx > nb)
            throw ModelError(where + ": body index " + std::to_string(idx) +
                             " out of range (0 = ground, 1.." + std::to_string(nb) + ")");
    };
    if (!spec.planar) {
        for (size_t i = 0; i < spec.bodies3.size(); ++i) {
            const auto& b = spec.bodies3[i];
            const std::string where = "bodies[" + std::to_string(i) + "]";
            if (!(b.mass > 0.0)) throw ModelError(where + ": mass must be positive");
            if (b.theta.norm() < 1e-6) throw ModelError(where + ": theta must be nonzero");
        }
        for (size_t i = 0; i < spec.joints3.size(); ++i) {
            const auto& joint = spec.joints3[i];
            const std::string where = "joints[" + std::to_string(i) + "]";
            check_body_index(joint.body_i, where);
            check_body_index(joint.body_j, where);
            if (joint.body_i == joint.body_j)
                throw ModelError(where + ": body_i and body_j must differ");
            JointSpec js{joint.type,  joint.body_i, joint.body_j, joint.chi_i, joint.chi_j,
                         joint.a_i, joint.b_i,    joint.a_j,    joint.b_j};
            try {
                (void)make_joint(js);  // axis presence / unit-length rules
            } catch (const std::invalid_argument& e) {
                throw ModelError(where + ": " + e.what());
            }
        }
    } else {
        for (size_t i = 0; i < spec.bodiesP.size(); ++i) {
            const auto& b = spec.bodiesP[i];
            const std::string where = "bodies[" + std::to_string(i) + "]";
            if (!(b.mass > 0.0)) throw ModelError(where + ": mass must be positive");
            if (!(b.inertia_p > 0.0)) throw ModelError(where + ": inertia_p must be positive");
        }
        for (size_t i = 0; i < spec.jointsP.size(); ++i) {
            const auto& joint = spec.jointsP[i];
            const std::string where = "joints[" + std::to_string(i) + "]";
            check_body_index(joint.body_i, where);
            check_body_index(joint.body_j, where);
            if (joint.body_i == joint.body_j)
                throw ModelError(where + ": body_i and body_j must differ");
        }
    }
    if (!(spec.control.atol > 0.0) || !(spec.control.rtol > 0.0))
        throw ModelError("integrator: atol and rtol must be positive");
    if (!(spec.control.fac_max > 1.0)) throw ModelError("integrator: fac_max must exceed 1");
    if (!(spec.control.t_end > 0.0)) throw ModelError("integrator: t_end must be positive");
    if (!(spec.projection.tol_abs > 0.0)) throw ModelError("projection: tol_abs must be positive");
}

inline Mat3 inertia_matrix(const std::vector<double>& entries) {
    Mat3 m;
    if (entries.size() == 3) {
        m = Vec3(entries[0], entries[1], entries[2]).asDiagonal();
    } else {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = entries[static_cast<size_t>(3 * r + c)];
    }
    return m;
}

inline std::pair<MultibodySystem, SystemJet> to_system(const ModelSpec& spec) {
    if (spec.planar) throw ModelError("to_system: model is planar; use to_planar");
    MultibodySystem sys;
    SystemJet jet = SystemJet::zero(static_cast<int>(spec.bodies3.size()));
    int b = 1;
    for (const auto& bs : spec.bodies3) {
        RigidBody rb;
        rb.mass = bs.mass;
        rb.inertia = inertia_matrix(bs.inertia);
        rb.label = bs.label;
        rb.validate();
        sys.bodies.push_back(rb);
        sys.forces.torque.push_back(bs.torque);
        sys.forces.force.push_back(bs.force);
        jet.set_r(b, bs.r);
        jet.set_theta(b, bs.theta);
        jet.set_r1(b, bs.r1);
        jet.set_theta1(b, bs.theta1);
        ++b;
    }
    sys.forces.gravity = spec.gravity3;
    for (const auto& joint : spec.joints3) {
        JointSpec js{joint.type,  joint.body_i, joint.body_j, joint.chi_i, joint.chi_j,
                     joint.a_i, joint.b_i,    joint.a_j,    joint.b_j};
        for (const auto& prim : make_joint(js)) sys.constraints.add(prim);
    }
    return {std::move(sys), std::move(jet)};
}

inline std::pair<planar::Mechanism, planar::Jet> to_planar(const ModelSpec& spec) {
    if (!spec.planar) throw ModelError("to_planar: model is spatial; use to_system");
    planar::Mechanism m;
    planar::Jet jet = planar::Jet::zero(static_cast<int>(spec.bodiesP.size()));
    int b = 1;
    for (const auto& bs : spec.bodiesP) {
        m.bodies.push_back({bs.mass, bs.inertia_p, bs.label});
        m.torque.push_back(bs.torque);
        m.force.push_back(bs.force);
        jet.y.segment<2>(3 * (b - 1)) = bs.r;
        jet.y[3 * (b - 1) + 2] = bs.beta;
        jet.y1.segment<2>(3 * (b - 1)) = bs.r1;
        jet.y1[3 * (b - 1) + 2] = bs.beta1;
        ++b;
    }
    m.gravity = spec.gravity2;
    for (const auto& joint : spec.jointsP)
        m.pins.push_back({joint.body_i, joint.body_j, joint.chi_i, joint.chi_j});
    return {std::move(m), std::move(jet)};
}

// ---------------------------------------------------------------------------
// Consistency check
// ---------------------------------------------------------------------------

struct ConsistencyReport {
    double residual_hc_before = 0.0;
    double residual_theta_before = 0.0;
    double residual_hc_after = 0.0;
    double residual_theta_after = 0.0;
    double correction = 0.0;  // scaled displacement applied by the projection
    int rank_dg = 0;
    int dof = 0;
    double o_degeneracy_min = std::numeric_limits<double>::infinity();
    SystemJet projected;      // 3D case
    planar::Jet projected2d;  // planar case
};

/// Projects the initial data of a model onto the constraint manifolds and
/// reports residuals, the numerical rank of dg and the degree-of-freedom
/// count. Table data rounded to few decimals is made exactly consistent
/// here before a simulation starts.
inline ConsistencyReport check_model(const ModelSpec& spec) {
    validate(spec);
    ConsistencyReport rep;
    if (!spec.planar) {
        auto [sys, jet] = to_system(spec);
        rep.residual_hc_before = residual_hc(jet, sys.constraints);
        rep.residual_theta_before = residual_theta(jet);

        ProjectionConfig cfg = spec.projection;
        cfg.tol_abs = std::min(cfg.tol_abs, 1e-10);  // initial data: project tightly
        ProjectionReport prep;
        const SystemJet before = jet;
        rep.projected = project_full(jet, sys.constraints, InvariantFunction{}, cfg, prep);
        rep.correction = std::max(scaled_inf_norm(rep.projected.y - before.y, before.y),
                                  scaled_inf_norm(rep.projected.y1 - before.y1, before.y1));
        rep.residual_hc_after = residual_hc(rep.projected, sys.constraints);
        rep.residual_theta_after = residual_theta(rep.projected);

        if (sys.constraints.ell > 0) {
            const MatX dg = jacobian(sys.constraints, rep.projected.y);
            Eigen::ColPivHouseholderQR<MatX> qr(dg.transpose());
            qr.setThreshold(1e-8);
            rep.rank_dg = static_cast<int>(qr.rank());
            if (rep.rank_dg < sys.constraints.ell) {
                std::ostringstream os;
                os << "constraints are rank deficient: rank(dg) = " << rep.rank_dg << " of "
                   << sys.constraints.ell << "; dependent rows:";
                for (int r : detail::dependent_rows(dg)) os << ' ' << r;
                throw ModelError(os.str());
            }
        }
        rep.dof = 6 * sys.body_count() - rep.rank_dg;

        for (const auto& p : sys.constraints.primitives) {
            if (p.kind != ConstraintKind::Orthogonality) continue;
            const auto bi = detail::body_config(rep.projected.y, p.body_i);
            const auto bj = detail::body_config(rep.projected.y, p.body_j);
            const Vec3 d = bj.r + bj.R * p.chi_j - bi.r - bi.R * p.chi_i;
            rep.o_degeneracy_min = std::min(rep.o_degeneracy_min, d.norm());
        }
    } else {
        auto [m, jet] = to_planar(spec);
        rep.residual_hc_before = planar::residual_hc(jet, m);
        ProjectionConfig cfg = spec.projection;
        cfg.tol_abs = std::min(cfg.tol_abs, 1e-10);
        ProjectionReport prep;
        const planar::Jet before = jet;
        planar::Jet proj = jet;
        if (!m.pins.empty()) proj = planar::project_hc(jet, m, cfg, prep);
        rep.projected2d = proj;
        rep.correction = std::max(scaled_inf_norm(proj.y - before.y, before.y),
                                  scaled_inf_norm(proj.y1 - before.y1, before.y1));
        rep.residual_hc_after = planar::residual_hc(proj, m);
        if (!m.pins.empty()) {
            const MatX dg = planar::jacobian(m, proj.y);
            Eigen::ColPivHouseholderQR<MatX> qr(dg.transpose());
            qr.setThreshold(1e-8);
            rep.rank_dg = static_cast<int>(qr.rank());
            if (rep.rank_dg < m.ell())
                throw ModelError("planar constraints are rank deficient");
        }
        rep.dof = 3 * m.body_count() - rep.rank_dg;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// File IO and built-in models
// ---------------------------------------------------------------------------

inline ModelSpec load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    ModelSpec spec = parse_model_text(buf.str());
    validate(spec);
    return spec;
}

inline void save_model(const ModelSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot write model file '" + path + "'");
    out << serialize_text(spec);
}

inline ModelSpec builtin_pendulum() {
    ModelSpec s;
    s.name = "pendulum";
    ModelSpec::Body3 b;
    b.label = "pendulum";
    b.mass = 38.34;
    b.inertia = {0.147, 3.175, 3.154};
    b.r = Vec3(0.765, 0.0, 0.0);
    b.theta = Vec4(1.0, 0.0, 0.0, 0.0);
    s.bodies3.push_back(b);
    ModelSpec::Joint3 j;
    j.type = JointType::Spherical;
    j.body_i = 0;
    j.body_j = 1;
    j.chi_i = Vec3::Zero();
    j.chi_j = Vec3(-0.765, 0.0, 0.0);
    s.joints3.push_back(j);
    s.gravity3 = Vec3(0.0, -9.81, 0.0);
    s.control.atol = 1e-6;
    s.control.rtol = 1e-6;
    s.control.h0 = 0.25;
    s.control.fac_max = 3.0;
    s.control.t_end = 10.0;
    return s;
}

inline ModelSpec builtin_quadrangle() {
    ModelSpec s;
    s.name = "quadrangle";
    const Vec3 e1 = Vec3::UnitX(), e2 = Vec3::UnitY(), e3 = Vec3::UnitZ();
    auto body = [](const char* label, double m, const Vec3& inertia, const Vec3& r,
                   const Vec4& th, const Vec3& tau) {
        ModelSpec::Body3 b;
        b.label = label;
        b.mass = m;
        b.inertia = {inertia[0], inertia[1], inertia[2]};
        b.r = r;
        b.theta = th;
        b.torque = tau;
        return b;
    };
    s.bodies3.push_back(body("body1", 78.10, Vec3(0.08, 26.05, 26.1), Vec3(0.500, 0.866, 0.0),
                             Vec4(0.866, 0.0, 0.0, 0.500), Vec3(0.0, 0.0, -1200.0)));
    s.bodies3.push_back(body("body2", 156.20, Vec3(0.16, 208.3, 208.4), Vec3(2.824, 2.553, 0.0),
                             Vec4(0.978, 0.0, 0.0, 0.210), Vec3::Zero()));
    s.bodies3.push_back(body("body3", 156.20, Vec3(0.16, 208.3, 208.4), Vec3(3.574, 1.687, 0.0),
                             Vec4(0.877, 0.0, 0.0, 0.481), Vec3::Zero()));
    auto joint = [](JointType t, int i, int j, const Vec3& ci, const Vec3& cj) {
        ModelSpec::Joint3 js;
        js.type = t;
        js.body_i = i;
        js.body_j = j;
        js.chi_i = ci;
        js.chi_j = cj;
        return js;
    };
    {
        auto j = joint(JointType::Revolute, 0, 1, Vec3::Zero(), Vec3(-1.0, 0.0, 0.0));
        j.a_i = e2;
        j.b_i = e1;
        j.a_j = e3;
        s.joints3.push_back(j);
    }
    s.joints3.push_back(joint(JointType::Spherical, 1, 2, Vec3(1.0, 0.0, 0.0), Vec3(-2.0, 0.0, 0.0)));
    {
        auto j = joint(JointType::Cylindrical, 2, 3, Vec3(2.0, 0.0, 0.0), Vec3(2.0, 0.0, 0.0));
        j.a_i = e1;
        j.b_i = e2;
        j.a_j = e3;
        s.joints3.push_back(j);
    }
    {
        auto j = joint(JointType::Revolute, 3, 0, Vec3(-2.0, 0.0, 0.0), Vec3(2.5, 0.0, 0.0));
        j.a_i = e1;
        j.b_i = e2;
        j.a_j = e3;
        s.joints3.push_back(j);
    }
    s.gravity3 = Vec3(0.0, -9.81, 0.0);
    s.control.atol = 1e-8;
    s.control.rtol = 1e-8;
    s.control.h0 = 0.25;
    s.control.fac_max = 3.0;
    s.control.t_end = 10.0;
    return s;
}

inline ModelSpec builtin_crank() {
    ModelSpec s;
    s.name = "crank";
    const Vec3 e1 = Vec3::UnitX(), e2 = Vec3::UnitY(), e3 = Vec3::UnitZ();
    auto body = [](const char* label, double m, const Vec3& inertia, const Vec3& r,
                   const Vec4& th, const Vec3& tau) {
        ModelSpec::Body3 b;
        b.label = label;
        b.mass = m;
        b.inertia = {inertia[0], inertia[1], inertia[2]};
        b.r = r;
        b.theta = th;
        b.torque = tau;
        return b;
    };
    s.bodies3.push_back(body("crank", 19.50, Vec3(0.02, 0.41, 0.42), Vec3(0.0, 0.0, -0.25),
                             Vec4(0.707, 0.0, 0.707, 0.0), Vec3(0.0, 0.0, -50.0)));
    s.bodies3.push_back(body("rod", 70.29, Vec3(0.07, 18.99, 19.04), Vec3(0.9, 0.0, -0.5),
                             Vec4(1.0, 0.0, 0.0, 0.0), Vec3::Zero()));
    s.bodies3.push_back(body("slider", 7.81, Vec3(0.01, 0.01, 0.01), Vec3(1.8, 0.0, -0.5),
                             Vec4(1.0, 0.0, 0.0, 0.0), Vec3::Zero()));
    {
        ModelSpec::Joint3 j;
        j.type = JointType::Spherical;
        j.body_i = 1;
        j.body_j = 2;
        j.chi_i = Vec3(0.25, 0.0, 0.0);
        j.chi_j = Vec3(-0.9, 0.0, 0.0);
        s.joints3.push_back(j);
    }
    {
        ModelSpec::Joint3 j;
        j.type = JointType::Translational;
        j.body_i = 0;
        j.body_j = 3;
        j.chi_i = Vec3::Zero();
        j.chi_j = Vec3(-1.8, 0.0, 0.5);
        j.a_i = e2;
        j.b_i = e3;
        j.a_j = e1;
        j.b_j = e3;
        s.joints3.push_back(j);
    }
    {
        ModelSpec::Joint3 j;
        j.type = JointType::Universal;
        j.body_i = 2;
        j.body_j = 3;
        j.chi_i = Vec3(0.9, 0.0, 0.0);
        j.chi_j = Vec3::Zero();
        j.a_i = e2;
        j.a_j = e3;
        s.joints3.push_back(j);
    }
    {
        ModelSpec::Joint3 j;
        j.type = JointType::Revolute;
        j.body_i = 1;
        j.body_j = 0;
        j.chi_i = Vec3(-0.25, 0.0, 0.0);
        j.chi_j = Vec3::Zero();
        j.a_i = e2;
        j.b_i = e1;
        j.a_j = e1;
        s.joints3.push_back(j);
    }
    s.gravity3 = Vec3(0.0, -9.81, 0.0);
    s.control.atol = 1e-7;
    s.control.rtol = 1e-7;
    s.control.h0 = 0.25;
    s.control.fac_max = 3.0;
    s.control.t_end = 10.0;
    return s;
}

inline ModelSpec builtin_planar_quadrangle() {
    ModelSpec s;
    s.name = "planar-quadrangle";
    s.planar = true;
    auto body = [](const char* label, double m, double ip, const Vec2& r, double beta,
                   double tau) {
        ModelSpec::BodyP b;
        b.label = label;
        b.mass = m;
        b.inertia_p = ip;
        b.r = r;
        b.beta = beta;
        b.torque = tau;
        return b;
    };
    // beta = 2 atan2(theta^3, theta^0) of the spatial quadrangle's bodies
    s.bodiesP.push_back(body("body1", 78.10, 26.1, Vec2(0.500, 0.866),
                             2.0 * std::atan2(0.500, 0.866), -1200.0));
    s.bodiesP.push_back(body("body2", 156.20, 208.4, Vec2(2.824, 2.553),
                             2.0 * std::atan2(0.210, 0.978), 0.0));
    s.bodiesP.push_back(body("body3", 156.20, 208.4, Vec2(3.574, 1.687),
                             2.0 * std::atan2(0.481, 0.877), 0.0));
    auto pin = [](int i, int j, const Vec2& ci, const Vec2& cj) {
        ModelSpec::JointP p;
        p.body_i = i;
        p.body_j = j;
        p.chi_i = ci;
        p.chi_j = cj;
        return p;
    };
    s.jointsP.push_back(pin(0, 1, Vec2(0.0, 0.0), Vec2(-1.0, 0.0)));
    s.jointsP.push_back(pin(1, 2, Vec2(1.0, 0.0), Vec2(-2.0, 0.0)));
    s.jointsP.push_back(pin(2, 3, Vec2(2.0, 0.0), Vec2(2.0, 0.0)));
    s.jointsP.push_back(pin(3, 0, Vec2(-2.0, 0.0), Vec2(2.5, 0.0)));
    s.gravity2 = Vec2(0.0, -9.81);
    s.control.atol = 1e-8;
    s.control.rtol = 1e-8;
    s.control.h0 = 0.25;
    s.control.fac_max = 3.0;
    s.control.t_end = 10.0;
    return s;
}

inline std::vector<std::string> builtin_model_names() {
    return {"pendulum", "quadrangle", "crank", "planar-quadrangle"};
}

inline ModelSpec builtin_model(const std::string& name) {
    if (name == "pendulum") return builtin_pendulum();
    if (name == "quadrangle") return builtin_quadrangle();
    if (name == "crank") return builtin_crank();
    if (name == "planar-quadrangle") return builtin_planar_quadrangle();
    throw ModelError("unknown built-in model '" + name + "'");
}

}  // namespace mbs
