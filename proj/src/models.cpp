#include "trussopt/models.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <set>
#include <stdexcept>

namespace trussopt {

void ProblemSpec::validate() const {
    if (!(youngs_modulus > 0.0)) throw std::invalid_argument("Young modulus must be positive");
    if (!(volume_bound > 0.0)) throw std::invalid_argument("volume bound must be positive");
    if (load.p.size() != gs.dof_count())
        throw std::invalid_argument("load vector length != free DOF count");
    if (!load.p.allFinite() || load.p.isZero())
        throw std::invalid_argument("load must be finite and nonzero");
    if (max_free_nodes &&
        (*max_free_nodes < 1 || *max_free_nodes > gs.free_node_count()))
        throw std::invalid_argument("node bound out of range");
}

Eigen::MatrixXd assemble_stiffness(const GroundStructure& gs, double youngs_modulus,
                                   const Eigen::VectorXd& x) {
    const int d = gs.dof_count();
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, d);
    for (const Member& mem : gs.members) {
        if (x[mem.id] == 0.0) continue;
        const double coeff = youngs_modulus / mem.length * x[mem.id];
        const int d0 = gs.dof_index(mem.ends[0]);
        const int d1 = gs.dof_index(mem.ends[1]);
        const Eigen::Vector2d e = mem.dir;
        const Eigen::Matrix2d blk = coeff * (e * e.transpose());
        if (d0 >= 0) K.block<2, 2>(d0, d0) += blk;
        if (d1 >= 0) K.block<2, 2>(d1, d1) += blk;
        if (d0 >= 0 && d1 >= 0) {
            K.block<2, 2>(d0, d1) -= blk;
            K.block<2, 2>(d1, d0) -= blk;
        }
    }
    return K;
}

double evaluate_compliance(const GroundStructure& gs, double youngs_modulus,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& p) {
    if ((x.array() < 0.0).any()) throw std::invalid_argument("areas must be nonnegative");
    const Eigen::MatrixXd K = assemble_stiffness(gs, youngs_modulus, x);
    const double pnorm = p.norm();
    if (pnorm == 0.0) return 0.0;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    Eigen::VectorXd u = ldlt.solve(p);
    if (!u.allFinite()) return std::numeric_limits<double>::infinity();
    // a few refinement sweeps; stalls signal p outside range(K)
    for (int it = 0; it < 4; ++it) {
        const Eigen::VectorXd r = p - K * u;
        if (r.norm() <= 1e-12 * pnorm) break;
        const Eigen::VectorXd du = ldlt.solve(r);
        if (!du.allFinite()) break;
        u += du;
    }
    if ((p - K * u).norm() > 1e-8 * pnorm)
        return std::numeric_limits<double>::infinity();
    return p.dot(u);
}

namespace {

struct Scales {
    double alpha;  // area
    double gamma;  // compliance contribution
    double beta;   // load magnitude
};

Scales make_scales(const ProblemSpec& spec) {
    const double total_len = spec.gs.lengths().sum();
    Scales s;
    s.alpha = spec.volume_bound / total_len;
    s.beta = spec.load.p.norm();
    s.gamma = s.beta * s.beta / (spec.youngs_modulus * s.alpha);  // c_ref = 1 m
    return s;
}

// Shared continuous core of every model in this layer.
ComplianceModel build_core(const ProblemSpec& spec, const std::vector<int>& forced_zero_nodes) {
    spec.validate();
    const GroundStructure& gs = spec.gs;
    const Scales sc = make_scales(spec);

    ComplianceModel model;
    model.m = gs.member_count();
    model.l = gs.free_node_count();
    model.d = gs.dof_count();
    model.area_scale = sc.alpha;
    model.w_scale = sc.gamma;

    ConicProgram& prog = model.program;
    const int m = model.m;
    model.x_idx.resize(m);
    model.q_idx.resize(m);
    model.w_idx.resize(m);
    model.force_scale.resize(m);
    for (int i = 0; i < m; ++i) model.x_idx[i] = prog.add_vars(1);
    for (int i = 0; i < m; ++i) model.q_idx[i] = prog.add_vars(1);
    for (int i = 0; i < m; ++i) model.w_idx[i] = prog.add_vars(1);
    model.vol_slack = prog.add_vars(1);

    // objective: sum w_i in joules
    for (int i = 0; i < m; ++i) prog.set_objective(model.w_idx[i], sc.gamma);

    // equilibrium rows: sum_i sqrt(c_ref / c_i) u_i b_i = p / beta
    model.lengths = gs.lengths();
    const Eigen::VectorXd& lengths = model.lengths;
    std::vector<std::vector<std::pair<int, double>>> rows(model.d);
    for (int i = 0; i < m; ++i) {
        model.force_scale[i] =
            std::sqrt(sc.gamma * sc.alpha * spec.youngs_modulus / lengths[i]);
        const double coeff = model.force_scale[i] / sc.beta;
        const Eigen::SparseVector<double> b = gs.equilibrium_vector(i);
        for (Eigen::SparseVector<double>::InnerIterator it(b); it; ++it)
            rows[it.index()].push_back({model.q_idx[i], coeff * it.value()});
    }
    for (int r = 0; r < model.d; ++r) prog.add_row(rows[r], spec.load.p[r] / sc.beta);

    // volume row: sum_i (c_i / sum c) xhat_i + slack = 1
    {
        std::vector<std::pair<int, double>> row;
        const double total_len = lengths.sum();
        for (int i = 0; i < m; ++i)
            row.push_back({model.x_idx[i], lengths[i] / total_len});
        row.push_back({model.vol_slack, 1.0});
        prog.add_row(row, 1.0);
    }
    prog.add_nonneg({model.vol_slack});

    // per-member rotated cones (u_i, w_i, x_i): u_i^2 <= w_i x_i
    for (int i = 0; i < m; ++i)
        prog.add_rsoc({model.q_idx[i], model.w_idx[i], model.x_idx[i]});

    // Forced-zero nodes pin every incident member: area and force. Pinning
    // only x would leave load disconnection weakly infeasible (q_i^2 <= w_i*0
    // admits diverging w), which has no Farkas certificate; a removed member
    // carries no force, so q_i = 0 is exact and makes it strongly infeasible.
    std::set<int> forced_members;
    for (int j : forced_zero_nodes) {
        if (j < 0 || j >= model.l) throw std::invalid_argument("forced node out of range");
        for (int i : gs.incident_members(j)) forced_members.insert(i);
    }
    for (int i : forced_members) {
        prog.add_row({{model.x_idx[i], 1.0}}, 0.0);
        prog.add_row({{model.q_idx[i], 1.0}}, 0.0);
    }

    return model;
}

}  // namespace

ComplianceModel build_min_compliance(const ProblemSpec& spec,
                                     const std::vector<int>& forced_zero_nodes) {
    ComplianceModel model = build_core(spec, forced_zero_nodes);
    model.program.assemble_rows();
    return model;
}

ComplianceModel build_x_update(const ProblemSpec& spec, const Eigen::VectorXd& z_k,
                               const Eigen::VectorXd& v_k, double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    ComplianceModel model = build_core(spec, {});
    const int l = model.l;
    if (z_k.size() != l || v_k.size() != l)
        throw std::invalid_argument("z/v length != free node count");

    ConicProgram& prog = model.program;
    model.r_idx.resize(l);
    for (int j = 0; j < l; ++j) model.r_idx[j] = prog.add_vars(1);
    model.t_idx = prog.add_vars(1);
    model.one_idx = prog.add_vars(1);

    // rhat_j = (Z xhat)_j - (z_k - v_k)_j / alpha
    for (int j = 0; j < l; ++j) {
        std::vector<std::pair<int, double>> row;
        row.push_back({model.r_idx[j], 1.0});
        for (int i : spec.gs.incident_members(j)) row.push_back({model.x_idx[i], -1.0});
        prog.add_row(row, -(z_k[j] - v_k[j]) / model.area_scale);
    }
    prog.add_row({{model.one_idx, 1.0}}, 1.0);

    std::vector<int> block = model.r_idx;
    block.push_back(model.t_idx);
    block.push_back(model.one_idx);
    prog.add_rsoc(block);

    // penalty in mm^2 units: (rho/2) * (alpha/u_a)^2 * that
    const double sigma_r = model.area_scale / kAdmmAreaUnit;
    model.penalty_coeff = 0.5 * rho * sigma_r * sigma_r;
    prog.set_objective(model.t_idx, model.penalty_coeff);

    prog.assemble_rows();
    return model;
}

TrussDesign extract_design(const ComplianceModel& model, const ConicSolution& sol) {
    TrussDesign design;
    design.x.resize(model.m);
    for (int i = 0; i < model.m; ++i)
        design.x[i] = std::max(0.0, model.area_scale * sol.x[model.x_idx[i]]);
    double compl_sum = 0.0;
    for (int i = 0; i < model.m; ++i) compl_sum += model.w_scale * sol.x[model.w_idx[i]];
    design.compliance = compl_sum;
    design.volume = model.lengths.dot(design.x);
    return design;
}

double extract_objective(const ComplianceModel& model, const ConicSolution& sol) {
    double obj = 0.0;
    for (int i = 0; i < model.m; ++i) obj += model.w_scale * sol.x[model.w_idx[i]];
    if (model.t_idx >= 0) obj += model.penalty_coeff * sol.x[model.t_idx];
    return obj;
}

}  // namespace trussopt
