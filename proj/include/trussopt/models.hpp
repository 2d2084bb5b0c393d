// Translation of truss data into conic programs: the plain compliance
// minimization, the penalized x-update used by the ADMM loop, node-forcing
// variants, and an independent finite-element compliance oracle.
#pragma once

#include "trussopt/conic.hpp"
#include "trussopt/ground.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace trussopt {

struct LoadCase {
    Eigen::VectorXd p;  // nodal forces over the free DOFs, newtons
};

struct ProblemSpec {
    GroundStructure gs;
    LoadCase load;
    double youngs_modulus = 0.0;  // Pa
    double volume_bound = 0.0;    // m^3
    std::optional<int> max_free_nodes;  // cardinality bound on node activity

    void validate() const;
};

// Internal scaling applied before solving (areas are rescaled to O(1));
// the objective value stays in joules. extract_design undoes the scaling.
struct ComplianceModel {
    ConicProgram program;
    int m = 0, l = 0, d = 0;
    double area_scale = 1.0;          // x = area_scale * xhat
    double w_scale = 1.0;             // w = w_scale * what
    std::vector<double> force_scale;  // q_i = force_scale[i] * u_i
    Eigen::VectorXd lengths;          // member lengths c, meters
    std::vector<int> x_idx, q_idx, w_idx;
    int vol_slack = -1;

    // Populated by build_x_update only.
    std::vector<int> r_idx;
    int t_idx = -1;
    int one_idx = -1;
    double penalty_coeff = 0.0;  // objective coefficient on the t variable
};

// K(x) = sum_i (E / c_i) x_i b_i b_i^T over the free DOFs.
Eigen::MatrixXd assemble_stiffness(const GroundStructure& gs, double youngs_modulus,
                                   const Eigen::VectorXd& x);

// p^T u with K(x) u = p, solved to relative residual <= 1e-10. Returns
// +infinity when p is not in the range of K (mechanism / unsupported load).
double evaluate_compliance(const GroundStructure& gs, double youngs_modulus,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& p);

// Minimum-compliance SOCP; members incident to forced-zero free nodes are
// pinned to zero area by equality rows (indexing stays stable).
ComplianceModel build_min_compliance(const ProblemSpec& spec,
                                     const std::vector<int>& forced_zero_nodes = {});

// ADMM x-update: all of build_min_compliance plus the quadratic penalty
// (rho/2)||Z x - z_k + v_k||^2 measured in the ADMM area unit (mm^2).
ComplianceModel build_x_update(const ProblemSpec& spec, const Eigen::VectorXd& z_k,
                               const Eigen::VectorXd& v_k, double rho);

// Area unit of the penalty and node-activity thresholds (1 mm^2 in m^2).
constexpr double kAdmmAreaUnit = 1e-6;

TrussDesign extract_design(const ComplianceModel& model, const ConicSolution& sol);

// Full subproblem objective in joules: compliance part + penalty part.
double extract_objective(const ComplianceModel& model, const ConicSolution& sol);

}  // namespace trussopt
