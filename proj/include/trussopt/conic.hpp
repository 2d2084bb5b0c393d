// Self-contained conic programming layer: a problem container for linear
// objectives, linear equality rows and nonnegative / second-order /
// rotated-second-order cone memberships, plus a primal-dual interior-point
// solver (homogeneous self-dual embedding with Nesterov-Todd scaling).
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace trussopt {

enum class ConeKind { nonneg, soc, rsoc };

struct ConeBlock {
    ConeKind kind;
    std::vector<int> vars;  // soc: (s0, s1...); rsoc: (x..., y, z)
};

// min c'x  s.t.  A x = b,  cone memberships on disjoint variable blocks.
// Variables not named by any cone are free.
class ConicProgram {
  public:
    int n_vars = 0;
    Eigen::VectorXd c;
    Eigen::SparseMatrix<double> A;  // p x n, row-wise equality constraints
    Eigen::VectorXd b;
    std::vector<ConeBlock> cones;

    int n_rows() const { return static_cast<int>(A.rows()); }

    // Throws std::invalid_argument if dimensions disagree, a cone index is
    // out of range or a variable appears in more than one cone.
    void validate() const;

    // Builder helpers used throughout the model layer.
    int add_vars(int count);
    void add_nonneg(const std::vector<int>& vars);
    void add_soc(const std::vector<int>& vars);
    void add_rsoc(const std::vector<int>& vars);
    void add_row(const std::vector<std::pair<int, double>>& coeffs, double rhs);
    void set_objective(int var, double coeff);

    // Plain-text dump in a CBF-like layout for cross-validation against
    // external solvers (format documented in the README).
    std::string dump() const;

  private:
    std::vector<Eigen::Triplet<double>> row_triplets_;
    std::vector<double> rhs_;
    bool rows_dirty_ = false;

  public:
    // Materializes pending add_row calls into A/b.
    void assemble_rows();
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_limit };

const char* to_string(SolveStatus s);

struct ConicSolution {
    SolveStatus status = SolveStatus::numerical_limit;
    Eigen::VectorXd x;  // primal values (certificate ray when unbounded)
    Eigen::VectorXd y;  // equality multipliers (Farkas when infeasible)
    Eigen::VectorXd z;  // cone multipliers, stacked in cone-block order
    Eigen::VectorXd s;  // cone slacks, stacked in cone-block order
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double duality_gap = 0.0;
    int iterations = 0;
};

struct SolverSettings {
    double tol = 1e-8;            // relative feasibility/gap target
    double tol_reduced = 5e-5;    // fallback accuracy before numerical_limit
    int max_iter = 100;
    int refine_iter = 9;          // iterative-refinement cap per KKT solve
    double static_reg = 1e-9;     // quasi-definite regularization
    double step_scale = 0.99;     // fraction of the max cone step
    int ruiz_iter = 6;            // equilibration sweeps
    bool verbose = false;
    int threads = 0;              // 0 = library default; plumbed to kernels
};

// Solves the program; never throws on numerical failure (status reports it).
// Throws std::invalid_argument for malformed programs.
ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings = {});
ConicSolution solve(const ConicProgram& prog, double tol);

// Linear map taking an rsoc block (x..., y, z) of dimension x_dim + 2 onto an
// soc block of the same dimension: (y+z, y-z, 2x). Row-major dense.
Eigen::MatrixXd rsoc_to_soc(int x_dim);

// Membership tests used by the solver and by property tests.
bool in_soc(const Eigen::VectorXd& v, double tol = 0.0);
bool in_rsoc(const Eigen::VectorXd& v, double tol = 0.0);

}  // namespace trussopt
