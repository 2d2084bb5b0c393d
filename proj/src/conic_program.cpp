#include "trussopt/conic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace trussopt {

void ConicProgram::validate() const {
    if (rows_dirty_) throw std::invalid_argument("assemble_rows() must run before validate()");
    if (n_vars < 0) throw std::invalid_argument("negative variable count");
    if (c.size() != n_vars) throw std::invalid_argument("objective length != n_vars");
    if (A.cols() != n_vars) throw std::invalid_argument("A column count != n_vars");
    if (b.size() != A.rows()) throw std::invalid_argument("rhs length != row count");
    if (!c.allFinite() || !b.allFinite()) throw std::invalid_argument("non-finite data");

    std::vector<char> seen(n_vars, 0);
    for (const ConeBlock& blk : cones) {
        const int dim = static_cast<int>(blk.vars.size());
        if (dim == 0) throw std::invalid_argument("empty cone block");
        if (blk.kind == ConeKind::soc && dim < 2)
            throw std::invalid_argument("soc block needs dimension >= 2");
        if (blk.kind == ConeKind::rsoc && dim < 3)
            throw std::invalid_argument("rsoc block needs dimension >= 3");
        for (int v : blk.vars) {
            if (v < 0 || v >= n_vars) throw std::invalid_argument("cone index out of range");
            if (seen[v]) throw std::invalid_argument("variable in more than one cone");
            seen[v] = 1;
        }
    }
}

int ConicProgram::add_vars(int count) {
    const int first = n_vars;
    n_vars += count;
    c.conservativeResize(n_vars);
    c.tail(count).setZero();
    return first;
}

void ConicProgram::add_nonneg(const std::vector<int>& vars) {
    cones.push_back({ConeKind::nonneg, vars});
}

void ConicProgram::add_soc(const std::vector<int>& vars) {
    cones.push_back({ConeKind::soc, vars});
}

void ConicProgram::add_rsoc(const std::vector<int>& vars) {
    cones.push_back({ConeKind::rsoc, vars});
}

void ConicProgram::add_row(const std::vector<std::pair<int, double>>& coeffs, double rhs) {
    const int row = static_cast<int>(rhs_.size());
    for (const auto& [var, coeff] : coeffs)
        if (coeff != 0.0) row_triplets_.emplace_back(row, var, coeff);
    rhs_.push_back(rhs);
    rows_dirty_ = true;
}

void ConicProgram::set_objective(int var, double coeff) { c[var] = coeff; }

void ConicProgram::assemble_rows() {
    const int p = static_cast<int>(rhs_.size());
    A.resize(p, n_vars);
    A.setFromTriplets(row_triplets_.begin(), row_triplets_.end());
    A.makeCompressed();
    b = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), p);
    rows_dirty_ = false;
}

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::numerical_limit: return "numerical_limit";
    }
    return "?";
}

Eigen::MatrixXd rsoc_to_soc(int x_dim) {
    if (x_dim < 1) throw std::invalid_argument("rsoc_to_soc: x_dim must be >= 1");
    const int dim = x_dim + 2;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(dim, dim);
    // input ordering (x_1..x_k, y, z); output (y+z, y-z, 2x)
    T(0, x_dim) = 1.0;
    T(0, x_dim + 1) = 1.0;
    T(1, x_dim) = 1.0;
    T(1, x_dim + 1) = -1.0;
    for (int i = 0; i < x_dim; ++i) T(2 + i, i) = 2.0;
    return T;
}

bool in_soc(const Eigen::VectorXd& v, double tol) {
    return v[0] + tol >= v.tail(v.size() - 1).norm();
}

bool in_rsoc(const Eigen::VectorXd& v, double tol) {
    const int k = static_cast<int>(v.size()) - 2;
    const double y = v[k], z = v[k + 1];
    return y >= -tol && z >= -tol && v.head(k).squaredNorm() <= y * z + tol;
}

std::string ConicProgram::dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "# trussopt conic benchmark dump\n";
    os << "VER 1\n";
    os << "OBJSENSE MIN\n";
    os << "VAR " << n_vars << "\n";
    os << "OBJ";
    for (int i = 0; i < n_vars; ++i) os << " " << c[i];
    os << "\n";
    os << "ROWS " << A.rows() << "\n";
    // A is column-major; emit coordinate triplets sorted by (row, col).
    std::vector<std::tuple<int, int, double>> entries;
    for (int col = 0; col < A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, col); it; ++it)
            entries.emplace_back(it.row(), it.col(), it.value());
    std::sort(entries.begin(), entries.end());
    for (const auto& [r, ccol, val] : entries) os << "A " << r << " " << ccol << " " << val << "\n";
    for (int r = 0; r < b.size(); ++r) os << "B " << r << " " << b[r] << "\n";
    for (const ConeBlock& blk : cones) {
        switch (blk.kind) {
            case ConeKind::nonneg: os << "CONE NONNEG"; break;
            case ConeKind::soc: os << "CONE SOC"; break;
            case ConeKind::rsoc: os << "CONE RSOC"; break;
        }
        for (int v : blk.vars) os << " " << v;
        os << "\n";
    }
    return os.str();
}

}  // namespace trussopt
