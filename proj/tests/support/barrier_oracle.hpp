// Test-only oracle: a dense log-barrier Newton solver for small conic
// programs. Shares nothing with the production interior-point path (no
// homogeneous embedding, no NT scaling, no sparse KKT): equalities are
// eliminated once through a dense nullspace basis and the barrier
// subproblems are solved by plain damped Newton, so it serves as an
// independent route for desk-scale cross-checks.
#pragma once

#include "trussopt/conic.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>

namespace trussopt::testing {

namespace detail {

// phi(x): sum of -log det over all cone blocks; +inf outside the interior.
inline double barrier_value(const ConicProgram& prog, const Eigen::VectorXd& v) {
    double phi = 0.0;
    for (const ConeBlock& blk : prog.cones) {
        if (blk.kind == ConeKind::nonneg) {
            for (int idx : blk.vars) {
                if (v[idx] <= 0.0) return std::numeric_limits<double>::infinity();
                phi -= std::log(v[idx]);
            }
        } else {
            const int dim = static_cast<int>(blk.vars.size());
            Eigen::VectorXd s(dim);
            for (int i = 0; i < dim; ++i) s[i] = v[blk.vars[i]];
            double det;
            if (blk.kind == ConeKind::soc) {
                det = s[0] * s[0] - s.tail(dim - 1).squaredNorm();
                if (s[0] <= 0.0) return std::numeric_limits<double>::infinity();
            } else {
                const int k = dim - 2;
                det = s[k] * s[k + 1] - s.head(k).squaredNorm();
                if (s[k] <= 0.0 || s[k + 1] <= 0.0)
                    return std::numeric_limits<double>::infinity();
            }
            if (det <= 0.0) return std::numeric_limits<double>::infinity();
            phi -= std::log(det);
        }
    }
    return phi;
}

inline bool barrier_derivs(const ConicProgram& prog, const Eigen::VectorXd& v,
                           Eigen::VectorXd& g, Eigen::MatrixXd& H) {
    const int n = prog.n_vars;
    g.setZero(n);
    H.setZero(n, n);
    for (const ConeBlock& blk : prog.cones) {
        const int dim = static_cast<int>(blk.vars.size());
        if (blk.kind == ConeKind::nonneg) {
            for (int idx : blk.vars) {
                if (v[idx] <= 0.0) return false;
                g[idx] -= 1.0 / v[idx];
                H(idx, idx) += 1.0 / (v[idx] * v[idx]);
            }
            continue;
        }
        Eigen::VectorXd s(dim);
        for (int i = 0; i < dim; ++i) s[i] = v[blk.vars[i]];
        double det;
        Eigen::VectorXd dd(dim);       // gradient of det
        Eigen::MatrixXd Hd(dim, dim);  // hessian of det
        Hd.setZero();
        if (blk.kind == ConeKind::soc) {
            det = s[0] * s[0] - s.tail(dim - 1).squaredNorm();
            dd = -2.0 * s;
            dd[0] = 2.0 * s[0];
            for (int i = 0; i < dim; ++i) Hd(i, i) = i == 0 ? 2.0 : -2.0;
            if (s[0] <= 0.0) return false;
        } else {
            const int k = dim - 2;
            det = s[k] * s[k + 1] - s.head(k).squaredNorm();
            dd.head(k) = -2.0 * s.head(k);
            dd[k] = s[k + 1];
            dd[k + 1] = s[k];
            for (int i = 0; i < k; ++i) Hd(i, i) = -2.0;
            Hd(k, k + 1) = Hd(k + 1, k) = 1.0;
            if (s[k] <= 0.0 || s[k + 1] <= 0.0) return false;
        }
        if (det <= 0.0) return false;
        const Eigen::VectorXd grad = -dd / det;
        const Eigen::MatrixXd hess = (dd * dd.transpose()) / (det * det) - Hd / det;
        for (int i = 0; i < dim; ++i) {
            g[blk.vars[i]] += grad[i];
            for (int j = 0; j < dim; ++j) H(blk.vars[i], blk.vars[j]) += hess(i, j);
        }
    }
    return true;
}

}  // namespace detail

// Minimizes c'x over {Ax = b, cones} starting from a strictly feasible x0
// with A x0 = b. Returns the objective value, or nullopt if the start is not
// strictly feasible.
inline std::optional<double> barrier_solve(const ConicProgram& prog, Eigen::VectorXd x,
                                           double tol = 1e-9) {
    const int n = prog.n_vars;
    if (!std::isfinite(detail::barrier_value(prog, x))) return std::nullopt;

    // Feasible set = x + range(N), N a nullspace basis of A.
    Eigen::MatrixXd N;
    if (prog.A.rows() > 0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd(prog.A));
        N = lu.kernel();
    } else {
        N = Eigen::MatrixXd::Identity(n, n);
    }
    const int nf = static_cast<int>(N.cols());
    if (nf == 0) return prog.c.dot(x);  // fully determined by the equalities

    int degree = 0;
    for (const ConeBlock& blk : prog.cones)
        degree += blk.kind == ConeKind::nonneg ? static_cast<int>(blk.vars.size()) : 2;

    Eigen::VectorXd g(n);
    Eigen::MatrixXd H(n, n);
    for (double t = 1.0; static_cast<double>(degree) / t >= tol; t *= 20.0) {
        for (int inner = 0; inner < 200; ++inner) {
            if (!detail::barrier_derivs(prog, x, g, H)) return std::nullopt;
            const Eigen::VectorXd gy = N.transpose() * (t * prog.c + g);
            Eigen::MatrixXd Hy = N.transpose() * H * N;
            Hy.diagonal().array() += 1e-12 * (1.0 + Hy.diagonal().maxCoeff());
            const Eigen::VectorXd dy = -Hy.ldlt().solve(gy);
            const Eigen::VectorXd dx = N * dy;
            const double lambda2 = -gy.dot(dy);
            if (!(lambda2 > 0.0) || !dx.allFinite()) break;
            if (0.5 * lambda2 < 1e-11 * (1.0 + t)) break;

            const double merit0 = t * prog.c.dot(x) + detail::barrier_value(prog, x);
            double alpha = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 80; ++ls) {
                const Eigen::VectorXd cand = x + alpha * dx;
                const double merit =
                    t * prog.c.dot(cand) + detail::barrier_value(prog, cand);
                if (merit <= merit0 - 1e-4 * alpha * lambda2) {
                    x = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;
        }
    }
    return prog.c.dot(x);
}

}  // namespace trussopt::testing
