// Data-parallel numeric kernels with a serial reference implementation.
// Every parallel kernel computes each output element with a fixed summation
// order, so results are bitwise identical to the serial path for any thread
// count; the benchmark target compares the two.
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>

namespace trussopt::kernels {

using RowMajorSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using ColMajorSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

// Global thread budget: 0 = use OpenMP default, 1 = serial reference.
void set_threads(int n);
int threads();

// y = A x, one independent row dot-product per output entry.
void matvec_serial(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);
void matvec_omp(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);
void matvec(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);

// y = A^T x for a column-major A: one column dot-product per output entry.
void tmatvec_serial(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);
void tmatvec_omp(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);
void tmatvec(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);

// Runs fn(i) for i in [0, count) on the active thread budget. Each index is
// handled exactly once; results must be written to index-owned storage.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace trussopt::kernels
