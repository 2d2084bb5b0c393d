#include "trussopt/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <atomic>

namespace trussopt::kernels {

namespace {
std::atomic<int> g_threads{0};

// Work below this many nonzeros is not worth a parallel region.
constexpr int kParallelCutoff = 8192;

inline int effective_threads() {
#ifdef _OPENMP
    const int req = g_threads.load(std::memory_order_relaxed);
    return req > 0 ? req : omp_get_max_threads();
#else
    return 1;
#endif
}
}  // namespace

void set_threads(int n) { g_threads.store(n, std::memory_order_relaxed); }
int threads() { return effective_threads(); }

void matvec_serial(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(A.rows());
    for (int r = 0; r < A.rows(); ++r) {
        double acc = 0.0;
        for (RowMajorSparse::InnerIterator it(A, r); it; ++it) acc += it.value() * x[it.col()];
        y[r] = acc;
    }
}

void matvec_omp(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(A.rows());
    const int rows = static_cast<int>(A.rows());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (RowMajorSparse::InnerIterator it(A, r); it; ++it) acc += it.value() * x[it.col()];
        y[r] = acc;
    }
}

void matvec(const RowMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    if (effective_threads() > 1 && A.nonZeros() >= kParallelCutoff)
        matvec_omp(A, x, y);
    else
        matvec_serial(A, x, y);
}

void tmatvec_serial(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(A.cols());
    for (int c = 0; c < A.cols(); ++c) {
        double acc = 0.0;
        for (ColMajorSparse::InnerIterator it(A, c); it; ++it) acc += it.value() * x[it.row()];
        y[c] = acc;
    }
}

void tmatvec_omp(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    y.resize(A.cols());
    const int cols = static_cast<int>(A.cols());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(effective_threads())
#endif
    for (int c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (ColMajorSparse::InnerIterator it(A, c); it; ++it) acc += it.value() * x[it.row()];
        y[c] = acc;
    }
}

void tmatvec(const ColMajorSparse& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    if (effective_threads() > 1 && A.nonZeros() >= kParallelCutoff)
        tmatvec_omp(A, x, y);
    else
        tmatvec_serial(A, x, y);
}

void parallel_for(int count, const std::function<void(int)>& fn) {
#ifdef _OPENMP
    if (effective_threads() > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(effective_threads())
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
#endif
    for (int i = 0; i < count; ++i) fn(i);
}

}  // namespace trussopt::kernels
