// Primal-dual interior-point solver for the conic problems built by the
// model layer. The program (variables in nonneg/soc/rsoc cones, linear
// equality rows) is lowered to the standard form
//
//     min c'x   s.t.  A x = b,   G x + s = h,   s in K
//
// with K a product of a nonnegative orthant and second-order cones (rsoc
// blocks enter through the linear soc embedding). The homogeneous self-dual
// embedding is solved with Nesterov-Todd scalings and a Mehrotra
// predictor-corrector; the quasi-definite KKT system is factorized by a
// regularized LDL^T with iterative refinement against the unregularized
// matrix.
#include "trussopt/conic.hpp"
#include "trussopt/kernels.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace trussopt {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

constexpr double kStepMin = 1e-7;
constexpr double kSafeguard = 500.0;
constexpr double kSigmaMin = 1e-6;
constexpr double kSigmaMax = 0.999;

struct ConeRowBlock {
    ConeKind kind;  // nonneg or soc only after lowering
    int start;      // first cone row
    int dim;
};

// Nesterov-Todd scaling state for one soc block.
struct SocScaling {
    double eta = 1.0;
    double eta2 = 1.0;
    Vec wbar;  // normalized scaling point, wbar' J wbar = 1
};

struct ConeOps {
    int m_rows = 0;  // total cone rows
    int n_lp = 0;
    std::vector<int> lp_rows;          // row index of every nonneg entry
    std::vector<ConeRowBlock> blocks;  // in program order
    std::vector<int> soc_block_ids;    // indices into `blocks` of soc blocks
    std::vector<SocScaling> soc;       // one per soc block
    Vec lp_w2;                         // s_i / z_i per nonneg row

    int degree() const { return n_lp + static_cast<int>(soc_block_ids.size()); }

    bool update(const Vec& s, const Vec& z);
    void scale_w(const Vec& u, Vec& out) const;      // out = W u
    void scale_winv(const Vec& u, Vec& out) const;   // out = W^{-1} u
    void add_w2(const Vec& u, Vec& out) const;       // out += W^2 u
    void product(const Vec& u, const Vec& v, Vec& out) const;   // u o v
    void division(const Vec& lam, const Vec& d, Vec& out) const;  // lam \ d
    void bring_to_cone(const Vec& r, Vec& out) const;
    double max_step(const Vec& lam, const Vec& ds, const Vec& dz) const;
    void add_identity_e(Vec& v, double coeff) const;  // v += coeff * e
    void project(Vec& v) const;
};

bool ConeOps::update(const Vec& s, const Vec& z) {
    for (int r : lp_rows) {
        if (s[r] <= 0.0 || z[r] <= 0.0) return false;
    }
    lp_w2.resize(static_cast<int>(lp_rows.size()));
    for (size_t i = 0; i < lp_rows.size(); ++i) lp_w2[i] = s[lp_rows[i]] / z[lp_rows[i]];

    for (size_t k = 0; k < soc_block_ids.size(); ++k) {
        const ConeRowBlock& blk = blocks[soc_block_ids[k]];
        const auto sb = s.segment(blk.start, blk.dim);
        const auto zb = z.segment(blk.start, blk.dim);
        const double sres = sb[0] * sb[0] - sb.tail(blk.dim - 1).squaredNorm();
        const double zres = zb[0] * zb[0] - zb.tail(blk.dim - 1).squaredNorm();
        if (sres <= 0.0 || zres <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0) return false;
        const double snorm = std::sqrt(sres);
        const double znorm = std::sqrt(zres);
        SocScaling& sc = soc[k];
        sc.eta2 = snorm / znorm;
        sc.eta = std::sqrt(sc.eta2);
        const Vec sbar = sb / snorm;
        Vec zbar = zb / znorm;
        double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
        zbar.tail(blk.dim - 1) *= -1.0;  // J zbar
        sc.wbar = (sbar + zbar) / (2.0 * gamma);
    }
    return true;
}

void ConeOps::scale_w(const Vec& u, Vec& out) const {
    out.resize(m_rows);
    for (size_t i = 0; i < lp_rows.size(); ++i)
        out[lp_rows[i]] = std::sqrt(lp_w2[i]) * u[lp_rows[i]];
    for (size_t k = 0; k < soc_block_ids.size(); ++k) {
        const ConeRowBlock& blk = blocks[soc_block_ids[k]];
        const SocScaling& sc = soc[k];
        const auto ub = u.segment(blk.start, blk.dim);
        const double a = sc.wbar[0];
        const auto q = sc.wbar.tail(blk.dim - 1);
        const double zeta = q.dot(ub.tail(blk.dim - 1));
        out[blk.start] = sc.eta * (a * ub[0] + zeta);
        out.segment(blk.start + 1, blk.dim - 1) =
            sc.eta * (ub.tail(blk.dim - 1) + (ub[0] + zeta / (1.0 + a)) * q);
    }
}

void ConeOps::scale_winv(const Vec& u, Vec& out) const {
    out.resize(m_rows);
    for (size_t i = 0; i < lp_rows.size(); ++i)
        out[lp_rows[i]] = u[lp_rows[i]] / std::sqrt(lp_w2[i]);
    for (size_t k = 0; k < soc_block_ids.size(); ++k) {
        const ConeRowBlock& blk = blocks[soc_block_ids[k]];
        const SocScaling& sc = soc[k];
        const auto ub = u.segment(blk.start, blk.dim);
        const double a = sc.wbar[0];
        const auto q = sc.wbar.tail(blk.dim - 1);
        const double zeta = q.dot(ub.tail(blk.dim - 1));
        out[blk.start] = (a * ub[0] - zeta) / sc.eta;
        out.segment(blk.start + 1, blk.dim - 1) =
            (ub.tail(blk.dim - 1) + (-ub[0] + zeta / (1.0 + a)) * q) / sc.eta;
    }
}

void ConeOps::add_w2(const Vec& u, Vec& out) const {
    for (size_t i = 0; i < lp_rows.size(); ++i) out[lp_rows[i]] += lp_w2[i] * u[lp_rows[i]];
    for (size_t k = 0; k < soc_block_ids.size(); ++k) {
        const ConeRowBlock& blk = blocks[soc_block_ids[k]];
        const SocScaling& sc = soc[k];
        const auto ub = u.segment(blk.start, blk.dim);
        // W^2 = eta^2 (2 wbar wbar' - J)
        const double dot = sc.wbar.dot(ub);
        out[blk.start] += sc.eta2 * (2.0 * sc.wbar[0] * dot - ub[0]);
        out.segment(blk.start + 1, blk.dim - 1) +=
            sc.eta2 * (2.0 * dot * sc.wbar.tail(blk.dim - 1) + ub.tail(blk.dim - 1));
    }
}

void ConeOps::product(const Vec& u, const Vec& v, Vec& out) const {
    out.resize(m_rows);
    for (int r : lp_rows) out[r] = u[r] * v[r];
    for (int bi : soc_block_ids) {
        const ConeRowBlock& blk = blocks[bi];
        const auto ub = u.segment(blk.start, blk.dim);
        const auto vb = v.segment(blk.start, blk.dim);
        out[blk.start] = ub.dot(vb);
        out.segment(blk.start + 1, blk.dim - 1) =
            ub[0] * vb.tail(blk.dim - 1) + vb[0] * ub.tail(blk.dim - 1);
    }
}

void ConeOps::division(const Vec& lam, const Vec& d, Vec& out) const {
    out.resize(m_rows);
    for (int r : lp_rows) out[r] = d[r] / lam[r];
    for (int bi : soc_block_ids) {
        const ConeRowBlock& blk = blocks[bi];
        const auto lb = lam.segment(blk.start, blk.dim);
        const auto db = d.segment(blk.start, blk.dim);
        const double l0 = lb[0];
        const double rho = l0 * l0 - lb.tail(blk.dim - 1).squaredNorm();
        const double zeta = lb.tail(blk.dim - 1).dot(db.tail(blk.dim - 1));
        out[blk.start] = (l0 * db[0] - zeta) / rho;
        out.segment(blk.start + 1, blk.dim - 1) =
            ((zeta / l0 - db[0]) / rho) * lb.tail(blk.dim - 1) + db.tail(blk.dim - 1) / l0;
    }
}

void ConeOps::bring_to_cone(const Vec& r, Vec& out) const {
    double alpha = -0.99;
    for (int row : lp_rows) alpha = std::max(alpha, -r[row]);
    for (int bi : soc_block_ids) {
        const ConeRowBlock& blk = blocks[bi];
        const double res = r[blk.start] - r.segment(blk.start + 1, blk.dim - 1).norm();
        alpha = std::max(alpha, -res);
    }
    out = r;
    add_identity_e(out, 1.0 + alpha);
}

void ConeOps::add_identity_e(Vec& v, double coeff) const {
    for (int r : lp_rows) v[r] += coeff;
    for (int bi : soc_block_ids) v[blocks[bi].start] += coeff;
}

// Euclidean projection onto the (self-dual) lowered cone.
void ConeOps::project(Vec& v) const {
    for (int r : lp_rows) v[r] = std::max(v[r], 0.0);
    for (int bi : soc_block_ids) {
        const ConeRowBlock& blk = blocks[bi];
        const double t = v[blk.start];
        const double un = v.segment(blk.start + 1, blk.dim - 1).norm();
        if (un <= t) continue;
        if (un <= -t) {
            v.segment(blk.start, blk.dim).setZero();
        } else {
            const double coeff = 0.5 * (t + un);
            v[blk.start] = coeff;
            v.segment(blk.start + 1, blk.dim - 1) *= coeff / un;
        }
    }
}

double ConeOps::max_step(const Vec& lam, const Vec& ds, const Vec& dz) const {
    double alpha = std::numeric_limits<double>::max();
    for (int r : lp_rows) {
        if (ds[r] < 0.0) alpha = std::min(alpha, -lam[r] / ds[r]);
        if (dz[r] < 0.0) alpha = std::min(alpha, -lam[r] / dz[r]);
    }
    for (int bi : soc_block_ids) {
        const ConeRowBlock& blk = blocks[bi];
        const auto lb = lam.segment(blk.start, blk.dim);
        const double lknorm2 = lb[0] * lb[0] - lb.tail(blk.dim - 1).squaredNorm();
        if (lknorm2 <= 0.0) continue;
        const double lknorm = std::sqrt(lknorm2);
        const Vec lkbar = lb / lknorm;
        const double inv = 1.0 / lknorm;
        for (const Vec* dir : {&ds, &dz}) {
            const auto db = dir->segment(blk.start, blk.dim);
            const double lk_d = lkbar[0] * db[0] - lkbar.tail(blk.dim - 1).dot(db.tail(blk.dim - 1));
            const double factor = (lk_d + db[0]) / (lkbar[0] + 1.0);
            Vec rho(blk.dim);
            rho[0] = inv * lk_d;
            rho.tail(blk.dim - 1) = inv * (db.tail(blk.dim - 1) - factor * lkbar.tail(blk.dim - 1));
            const double rhonorm = rho.tail(blk.dim - 1).norm() - rho[0];
            if (rhonorm > 0.0) alpha = std::min(alpha, 1.0 / rhonorm);
        }
    }
    return alpha;
}

// Lowered problem data plus the equilibration used to build it.
struct Lowered {
    int n = 0, p = 0, mG = 0;
    SpMat A, G;        // column-major, equilibrated (for transpose products)
    RowMat Ar, Gr;     // row-major (for forward products)
    SpMat G0;          // cone rows in original units (certificate polish)
    RowMat G0r;
    Vec c, b, h;
    ConeOps cone;

    Vec dcol, drowA, drowG;
    double cost_scale = 1.0;

    // Dense spans of rsoc blocks (program order) for mapping duals/slacks back.
    struct BlockMap {
        ConeKind program_kind;
        std::vector<int> vars;
        int row_start;
        int dim;
    };
    std::vector<BlockMap> block_maps;
};

Lowered lower_program(const ConicProgram& prog, int ruiz_iter) {
    Lowered L;
    L.n = prog.n_vars;
    L.p = prog.n_rows();
    L.c = prog.c;
    L.b = prog.b;
    L.A = prog.A;

    // Cone rows: nonneg variables get a single -1 row; soc blocks a -I block;
    // rsoc blocks the negated soc embedding (y+z, y-z, 2x).
    std::vector<Triplet> gtrips;
    int row = 0;
    for (const ConeBlock& blk : prog.cones) {
        const int dim = static_cast<int>(blk.vars.size());
        Lowered::BlockMap bm{blk.kind, blk.vars, row, dim};
        switch (blk.kind) {
            case ConeKind::nonneg: {
                ConeRowBlock rb{ConeKind::nonneg, row, dim};
                for (int i = 0; i < dim; ++i) {
                    gtrips.emplace_back(row + i, blk.vars[i], -1.0);
                    L.cone.lp_rows.push_back(row + i);
                }
                L.cone.blocks.push_back(rb);
                break;
            }
            case ConeKind::soc: {
                ConeRowBlock rb{ConeKind::soc, row, dim};
                for (int i = 0; i < dim; ++i) gtrips.emplace_back(row + i, blk.vars[i], -1.0);
                L.cone.blocks.push_back(rb);
                break;
            }
            case ConeKind::rsoc: {
                // s = (y + z, y - z, 2x) with vars ordered (x..., y, z)
                ConeRowBlock rb{ConeKind::soc, row, dim};
                const int y = blk.vars[dim - 2];
                const int z = blk.vars[dim - 1];
                gtrips.emplace_back(row, y, -1.0);
                gtrips.emplace_back(row, z, -1.0);
                gtrips.emplace_back(row + 1, y, -1.0);
                gtrips.emplace_back(row + 1, z, 1.0);
                for (int i = 0; i < dim - 2; ++i)
                    gtrips.emplace_back(row + 2 + i, blk.vars[i], -2.0);
                L.cone.blocks.push_back(rb);
                break;
            }
        }
        L.block_maps.push_back(bm);
        row += dim;
    }
    L.mG = row;
    L.cone.m_rows = row;
    L.cone.n_lp = static_cast<int>(L.cone.lp_rows.size());
    for (size_t i = 0; i < L.cone.blocks.size(); ++i)
        if (L.cone.blocks[i].kind == ConeKind::soc)
            L.cone.soc_block_ids.push_back(static_cast<int>(i));
    L.cone.soc.resize(L.cone.soc_block_ids.size());

    L.G.resize(L.mG, L.n);
    L.G.setFromTriplets(gtrips.begin(), gtrips.end());
    L.G0 = L.G;
    L.G0.makeCompressed();
    L.G0r = RowMat(L.G0);
    L.h = Vec::Zero(L.mG);

    // Ruiz equilibration over the stacked [A; G]; soc row blocks share one
    // factor so cone geometry is preserved.
    L.dcol = Vec::Ones(L.n);
    L.drowA = Vec::Ones(L.p);
    L.drowG = Vec::Ones(L.mG);
    for (int sweep = 0; sweep < ruiz_iter; ++sweep) {
        Vec colmax = Vec::Zero(L.n);
        Vec rowmaxA = Vec::Zero(L.p);
        Vec rowmaxG = Vec::Zero(L.mG);
        for (int cidx = 0; cidx < L.n; ++cidx) {
            for (SpMat::InnerIterator it(L.A, cidx); it; ++it) {
                const double v = std::abs(it.value());
                colmax[cidx] = std::max(colmax[cidx], v);
                rowmaxA[it.row()] = std::max(rowmaxA[it.row()], v);
            }
            for (SpMat::InnerIterator it(L.G, cidx); it; ++it) {
                const double v = std::abs(it.value());
                colmax[cidx] = std::max(colmax[cidx], v);
                rowmaxG[it.row()] = std::max(rowmaxG[it.row()], v);
            }
        }
        // Uniform factor per soc block.
        for (int bi : L.cone.soc_block_ids) {
            const ConeRowBlock& blk = L.cone.blocks[bi];
            const double mx = rowmaxG.segment(blk.start, blk.dim).maxCoeff();
            rowmaxG.segment(blk.start, blk.dim).setConstant(mx);
        }
        auto factor = [](double m) { return m > 0.0 ? 1.0 / std::sqrt(m) : 1.0; };
        Vec fc = colmax.unaryExpr(factor);
        Vec fa = rowmaxA.unaryExpr(factor);
        Vec fg = rowmaxG.unaryExpr(factor);
        for (int cidx = 0; cidx < L.n; ++cidx) {
            for (SpMat::InnerIterator it(L.A, cidx); it; ++it)
                it.valueRef() *= fa[it.row()] * fc[cidx];
            for (SpMat::InnerIterator it(L.G, cidx); it; ++it)
                it.valueRef() *= fg[it.row()] * fc[cidx];
        }
        L.dcol.array() *= fc.array();
        L.drowA.array() *= fa.array();
        L.drowG.array() *= fg.array();
    }
    L.c = (prog.c.array() * L.dcol.array()).matrix();
    L.cost_scale = 1.0 / std::max(1.0, L.c.lpNorm<Eigen::Infinity>());
    L.c *= L.cost_scale;
    L.b = (prog.b.array() * L.drowA.array()).matrix();

    L.A.makeCompressed();
    L.G.makeCompressed();
    L.Ar = RowMat(L.A);
    L.Gr = RowMat(L.G);
    return L;
}

// Regularized KKT system
//   [ dI   A'        G'      ]
//   [ A   -dI                 ]
//   [ G        -W^2 - dI      ]
// stored as its lower triangle with index maps for the mutable W^2 entries.
class KktSystem {
  public:
    KktSystem(const Lowered& L, double delta) : L_(L), delta_(delta) {
        const int n = L.n, p = L.p, mG = L.mG;
        dim_ = n + p + mG;
        std::vector<Triplet> trips;
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, delta_);
        for (int col = 0; col < n; ++col) {
            for (SpMat::InnerIterator it(L.A, col); it; ++it)
                trips.emplace_back(n + static_cast<int>(it.row()), col, it.value());
            for (SpMat::InnerIterator it(L.G, col); it; ++it)
                trips.emplace_back(n + p + static_cast<int>(it.row()), col, it.value());
        }
        for (int i = 0; i < p; ++i) trips.emplace_back(n + i, n + i, -delta_);
        // Structural H slots: diagonal for nonneg rows, dense lower triangles
        // for soc blocks.
        for (int r : L.cone.lp_rows) trips.emplace_back(n + p + r, n + p + r, -1.0 - delta_);
        for (int bi : L.cone.soc_block_ids) {
            const ConeRowBlock& blk = L.cone.blocks[bi];
            for (int i = 0; i < blk.dim; ++i)
                for (int j = 0; j <= i; ++j)
                    trips.emplace_back(n + p + blk.start + i, n + p + blk.start + j,
                                       i == j ? -1.0 - delta_ : 0.0);
        }
        K_.resize(dim_, dim_);
        K_.setFromTriplets(trips.begin(), trips.end());
        K_.makeCompressed();

        for (int r : L.cone.lp_rows) lp_slots_.push_back(slot(n + p + r, n + p + r));
        for (int bi : L.cone.soc_block_ids) {
            const ConeRowBlock& blk = L.cone.blocks[bi];
            std::vector<int> slots;
            for (int i = 0; i < blk.dim; ++i)
                for (int j = 0; j <= i; ++j)
                    slots.push_back(slot(n + p + blk.start + i, n + p + blk.start + j));
            soc_slots_.push_back(std::move(slots));
        }
        ldlt_.analyzePattern(K_);
        identity_scaling_ = true;
        factorize();
    }

    // Loads -W^2 - dI into the H slots and refactorizes.
    bool update_scalings(const ConeOps& cone) {
        double* vals = K_.valuePtr();
        for (size_t i = 0; i < lp_slots_.size(); ++i)
            vals[lp_slots_[i]] = -cone.lp_w2[static_cast<int>(i)] - delta_;
        for (size_t k = 0; k < soc_slots_.size(); ++k) {
            const SocScaling& sc = cone.soc[k];
            const int dim = static_cast<int>(sc.wbar.size());
            int s = 0;
            for (int i = 0; i < dim; ++i) {
                for (int j = 0; j <= i; ++j, ++s) {
                    const double jterm = (i == j) ? (i == 0 ? 1.0 : -1.0) : 0.0;
                    double v = -sc.eta2 * (2.0 * sc.wbar[i] * sc.wbar[j] - jterm);
                    if (i == j) v -= delta_;
                    vals[soc_slots_[k][s]] = v;
                }
            }
        }
        identity_scaling_ = false;
        return factorize();
    }

    // Solves the KKT system by refining the factored solve. Refinement
    // targets the regularized matrix by default (consistent fixed point); the
    // pure-equality path refines against the exact system instead.
    int solve(const Vec& bx, const Vec& by, const Vec& bz, const ConeOps& cone, Vec& dx,
              Vec& dy, Vec& dz, int max_refine, bool reg_residual = true) const {
        const int n = L_.n, p = L_.p, mG = L_.mG;
        Vec rhs(dim_);
        rhs << bx, by, bz;
        Vec sol = ldlt_.solve(rhs);
        Vec best = sol;
        double best_err = std::numeric_limits<double>::max();
        int used = 0;
        for (int it = 0; it <= max_refine; ++it) {
            Vec err(dim_);
            residual(bx, by, bz, sol, cone, err, reg_residual);
            const double nerr = err.lpNorm<Eigen::Infinity>();
            if (nerr < best_err) {
                best_err = nerr;
                best = sol;
                used = it;
            } else {
                break;
            }
            const double thresh =
                1e-15 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
            if (nerr < thresh || it == max_refine) break;
            sol += ldlt_.solve(err);
        }
        dx = best.head(n);
        dy = best.segment(n, p);
        dz = best.tail(mG);
        return used;
    }

    bool ok() const { return ok_; }

  private:
    int slot(int r, int c) const {
        const int* outer = K_.outerIndexPtr();
        const int* inner = K_.innerIndexPtr();
        for (int idx = outer[c]; idx < outer[c + 1]; ++idx)
            if (inner[idx] == r) return idx;
        throw std::logic_error("kkt slot not found");
    }

    bool factorize() {
        ldlt_.factorize(K_);
        ok_ = (ldlt_.info() == Eigen::Success);
        return ok_;
    }

    // err = rhs - K * sol, by default against the regularized matrix so
    // refinement has a consistent fixed point; the IPM loop absorbs the
    // delta perturbation.
    void residual(const Vec& bx, const Vec& by, const Vec& bz, const Vec& sol,
                  const ConeOps& cone, Vec& err, bool reg_residual) const {
        const int n = L_.n, p = L_.p, mG = L_.mG;
        const Vec dx = sol.head(n);
        const Vec dy = sol.segment(n, p);
        const Vec dz = sol.tail(mG);
        Vec Atdy, Gtdz, Adx, Gdx;
        kernels::tmatvec(L_.A, dy, Atdy);
        kernels::tmatvec(L_.G, dz, Gtdz);
        kernels::matvec(L_.Ar, dx, Adx);
        kernels::matvec(L_.Gr, dx, Gdx);
        const double d = reg_residual ? delta_ : 0.0;
        err.resize(dim_);
        err.head(n) = bx - Atdy - Gtdz - d * dx;
        err.segment(n, p) = by - Adx + d * dy;
        Vec ez = bz - Gdx + d * dz;
        if (identity_scaling_)
            ez += dz;
        else
            cone.add_w2(dz, ez);
        err.tail(mG) = ez;
    }

    const Lowered& L_;
    double delta_;
    int dim_;
    SpMat K_;
    std::vector<int> lp_slots_;
    std::vector<std::vector<int>> soc_slots_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
    bool ok_ = false;
    bool identity_scaling_ = true;
};

struct Iterate {
    Vec x, y, z, s;
    double tau = 1.0, kap = 1.0;
    double pres = std::numeric_limits<double>::max();
    double dres = std::numeric_limits<double>::max();
    double gap = std::numeric_limits<double>::max();
    double mu = 0.0;

    double worst() const { return std::max({pres, dres, gap}); }
};

// Residual metrics of the descaled iterate in the original problem data.
struct Metrics {
    double pres, dres, gap, pobj, dobj;
    double pinf_res = std::numeric_limits<double>::max();
    double dinf_res = std::numeric_limits<double>::max();
};

Metrics original_metrics(const ConicProgram& prog, const Lowered& L, const Iterate& it,
                         Vec& x_o, Vec& y_o, Vec& z_o, Vec& s_o) {
    const double tau = it.tau;
    x_o = (L.dcol.array() * it.x.array()).matrix() / tau;
    y_o = (L.drowA.array() * it.y.array()).matrix() / (L.cost_scale * tau);
    z_o = (L.drowG.array() * it.z.array()).matrix() / (L.cost_scale * tau);
    s_o = (it.s.array() / L.drowG.array()).matrix() / tau;

    Metrics m{};
    Vec Ax = prog.A * x_o;
    Vec Gx_s(L.mG);
    {
        // original-space G x: undo the equilibration on the lowered G
        Vec xs = (x_o.array() / L.dcol.array()).matrix();
        Vec Gxw;
        kernels::matvec(L.Gr, xs, Gxw);
        Gx_s = (Gxw.array() / L.drowG.array()).matrix();
    }
    const double bnorm = prog.b.size() ? prog.b.norm() : 0.0;
    const double pr_eq = prog.b.size() ? (Ax - prog.b).norm() : 0.0;
    const double pr_cone = (Gx_s + s_o).norm();
    m.pres = std::max(pr_eq, pr_cone) / (1.0 + bnorm);

    Vec Aty = Vec::Zero(L.n), Gtz;
    if (prog.b.size()) Aty = prog.A.transpose() * y_o;
    {
        // G^T = D_c^{-1} Ghat^T D_rG^{-1}
        Vec zw = (z_o.array() / L.drowG.array()).matrix();
        Vec Gt;
        kernels::tmatvec(L.G, zw, Gt);
        Gtz = (Gt.array() / L.dcol.array()).matrix();
    }
    m.dres = (prog.c + Aty + Gtz).norm() / (1.0 + prog.c.norm());

    m.pobj = prog.c.dot(x_o);
    m.dobj = -(prog.b.size() ? prog.b.dot(y_o) : 0.0);
    m.gap = std::abs(m.pobj - m.dobj) / (1.0 + std::max(std::abs(m.pobj), std::abs(m.dobj)));

    // Infeasibility certificates (scaled to unit violation).
    const double by = prog.b.size() ? prog.b.dot(y_o) : 0.0;
    if (by < 0.0) {
        const double nu = -1.0 / by;
        const double certnorm = 1.0 + nu * (y_o.norm() + z_o.norm());
        m.pinf_res = nu * (Aty + Gtz).norm() / certnorm;
    }
    const double cx = prog.c.dot(x_o);
    if (cx < 0.0) {
        const double nu = -1.0 / cx;
        const double certnorm = 1.0 + nu * (x_o.norm() + s_o.norm());
        m.dinf_res = nu * std::max(Ax.norm(), (Gx_s + s_o).norm()) / certnorm;
    }
    return m;
}

// Alternating least-squares / cone-projection polish of a primal
// infeasibility certificate: A^T y + G0^T z -> 0 with b^T y = -1, z in K.
// Returns the final relative residual (certificate left in y, z).
double polish_primal_certificate(const ConicProgram& prog, const Lowered& L, Vec& y, Vec& z) {
    const double inf = std::numeric_limits<double>::max();
    if (L.p == 0) return inf;
    const double by = prog.b.dot(y);
    if (!(by < 0.0)) return inf;
    y /= -by;
    z /= -by;
    L.cone.project(z);

    // bordered normal matrix [A A^T + dI, b; b^T, 0]
    SpMat AAt = (prog.A * SpMat(prog.A.transpose())).pruned();
    double diag_scale = 0.0;
    for (int i = 0; i < AAt.rows(); ++i) diag_scale = std::max(diag_scale, AAt.coeff(i, i));
    const double delta = 1e-12 * (1.0 + diag_scale);
    std::vector<Triplet> trips;
    for (int c0 = 0; c0 < AAt.outerSize(); ++c0)
        for (SpMat::InnerIterator it(AAt, c0); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), c0, it.value());
    for (int i = 0; i < L.p; ++i) trips.emplace_back(i, i, delta);
    for (int i = 0; i < L.p; ++i) {
        if (prog.b[i] != 0.0) {
            trips.emplace_back(L.p, i, prog.b[i]);
            trips.emplace_back(i, L.p, prog.b[i]);
        }
    }
    trips.emplace_back(L.p, L.p, -delta);
    SpMat M(L.p + 1, L.p + 1);
    M.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(M);
    if (ldlt.info() != Eigen::Success) return inf;

    // diag(G0 G0^T) is exactly diagonal for selection/embedding rows
    Vec g_diag = Vec::Zero(L.mG);
    for (int c0 = 0; c0 < L.G0.outerSize(); ++c0)
        for (SpMat::InnerIterator it(L.G0, c0); it; ++it)
            g_diag[it.row()] += it.value() * it.value();

    double best = inf;
    Vec best_y = y, best_z = z;
    for (int it = 0; it < 40; ++it) {
        // y-step with the z contribution fixed
        Vec gtz;
        kernels::tmatvec(L.G0, z, gtz);
        Vec rhs(L.p + 1);
        rhs.head(L.p) = -(prog.A * gtz);
        rhs[L.p] = -1.0;
        const Vec sol = ldlt.solve(rhs);
        y = sol.head(L.p);

        Vec resid = Vec(prog.A.transpose() * y) + gtz;
        const double res = resid.norm() / (1.0 + y.norm() + z.norm());
        if (res < best) {
            best = res;
            best_y = y;
            best_z = z;
        }
        if (res <= 1e-13) break;

        // z-step: projected gradient with the exact Lipschitz step of the
        // quadratic (G0 G0^T is diagonal, so lambda_max is its max entry)
        Vec gr;
        kernels::matvec(L.G0r, resid, gr);
        const double step = 1.0 / std::max(1.0, g_diag.maxCoeff());
        z -= step * gr;
        L.cone.project(z);
    }
    y = best_y;
    z = best_z;
    return best;
}

// Improving-ray polish for dual infeasibility: A x -> 0, G0 x + s -> 0 with
// s in K and c^T x = -1. Returns the final relative residual.
double polish_dual_certificate(const ConicProgram& prog, const Lowered& L, Vec& x, Vec& s) {
    const double inf = std::numeric_limits<double>::max();
    const double cx = prog.c.dot(x);
    if (!(cx < 0.0)) return inf;
    x /= -cx;

    SpMat AtA(L.n, L.n);
    if (L.p > 0) AtA = (SpMat(prog.A.transpose()) * prog.A).pruned();
    const SpMat GtG = (SpMat(L.G0.transpose()) * L.G0).pruned();
    double diag_scale = 0.0;
    for (int i = 0; i < L.n; ++i)
        diag_scale = std::max(diag_scale, AtA.coeff(i, i) + GtG.coeff(i, i));
    const double delta = 1e-12 * (1.0 + diag_scale);
    std::vector<Triplet> trips;
    auto push = [&trips](const SpMat& mat) {
        for (int c0 = 0; c0 < mat.outerSize(); ++c0)
            for (SpMat::InnerIterator it(mat, c0); it; ++it)
                trips.emplace_back(static_cast<int>(it.row()), c0, it.value());
    };
    push(AtA);
    push(GtG);
    for (int i = 0; i < L.n; ++i) trips.emplace_back(i, i, delta);
    for (int i = 0; i < L.n; ++i) {
        if (prog.c[i] != 0.0) {
            trips.emplace_back(L.n, i, prog.c[i]);
            trips.emplace_back(i, L.n, prog.c[i]);
        }
    }
    trips.emplace_back(L.n, L.n, -delta);
    SpMat M(L.n + 1, L.n + 1);
    M.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(M);
    if (ldlt.info() != Eigen::Success) return inf;

    double best = inf;
    Vec best_x = x, best_s = s;
    for (int it = 0; it < 40; ++it) {
        Vec gx;
        kernels::matvec(L.G0r, x, gx);
        s = -gx;
        L.cone.project(s);

        Vec rhs(L.n + 1);
        rhs.head(L.n) = -Vec(L.G0.transpose() * s);
        rhs[L.n] = -1.0;
        const Vec sol = ldlt.solve(rhs);
        x = sol.head(L.n);

        kernels::matvec(L.G0r, x, gx);
        const double res =
            std::max(L.p > 0 ? Vec(prog.A * x).norm() : 0.0, (gx + s).norm()) /
            (1.0 + x.norm() + s.norm());
        if (res < best) {
            best = res;
            best_x = x;
            best_s = s;
        }
        if (res <= 1e-13) break;
    }
    x = best_x;
    s = best_s;
    return best;
}

// Maps lowered soc duals/slacks of rsoc blocks back to program coordinates:
// s_prog = T^{-1} s_soc and z_prog = T^T z_soc.
void remap_rsoc(const Lowered& L, Vec& z, Vec& s) {
    for (const auto& bm : L.block_maps) {
        if (bm.program_kind != ConeKind::rsoc) continue;
        const int k = bm.dim - 2;
        const auto zs = z.segment(bm.row_start, bm.dim).eval();
        const auto ss = s.segment(bm.row_start, bm.dim).eval();
        // T rows: (y+z, y-z, 2x); T^T z = (2 z_tail, z0 + z1, z0 - z1)
        for (int i = 0; i < k; ++i) z[bm.row_start + i] = 2.0 * zs[2 + i];
        z[bm.row_start + k] = zs[0] + zs[1];
        z[bm.row_start + k + 1] = zs[0] - zs[1];
        // T^{-1} s = (s_tail / 2, (s0+s1)/2, (s0-s1)/2)
        for (int i = 0; i < k; ++i) s[bm.row_start + i] = 0.5 * ss[2 + i];
        s[bm.row_start + k] = 0.5 * (ss[0] + ss[1]);
        s[bm.row_start + k + 1] = 0.5 * (ss[0] - ss[1]);
    }
}

}  // namespace

ConicSolution solve(const ConicProgram& prog, double tol) {
    SolverSettings st;
    st.tol = tol;
    return solve(prog, st);
}

ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings) {
    prog.validate();
    if (settings.threads) kernels::set_threads(settings.threads);

    Lowered L = lower_program(prog, settings.ruiz_iter);
    const int n = L.n, p = L.p, mG = L.mG;

    ConicSolution out;
    out.x = Vec::Zero(n);
    out.y = Vec::Zero(p);
    out.z = Vec::Zero(mG);
    out.s = Vec::Zero(mG);

    // Degenerate case: no cone rows means a pure equality-constrained LP.
    if (mG == 0) {
        KktSystem kkt(L, settings.static_reg);
        Vec dx, dy, dz;
        kkt.solve(-L.c, L.b, Vec(), L.cone, dx, dy, dz, settings.refine_iter,
                  /*reg_residual=*/false);
        Vec x_o = (L.dcol.array() * dx.array()).matrix();
        Vec y_o = (L.drowA.array() * dy.array()).matrix() / L.cost_scale;
        const double pres =
            p ? (prog.A * x_o - prog.b).norm() / (1.0 + prog.b.norm()) : 0.0;
        const double dres =
            (prog.c + (p ? Vec(prog.A.transpose() * y_o) : Vec::Zero(n))).norm() /
            (1.0 + prog.c.norm());
        out.x = x_o;
        out.y = y_o;
        out.objective = prog.c.dot(x_o);
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.duality_gap = 0.0;
        if (pres <= settings.tol && dres <= settings.tol)
            out.status = SolveStatus::optimal;
        else if (dres > settings.tol)
            out.status = SolveStatus::unbounded;
        else
            out.status = SolveStatus::infeasible;
        return out;
    }

    KktSystem kkt(L, settings.static_reg);
    if (!kkt.ok()) {
        out.status = SolveStatus::numerical_limit;
        return out;
    }

    Iterate cur;
    cur.x.resize(n);
    cur.y.resize(p);
    cur.z.resize(mG);
    cur.s.resize(mG);

    // ECOS-style initialization from two KKT solves with unit scalings.
    {
        Vec dx, dy, dz;
        kkt.solve(Vec::Zero(n), L.b, L.h, L.cone, dx, dy, dz, settings.refine_iter);
        cur.x = dx;
        L.cone.bring_to_cone(-dz, cur.s);
        kkt.solve(-L.c, Vec::Zero(p), Vec::Zero(mG), L.cone, dx, dy, dz, settings.refine_iter);
        cur.y = dy;
        L.cone.bring_to_cone(dz, cur.z);
    }
    cur.tau = 1.0;
    cur.kap = 1.0;

    const int nu = L.cone.degree() + 1;
    Iterate best = cur;
    double best_worst = std::numeric_limits<double>::max();
    double prev_pres = std::numeric_limits<double>::max();

    // Best certificate candidates seen, for the numerical fallback.
    double track_pinf = std::numeric_limits<double>::max();
    double track_dinf = std::numeric_limits<double>::max();
    Vec track_y, track_z, track_x, track_s;

    Vec rx(n), ry(p), rz(mG);
    double rt = 0.0;
    Vec dx1(n), dy1(p), dz1(mG), dx2(n), dy2(p), dz2(mG);
    Vec lambda(mG), W_dz(mG), ds_by_W(mG), ds(mG), tmp1(mG), tmp2(mG);

    SolveStatus status = SolveStatus::numerical_limit;
    int iter = 0;
    bool done = false;

    for (iter = 0; iter <= settings.max_iter && !done; ++iter) {
        // Residuals of the homogeneous embedding (equilibrated space).
        Vec Aty, Gtz, Ax, Gx;
        kernels::tmatvec(L.A, cur.y, Aty);
        kernels::tmatvec(L.G, cur.z, Gtz);
        kernels::matvec(L.Ar, cur.x, Ax);
        kernels::matvec(L.Gr, cur.x, Gx);
        rx = -Aty - Gtz - cur.tau * L.c;
        ry = Ax - cur.tau * L.b;
        rz = cur.s + Gx - cur.tau * L.h;
        const double cx = L.c.dot(cur.x);
        const double by = p ? L.b.dot(cur.y) : 0.0;
        const double hz = L.h.dot(cur.z);
        rt = cur.kap + cx + by + hz;
        cur.mu = (cur.s.dot(cur.z) + cur.kap * cur.tau) / nu;

        Vec x_o, y_o, z_o, s_o;
        const Metrics m = original_metrics(prog, L, cur, x_o, y_o, z_o, s_o);
        cur.pres = m.pres;
        cur.dres = m.dres;
        cur.gap = m.gap;

        if (settings.verbose) {
            std::printf("it %2d  pobj %+.6e dobj %+.6e  pres %.2e dres %.2e gap %.2e  "
                        "tau %.2e kap %.2e mu %.2e pinf %.2e dinf %.2e\n",
                        iter, m.pobj, m.dobj, m.pres, m.dres, m.gap, cur.tau, cur.kap, cur.mu,
                        m.pinf_res, m.dinf_res);
        }

        // Keep the best iterate and certificate candidates for the fallback.
        if (cur.worst() < best_worst) {
            best_worst = cur.worst();
            best = cur;
        }
        if (m.pinf_res < track_pinf) {
            track_pinf = m.pinf_res;
            track_y = y_o;
            track_z = z_o;
        }
        if (m.dinf_res < track_dinf) {
            track_dinf = m.dinf_res;
            track_x = x_o;
            track_s = s_o;
        }

        // Convergence in the original data.
        if (m.pres <= settings.tol && m.dres <= settings.tol && m.gap <= settings.tol) {
            status = SolveStatus::optimal;
            remap_rsoc(L, z_o, s_o);
            out.x = x_o;
            out.y = y_o;
            out.z = z_o;
            out.s = s_o;
            out.primal_residual = m.pres;
            out.dual_residual = m.dres;
            out.duality_gap = m.gap;
            done = true;
            break;
        }
        // Certificates: once tau is dominated, polish the candidate ray.
        if (cur.kap > cur.tau) {
            if (m.pinf_res <= 1e-4) {
                Vec cy = y_o, cz = z_o;
                const double res = polish_primal_certificate(prog, L, cy, cz);
                if (res <= settings.tol) {
                    status = SolveStatus::infeasible;
                    remap_rsoc(L, cz, s_o);
                    out.y = cy;
                    out.z = cz;
                    out.primal_residual = res;
                    done = true;
                    break;
                }
            }
            if (m.dinf_res <= 1e-4) {
                Vec cx = x_o, cs = s_o;
                const double res = polish_dual_certificate(prog, L, cx, cs);
                if (res <= settings.tol) {
                    status = SolveStatus::unbounded;
                    remap_rsoc(L, z_o, cs);
                    out.x = cx;
                    out.s = cs;
                    out.dual_residual = res;
                    done = true;
                    break;
                }
            }
        }
        if (iter == settings.max_iter) break;

        // Divergence safeguard.
        if (iter > 0 && (cur.pres > kSafeguard * prev_pres || cur.s.dot(cur.z) < 0.0)) break;
        prev_pres = cur.pres;

        if (!L.cone.update(cur.s, cur.z)) break;
        L.cone.scale_w(cur.z, lambda);
        if (!kkt.update_scalings(L.cone)) break;

        kkt.solve(-L.c, L.b, L.h, L.cone, dx1, dy1, dz1, settings.refine_iter);
        const double dtau_denom =
            cur.kap / cur.tau - L.c.dot(dx1) - (p ? L.b.dot(dy1) : 0.0) - L.h.dot(dz1);
        if (!(std::abs(dtau_denom) > 0.0) || !std::isfinite(dtau_denom)) break;

        // Affine (predictor) direction.
        kkt.solve(rx, -ry, cur.s - rz, L.cone, dx2, dy2, dz2, settings.refine_iter);
        const double dtau_aff =
            (rt - cur.kap + L.c.dot(dx2) + (p ? L.b.dot(dy2) : 0.0) + L.h.dot(dz2)) /
            dtau_denom;
        dz2 += dtau_aff * dz1;
        L.cone.scale_w(dz2, W_dz);
        ds_by_W = -W_dz - lambda;
        const double dkap_aff = -cur.kap - cur.kap / cur.tau * dtau_aff;

        double alpha = L.cone.max_step(lambda, ds_by_W, W_dz);
        if (dtau_aff < 0.0) alpha = std::min(alpha, -cur.tau / dtau_aff);
        if (dkap_aff < 0.0) alpha = std::min(alpha, -cur.kap / dkap_aff);
        const double alpha_aff = std::clamp(alpha, 0.0, 1.0);

        const double sigma =
            std::clamp(std::pow(1.0 - alpha_aff, 3.0), kSigmaMin, kSigmaMax);
        const double smu = sigma * cur.mu;

        // Combined (corrector) direction.
        L.cone.product(lambda, lambda, tmp1);
        L.cone.product(ds_by_W, W_dz, tmp2);
        tmp1 += tmp2;
        L.cone.add_identity_e(tmp1, -smu);
        L.cone.division(lambda, tmp1, tmp2);   // lambda \ d
        Vec lam_div = tmp2;
        L.cone.scale_w(tmp2, tmp1);            // W (lambda \ d)
        const double one_minus_sigma = 1.0 - sigma;
        kkt.solve(one_minus_sigma * rx, -one_minus_sigma * ry,
                  Vec(-one_minus_sigma * rz + tmp1), L.cone, dx2, dy2, dz2,
                  settings.refine_iter);
        const double bkap = cur.kap * cur.tau + dkap_aff * dtau_aff - smu;
        const double dtau = (one_minus_sigma * rt - bkap / cur.tau + L.c.dot(dx2) +
                             (p ? L.b.dot(dy2) : 0.0) + L.h.dot(dz2)) /
                            dtau_denom;
        dx2 += dtau * dx1;
        dy2 += dtau * dy1;
        dz2 += dtau * dz1;
        L.cone.scale_w(dz2, W_dz);
        ds_by_W = -(lam_div + W_dz);
        const double dkap = -(bkap + cur.kap * dtau) / cur.tau;

        alpha = L.cone.max_step(lambda, ds_by_W, W_dz);
        if (dtau < 0.0) alpha = std::min(alpha, -cur.tau / dtau);
        if (dkap < 0.0) alpha = std::min(alpha, -cur.kap / dkap);
        alpha = settings.step_scale * std::clamp(alpha, 0.0, 1.0);
        if (alpha < kStepMin) break;

        L.cone.scale_w(ds_by_W, ds);
        cur.x += alpha * dx2;
        cur.y += alpha * dy2;
        cur.z += alpha * dz2;
        cur.s += alpha * ds;
        cur.kap += alpha * dkap;
        cur.tau += alpha * dtau;
    }

    out.iterations = iter;
    if (done) {
        out.status = status;
        out.objective = prog.c.dot(out.x);
        return out;
    }

    // Numerical fallback: try to certify from the best ray seen, otherwise
    // report the best iterate.
    if (track_pinf <= 1e-3) {
        Vec cy = track_y, cz = track_z;
        const double res = polish_primal_certificate(prog, L, cy, cz);
        if (res <= settings.tol) {
            Vec dummy = Vec::Zero(mG);
            remap_rsoc(L, cz, dummy);
            out.status = SolveStatus::infeasible;
            out.y = cy;
            out.z = cz;
            out.primal_residual = res;
            out.iterations = iter;
            return out;
        }
    }
    if (track_dinf <= 1e-3) {
        Vec cx = track_x, cs = track_s;
        const double res = polish_dual_certificate(prog, L, cx, cs);
        if (res <= settings.tol) {
            Vec dummy = Vec::Zero(mG);
            remap_rsoc(L, dummy, cs);
            out.status = SolveStatus::unbounded;
            out.x = cx;
            out.s = cs;
            out.dual_residual = res;
            out.iterations = iter;
            return out;
        }
    }

    Vec x_o, y_o, z_o, s_o;
    const Metrics m = original_metrics(prog, L, best, x_o, y_o, z_o, s_o);
    remap_rsoc(L, z_o, s_o);
    out.x = x_o;
    out.y = y_o;
    out.z = z_o;
    out.s = s_o;
    out.primal_residual = m.pres;
    out.dual_residual = m.dres;
    out.duality_gap = m.gap;
    out.objective = m.pobj;
    out.status = SolveStatus::numerical_limit;
    return out;
}

}  // namespace trussopt
