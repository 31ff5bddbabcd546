#include "fsstab/spectral.hpp"

#include "fsstab/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace fsstab {

namespace {

// Least-squares removal of the constraint range: returns the Euclidean
// projection of r onto ker(C), through the factored system
// [[I, C^T, 0], [C, 0, m], [0, m^T, 0]].
class ResidualProjector {
public:
    explicit ResidualProjector(const BlockSystem& bs) {
        const int n = bs.n_reduced;
        const int n_p = static_cast<int>(bs.constraint.rows());
        std::vector<Eigen::Triplet<double>> t;
        for (int i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
        for (int oc = 0; oc < bs.constraint.outerSize(); ++oc)
            for (SpMat::InnerIterator it(bs.constraint, oc); it; ++it) {
                t.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                               it.value());
                t.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                               it.value());
            }
        for (int p = 0; p < n_p; ++p) {
            t.emplace_back(n + p, n + n_p, bs.pressure_integral[p]);
            t.emplace_back(n + n_p, n + p, bs.pressure_integral[p]);
        }
        SpMat m(n + n_p + 1, n + n_p + 1);
        m.setFromTriplets(t.begin(), t.end());
        lu_.compute(m);
        if (lu_.info() != Eigen::Success)
            throw SolverDivergence("residual projector factorization failed");
        n_ = n;
    }

    Vector apply(const Vector& r) const {
        Vector rhs = Vector::Zero(lu_.rows());
        rhs.head(n_) = r;
        return lu_.solve(rhs).head(n_);
    }

private:
    Eigen::SparseLU<SpMat> lu_;
    int n_ = 0;
};

struct ShiftInvertOp {
    const BlockSystem* bs;
    Eigen::SparseLU<SpMat> lu;
    int n;

    ShiftInvertOp(const BlockSystem& blocks, double shift) : bs(&blocks), n(blocks.n_reduced) {
        // (A - shift M) x = M v on the constraint manifold; A = -viscous
        lu.compute(blocks.saddle(-1.0, -shift));
        if (lu.info() != Eigen::Success)
            throw ShiftOnSpectrum("saddle factorization singular at the requested shift");
    }

    Vector apply(const Vector& v) const {
        Vector rhs = Vector::Zero(lu.rows());
        rhs.head(n) = bs->mass * v;
        return lu.solve(rhs).head(n);
    }
};

}  // namespace

SpectralDecomposition solve_eigs(const BlockSystem& blocks, int count, double shift) {
    if (count < 1) throw ConfigError("eigenpair count must be >= 1");
    const int n = blocks.n_reduced;

    ShiftInvertOp op(blocks, shift);
    auto m_dot = [&](const Vector& a, const Vector& b) { return a.dot(blocks.mass * b); };

    // resolvent-set probe: an amplification this large means the shift sits on
    // the discrete spectrum
    std::mt19937_64 rng(0x5eed5eedULL);
    std::normal_distribution<double> gauss;
    {
        Vector r = Vector::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); });
        r /= std::sqrt(m_dot(r, r));
        const Vector z = op.apply(r);
        if (std::sqrt(m_dot(z, z)) > 1e6)
            throw ShiftOnSpectrum("shift is numerically on the spectrum");
    }

    ResidualProjector res_proj(blocks);

    const int block = 2;
    const double tol = 1e-8;
    int steps = std::max(2 * count + 20, 40) / block + 1;

    for (int attempt = 0; attempt < 3; ++attempt, steps *= 2) {
        // block Lanczos in the M inner product on OP = (A - sigma M)^{-1} M
        std::vector<Eigen::MatrixXd> basis;  // n x block panels
        const int max_dim = std::min(steps * block, n - 3);
        const int nsteps = std::max(1, max_dim / block);

        auto reorthogonalize = [&](Eigen::MatrixXd& w) {
            for (int pass = 0; pass < 2; ++pass)
                for (const auto& q : basis)
                    w -= q * (q.transpose() * (blocks.mass * w));
        };
        // M-orthonormalize the columns of w in place, returns the triangular factor
        auto orthonormalize = [&](Eigen::MatrixXd& w) {
            Eigen::MatrixXd r = Eigen::MatrixXd::Zero(block, block);
            for (int j = 0; j < block; ++j) {
                for (int i = 0; i < j; ++i) {
                    r(i, j) = m_dot(w.col(i), w.col(j));
                    w.col(j) -= r(i, j) * w.col(i);
                }
                r(j, j) = std::sqrt(std::max(0.0, m_dot(w.col(j), w.col(j))));
                if (r(j, j) < 1e-12) {
                    // rank recovery with a fresh random direction
                    w.col(j) = Vector::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); });
                    w.col(j) = op.apply(w.col(j));
                    reorthogonalize(w);
                    for (int i = 0; i < j; ++i)
                        w.col(j) -= m_dot(w.col(i), w.col(j)) * w.col(i);
                    const double nrm = std::sqrt(std::max(0.0, m_dot(w.col(j), w.col(j))));
                    if (nrm < 1e-14) throw NonConvergence("Lanczos basis collapsed");
                    w.col(j) /= nrm;
                    r(j, j) = 0.0;  // restart direction, band entry dropped
                    continue;
                }
                w.col(j) /= r(j, j);
            }
            return r;
        };

        Eigen::MatrixXd q0(n, block);
        for (int j = 0; j < block; ++j) {
            Vector r = Vector::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); });
            q0.col(j) = op.apply(r);  // purges the constraint directions
        }
        orthonormalize(q0);
        basis.push_back(q0);

        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(nsteps * block, nsteps * block);
        int dim = 0;
        for (int k = 0; k < nsteps; ++k) {
            Eigen::MatrixXd w(n, block);
            for (int j = 0; j < block; ++j) w.col(j) = op.apply(basis[k].col(j));
            Eigen::MatrixXd alpha = basis[k].transpose() * (blocks.mass * w);
            alpha = 0.5 * (alpha + alpha.transpose()).eval();
            T.block(k * block, k * block, block, block) = alpha;
            dim = (k + 1) * block;
            if (k + 1 == nsteps) break;
            w -= basis[k] * alpha;
            reorthogonalize(w);
            const Eigen::MatrixXd beta = orthonormalize(w);
            T.block((k + 1) * block, k * block, block, block) = beta;
            T.block(k * block, (k + 1) * block, block, block) = beta.transpose();
            basis.push_back(w);
        }

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(dim, dim));
        // theta = 1/(mu - shift); discard the near-null theta of purged
        // constraint directions, then pick the largest transformed eigenvalues
        const double theta_scale = es.eigenvalues().cwiseAbs().maxCoeff();
        std::vector<int> order;
        for (int i = 0; i < dim; ++i)
            if (std::abs(es.eigenvalues()[i]) > 1e-12 * std::max(theta_scale, 1e-300))
                order.push_back(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return shift + 1.0 / es.eigenvalues()[a] > shift + 1.0 / es.eigenvalues()[b];
        });

        const int avail = std::min<int>(count, static_cast<int>(order.size()));
        SpectralDecomposition out;
        out.blocks = &blocks;
        out.eigenvalues = Vector(avail);
        out.vectors = Eigen::MatrixXd(n, avail);
        out.residuals = Vector(avail);

        bool converged = avail == count;
        for (int i = 0; i < avail && converged; ++i) {
            const double theta = es.eigenvalues()[order[i]];
            const double mu = shift + 1.0 / theta;
            Vector v = Vector::Zero(n);
            for (size_t k = 0; k < basis.size(); ++k)
                v += basis[k] * es.eigenvectors()
                                    .col(order[i])
                                    .segment(static_cast<int>(k) * block, block);
            v /= std::sqrt(m_dot(v, v));
            out.eigenvalues[i] = mu;
            out.vectors.col(i) = v;
            const Vector raw = -(blocks.viscous * v) - mu * (blocks.mass * v);
            out.residuals[i] = res_proj.apply(raw).norm() / v.norm();
            if (out.residuals[i] > tol) converged = false;
        }
        if (!converged) continue;

        // descending eigenvalue order
        std::vector<int> perm(count);
        for (int i = 0; i < count; ++i) perm[i] = i;
        std::sort(perm.begin(), perm.end(),
                  [&](int a, int b) { return out.eigenvalues[a] > out.eigenvalues[b]; });
        SpectralDecomposition sorted;
        sorted.blocks = &blocks;
        sorted.eigenvalues = Vector(count);
        sorted.vectors = Eigen::MatrixXd(n, count);
        sorted.residuals = Vector(count);
        for (int i = 0; i < count; ++i) {
            sorted.eigenvalues[i] = out.eigenvalues[perm[i]];
            sorted.vectors.col(i) = out.vectors.col(perm[i]);
            sorted.residuals[i] = out.residuals[perm[i]];
        }

        // joint re-orthonormalization of eigenvalue clusters (1e-6 relative)
        int lo = 0;
        while (lo < count) {
            int hi = lo + 1;
            while (hi < count && std::abs(sorted.eigenvalues[hi] - sorted.eigenvalues[lo]) <=
                                     1e-6 * std::max(1.0, std::abs(sorted.eigenvalues[lo])))
                ++hi;
            for (int j = lo; j < hi; ++j) {
                Vector v = sorted.vectors.col(j);
                for (int i = lo; i < j; ++i)
                    v -= m_dot(sorted.vectors.col(i), v) * sorted.vectors.col(i);
                sorted.vectors.col(j) = v / std::sqrt(m_dot(v, v));
            }
            lo = hi;
        }
        return sorted;
    }
    throw NonConvergence("eigensolver failed to reach the residual tolerance");
}

Vector UnstableSubspace::coefficients(const Vector& x) const {
    if (dimension == 0) return Vector::Zero(0);
    return basis.transpose() * (blocks->mass * x);
}

Vector UnstableSubspace::project(const Vector& x) const {
    if (dimension == 0) return Vector::Zero(x.size());
    return basis * coefficients(x);
}

UnstableSubspace split_spectrum(const SpectralDecomposition& decomp, double lambda) {
    if (lambda <= 0.0) throw ConfigError("decay rate lambda must be positive");
    const int k = static_cast<int>(decomp.eigenvalues.size());
    if (k == 0) throw InsufficientSpectrum("no computed eigenvalues");
    for (int i = 0; i < k; ++i)
        if (std::abs(decomp.eigenvalues[i] + lambda) <= 1e-6 * std::max(1.0, lambda)) {
            std::ostringstream os;
            os << "-lambda = " << -lambda << " collides with eigenvalue "
               << decomp.eigenvalues[i];
            throw LambdaOnSpectrum(os.str());
        }
    if (decomp.eigenvalues[k - 1] > -lambda)
        throw InsufficientSpectrum(
            "computed spectrum does not bracket -lambda; request more eigenpairs");

    UnstableSubspace u;
    u.blocks = decomp.blocks;
    int n_unstable = 0;
    while (n_unstable < k && decomp.eigenvalues[n_unstable] > -lambda) ++n_unstable;
    u.dimension = n_unstable;
    u.eigenvalues = decomp.eigenvalues.head(n_unstable);
    u.basis = decomp.vectors.leftCols(n_unstable);
    return u;
}

void write_spectrum_csv(const std::string& path, const SpectralDecomposition& decomp) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open spectrum csv: " + path);
    os << "index,eigenvalue,residual\n";
    char buf[96];
    for (int i = 0; i < decomp.eigenvalues.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", i, decomp.eigenvalues[i],
                      decomp.residuals[i]);
        os << buf;
    }
}

}  // namespace fsstab
