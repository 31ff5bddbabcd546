#pragma once

#include "fsstab/operators.hpp"

#include <string>

namespace fsstab {

// Eigenpairs of the coupled pencil A x = mu M x on the divergence-free
// subspace. The pencil is self-adjoint with M positive definite there, so all
// eigenvalues are real; dissipativity makes them negative.
struct SpectralDecomposition {
    Vector eigenvalues;        // sorted descending (closest to 0 first)
    Eigen::MatrixXd vectors;   // reduced coordinates, M-orthonormal columns
    Vector residuals;          // per pair |A v - mu M v| / |v|
    const BlockSystem* blocks = nullptr;
};

// Shift-invert block Lanczos on the saddle pencil, constraint kept explicit.
// shift must lie in the resolvent set; the default 0 always does since the
// coupled operator is strictly dissipative.
SpectralDecomposition solve_eigs(const BlockSystem& blocks, int count, double shift = 0.0);

// Span of the eigenvectors with eigenvalue above -lambda plus the M-orthogonal
// projector onto it.
struct UnstableSubspace {
    int dimension = 0;
    Vector eigenvalues;        // the unstable ones, descending
    Eigen::MatrixXd basis;     // n_reduced x N, M-orthonormal
    const BlockSystem* blocks = nullptr;

    Vector project(const Vector& x) const;       // P_u x
    Vector coefficients(const Vector& x) const;  // V^T M x
};

UnstableSubspace split_spectrum(const SpectralDecomposition& decomp, double lambda);

void write_spectrum_csv(const std::string& path, const SpectralDecomposition& decomp);

}  // namespace fsstab
