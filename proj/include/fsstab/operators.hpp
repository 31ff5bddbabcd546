#pragma once

#include "fsstab/discretization.hpp"
#include "fsstab/geometry.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <memory>

namespace fsstab {

// Shared factorization of the zero-mean scalar Laplacian
//   [[K, m], [m^T, 0]]
// used by the Neumann solves and the Helmholtz projection.
class ScalarPoisson {
public:
    explicit ScalarPoisson(const FunctionSpaces& spaces, const FormLibrary& forms);

    // Solves int grad q . grad w = rhs(w) for all P2 scalars w, with zero mean.
    Vector solve(const Vector& rhs) const;

    const FunctionSpaces& spaces() const { return *spaces_; }

private:
    const FunctionSpaces* spaces_;
    const FormLibrary* forms_;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

// Discrete solution of the Neumann problems defining N(h') and N_hat(omega):
// harmonic potential with flux datum on the interface, zero flux on the
// container boundary, zero mean.
struct NeumannSolution {
    Vector potential;       // P2 scalar, zero mean
    Vec3 gradient_flux;     // (C q, C_hat q): int q n dGamma and int q (y ^ n) dGamma
    double laplace_residual = 0.0;
};

// datum: (h'_x, h'_y, omega); the boundary condition is
// dq/dn = (h' + omega ^ y) . n with n pointing out of the fluid.
NeumannSolution solve_neumann(const ScalarPoisson& poisson, const FormLibrary& forms,
                              const Vec3& datum);

// Stokes lifting: divergence-free field with the prescribed interface trace
// and zero trace on the container boundary.
struct LiftedField {
    Vector velocity;   // full fluid velocity vector (trace included)
    Vector pressure;   // P1 multiplier, zero mean
    double divergence_residual = 0.0;
};

class StokesLifting {
public:
    StokesLifting(const FunctionSpaces& spaces, const FormLibrary& forms);

    // datum given as values at interface nodes (full velocity vector layout,
    // only interface entries are read). Throws FluxViolation when the net
    // flux of the datum through the interface exceeds 1e-8 * |datum|.
    LiftedField lift(const Vector& datum) const;

private:
    const FunctionSpaces* spaces_;
    const FormLibrary* forms_;
    std::vector<int> interior_;         // interior velocity dofs
    std::vector<int> to_interior_;      // full dof -> interior index or -1
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

// Orthogonal L2 projection onto the complement of gradients of H1 scalars.
class LerayProjector {
public:
    LerayProjector(const FunctionSpaces& spaces, const FormLibrary& forms);

    Vector project(const Vector& velocity) const;     // P v
    Vector gradient_part(const Vector& velocity) const;  // (I - P) v

private:
    const FunctionSpaces* spaces_;
    const FormLibrary* forms_;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

// The assembled coupled system in reduced coordinates
// x = (interior fluid velocity dofs, h', omega).
//
// mass       = discrete M0 + M_add (kinetic energy of the coupled state)
// viscous    = discrete -A action: <A x, x> = -2 nu |D(u)|^2
// constraint = divergence rows against the pressure space
struct BlockSystem {
    const FunctionSpaces* spaces = nullptr;
    const FormLibrary* forms = nullptr;
    RigidBodyData rigid;

    SpMat coupling;      // E: full velocity dofs x reduced dofs
    SpMat mass;          // reduced, SPD
    SpMat viscous;       // reduced, PSD
    SpMat constraint;    // n_p x reduced
    Vector pressure_integral;  // zero-mean row for the multiplier

    Mat3 added_mass;     // Galerkin 3x3 block on (h', omega)
    Mat3 added_mass_boundary;  // independent C/C_hat cross-check
    Mat3 body_mass;      // diag(M, M, I0)

    int n_reduced = 0;   // interior + 3
    int n_interior = 0;
    int n_pressure = 0;

    // reduced state -> full fluid velocity field (rigid trace included)
    Vector expand(const Vector& x) const { return coupling * x; }
    Vec3 rigid_part(const Vector& x) const { return x.tail<3>(); }

    // kinetic energy inner product <M x, y>
    double m_dot(const Vector& x, const Vector& y) const { return x.dot(mass * y); }

    // saddle operator [[ -viscous + lambda * mass , C^T, 0], [C, 0, m], [0, m^T, 0]]
    SpMat saddle(double lambda_shift, double mass_scale) const;
};

BlockSystem assemble_block_system(const FunctionSpaces& spaces, const FormLibrary& forms,
                                  const RigidBodyData& rigid);

// M-orthogonal projection of an arbitrary reduced vector onto the discretely
// divergence-free subspace.
class DivFreeProjector {
public:
    explicit DivFreeProjector(const BlockSystem& blocks);
    Vector project(const Vector& x) const;

private:
    const BlockSystem* blocks_;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
    int n_{0};
};

}  // namespace fsstab
