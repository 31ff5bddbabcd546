#pragma once

#include "fsstab/discretization.hpp"
#include "fsstab/geometry.hpp"

#include <Eigen/SparseCholesky>
#include <memory>
#include <vector>

namespace fsstab {

// Solid velocity solving the nonlocal elliptic system
//   mu phi - 2 div D(phi) = F(phi)  in S,   phi = zeta on dS,
// where F feeds back the boundary tractions to keep the body self-propelled.
struct SolidVelocityField {
    Vector phi;                          // solid P2 vector field, trace included
    double mu = 0.0;
    Vec3 force_coeffs = Vec3::Zero();    // F = (g1, g2) + g3 ^ y
    std::vector<double> iteration_report;  // fixed-point increment history
};

struct ConstraintReport {
    double flux = 0.0;              // int_dS phi . n
    Vec2 linear_momentum;           // int_S phi
    double angular_momentum = 0.0;  // int_S y ^ phi
    // residuals scaled dimensionless against the field size
    double flux_rel = 0.0;
    double linear_rel = 0.0;
    double angular_rel = 0.0;
};

class SolidMechanics {
public:
    SolidMechanics(const Mesh& mesh, const RigidBodyData& rigid);

    const FunctionSpaces& spaces() const { return spaces_; }
    const FormLibrary& forms() const { return forms_; }
    const RigidBodyData& rigid() const { return rigid_; }

    // 10x the smallest eigenvalue of the scalar Dirichlet Laplacian on S
    // (the Poincare/Korn margin the contraction argument needs)
    double mu_min() const { return mu_min_; }

    // zeta given in the solid velocity layout (interface entries read).
    // Throws FluxViolation if the datum has net flux, FixedPointDivergence if
    // the increments stop contracting.
    SolidVelocityField solve_lame_fixed_point(const Vector& zeta, double mu) const;

    // same system solved directly with the three traction unknowns bordered
    SolidVelocityField solve_lame_bordered(const Vector& zeta, double mu) const;

    // mu-doubling wrapper starting at mu_min
    SolidVelocityField solve_auto(const Vector& zeta) const;

    ConstraintReport check_admissibility(const Vector& phi) const;

    // boundary traction images (t1, t2) = (int 2 D(phi) n, int y ^ 2 D(phi) n),
    // n exterior to the fluid (pointing into the solid)
    Vec3 tractions(const Vector& phi) const;

    double interface_flux(const Vector& field) const;  // n out of the solid
    Vector moment_vector(int which) const;             // 0,1: int v e_k; 2: int v.(^y)

private:
    Vector solve_dirichlet(const Vector& zeta, const Vector& volume_force, double mu) const;
    const Eigen::SimplicialLDLT<SpMat>& factorization(double mu) const;

    const Mesh* mesh_;
    RigidBodyData rigid_;
    FunctionSpaces spaces_;
    FormLibrary forms_;
    double mu_min_ = 0.0;

    std::vector<int> interior_;
    std::vector<int> to_interior_;
    Eigen::MatrixXd moments_;        // n_vel x 3 moment vectors
    Eigen::MatrixXd hat_tests_;      // n_vel x 3 boundary hats of the rigid generators
    Eigen::MatrixXd traction_rows_;  // 3 x n_vel direct traction functionals
    double area_ = 0.0;
    double j0_ = 0.0;  // int |y|^2

    mutable double cached_mu_ = -1.0;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
};

// Time-integrated deformation X*(y,t) = y + int_0^t e^{-lambda s} phi(y,s) ds
// by the trapezoid rule on a uniform grid.
struct DeformationTrajectory {
    std::vector<double> times;
    std::vector<Vector> displacements;  // X* - y per sample, solid layout
    double dt = 0.0;
};

DeformationTrajectory integrate_deformation(const std::vector<Vector>& phi_samples,
                                            double lambda, double dt);

// copies interface nodal values from a fluid-space vector into the solid layout
Vector transfer_interface_values(const FunctionSpaces& fluid, const FunctionSpaces& solid,
                                 const Vector& fluid_field);

void write_deformation_csv(const std::string& path, const FunctionSpaces& solid,
                           const Vector& displacement);

}  // namespace fsstab
