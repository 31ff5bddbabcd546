#pragma once

#include "fsstab/operators.hpp"
#include "fsstab/spectral.hpp"

#include <string>
#include <vector>

namespace fsstab {

// Finite family of smooth interface velocity fields spanning the control
// space Xi. Trigonometric tangential/normal modes, each corrected to exact
// zero net flux through the discrete interface.
struct ControlBasis {
    int dimension = 0;                  // m
    Eigen::MatrixXd modes;              // n_vel x m, interface-supported interpolants
    std::vector<LiftedField> liftings;  // Stokes liftings L0 xi_j
    Vector fluxes;                      // per-mode net flux after correction
    double gram_condition = 0.0;        // interface L2 Gram condition number
};

ControlBasis build_control_basis(const FunctionSpaces& spaces, const FormLibrary& forms,
                                 int m);

// Discrete realization of the control injection for the lambda-shifted system.
// Column j of `force` is the coupled force functional of (lambda - A0) L0 xi_j;
// `lifting_mass` carries E^T M_f L0 xi_j (the Duhamel lifting correction) and
// `interp_mass` carries E^T M_f xi_j for the feedback measurement.
struct ControlOperator {
    double lambda = 0.0;
    Eigen::MatrixXd force;         // n_reduced x m
    Eigen::MatrixXd lifting_mass;  // n_reduced x m
    Eigen::MatrixXd interp_mass;   // n_reduced x m
};

ControlOperator assemble_B(const ControlBasis& basis, const BlockSystem& blocks,
                           double lambda);

// Projected input matrix B_u on the unstable basis, including the lifting
// correction of the Duhamel reduction.
Eigen::MatrixXd reduced_input_matrix(const UnstableSubspace& unstable,
                                     const ControlOperator& op);

struct RankReport {
    int dimension = 0;  // N
    int modes = 0;      // m
    int rank = 0;
    bool controllable = false;
};

RankReport project_and_check_controllability(const UnstableSubspace& unstable,
                                             const Eigen::MatrixXd& input);

// Feedback gain from the projected algebraic Riccati equation
//   Pi A_s + A_s^T Pi - Pi B B^T Pi + I = 0,  A_s = diag(mu_i) + lambda I.
struct FeedbackGain {
    double lambda = 0.0;
    int dimension = 0;  // N
    int modes = 0;      // m
    Eigen::MatrixXd riccati;             // N x N, symmetric PSD
    Eigen::MatrixXd gain;                // m x N: -B_u^T Pi
    Eigen::VectorXcd closed_loop_poles;  // eig(A_u - B_u B_u^T Pi)
    double riccati_residual = 0.0;

    // full-state evaluation: zeta coefficients = state_map x + control_map c
    Eigen::MatrixXd state_map;    // m x n_reduced
    Eigen::MatrixXd control_map;  // m x m

    Vector evaluate(const Vector& x, const Vector& c_prev) const;
};

FeedbackGain solve_riccati(const UnstableSubspace& unstable, const ControlOperator& op);

void write_gain_json(const std::string& path, const FeedbackGain& gain);

}  // namespace fsstab
