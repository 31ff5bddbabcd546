#pragma once

#include "fsstab/operators.hpp"
#include "fsstab/stabilization.hpp"

#include <functional>
#include <optional>
#include <variant>

namespace fsstab {

// Full coupled state: fluid velocity carries the boundary trace, the rigid
// velocities live beside it, the pressure is the last multiplier (not part of
// the evolution).
struct CoupledState {
    Vector fluid_velocity;
    Vec2 translation;   // h'
    double rotation;    // omega
    Vector pressure;
    double time = 0.0;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<double> energy;          // E = (|u|^2 + M|h'|^2 + I0 w^2)/2
    std::vector<Vec3> rigid;             // (h'_x, h'_y, omega)
    std::vector<Vector> controls;        // zeta coefficients per sample
    std::vector<Vector> reduced_states;  // x per sample
};

// open loop: prescribed zeta coefficients as a function of time (may be null
// for the homogeneous system); closed loop: static feedback gain
struct OpenLoop {
    std::function<Vector(double)> control;
};
struct ClosedLoop {
    const FeedbackGain* gain = nullptr;
};
using RunMode = std::variant<OpenLoop, ClosedLoop>;

// One implicit-midpoint integrator for the coupled saddle-point DAE
//   M x' = -A x + lambda M x + C^T p + control terms,  C x = -div(zeta)
// with the control entering through the interface trace.
class Simulator {
public:
    // basis may be null when the run never applies a control
    Simulator(const BlockSystem& blocks, const ControlBasis* basis, double lambda_shift,
              double dt);

    double dt() const { return dt_; }
    double lambda_shift() const { return lambda_; }
    int control_dim() const { return m_; }

    // advances the reduced state one step; c_prev/c_next are the zeta
    // coefficients at both step ends (empty allowed when no basis)
    Vector step_reduced(const Vector& x, const Vector& c_prev, const Vector& c_next,
                        Vector* multiplier = nullptr) const;

    // one step on full states; zeta coefficients held constant over the step
    CoupledState step(const CoupledState& state, const Vector& zeta_coeffs) const;

    Trajectory run(const CoupledState& initial, double horizon, const RunMode& mode) const;

    // conversions
    CoupledState make_state(const Vector& x, const Vector& c, double time) const;
    Vector reduce_state(const CoupledState& state) const;  // CompatibilityError on bad trace

    double energy(const Vector& x, const Vector& c) const;
    Vector expand_with_control(const Vector& x, const Vector& c) const;

    // midpoint dissipation rate 2 nu |D(u)|^2 of a full velocity field
    double dissipation(const Vector& u_full) const;

    const BlockSystem& blocks() const { return *blocks_; }

private:
    const BlockSystem* blocks_;
    const ControlBasis* basis_;
    double lambda_ = 0.0;
    double dt_ = 0.0;
    int m_ = 0;

    Eigen::SparseLU<SpMat> lu_;
    SpMat rhs_op_;                  // M/dt - (A - lambda M)/2
    Eigen::MatrixXd ctrl_mass_;     // E^T M_f Xi
    Eigen::MatrixXd ctrl_visc_;     // E^T A_f Xi
    Eigen::MatrixXd ctrl_div_;      // B_div Xi
    int n_ = 0, n_p_ = 0;
};

// Least-squares exponential rate of the state norm: fits log E(t) over the
// window and reports -slope/2. Throws DegenerateFit on unusable data.
double measure_decay(const Trajectory& traj, double window_start, double window_end);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

// random initial condition compatible with the coupled boundary conditions,
// normalized to unit energy
Vector random_compatible_state(const BlockSystem& blocks, unsigned long long seed);

}  // namespace fsstab
