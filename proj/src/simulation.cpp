#include "fsstab/simulation.hpp"

#include "fsstab/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace fsstab {

Simulator::Simulator(const BlockSystem& blocks, const ControlBasis* basis,
                     double lambda_shift, double dt)
    : blocks_(&blocks), basis_(basis), lambda_(lambda_shift), dt_(dt) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    n_ = blocks.n_reduced;
    n_p_ = blocks.n_pressure;
    m_ = basis ? basis->dimension : 0;

    // implicit midpoint: [M/dt + (A - lambda M)/2] x+ - C^T p = rhs_op x- + controls
    std::vector<Eigen::Triplet<double>> t;
    auto add = [&](const SpMat& m, double scale, int r0, int c0, bool transpose) {
        for (int oc = 0; oc < m.outerSize(); ++oc)
            for (SpMat::InnerIterator it(m, oc); it; ++it) {
                const int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
                const int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
                t.emplace_back(r0 + r, c0 + c, scale * it.value());
            }
    };
    add(blocks.mass, 1.0 / dt - 0.5 * lambda_, 0, 0, false);
    add(blocks.viscous, 0.5, 0, 0, false);
    add(blocks.constraint, 1.0, n_, 0, false);
    add(blocks.constraint, 1.0, 0, n_, true);
    for (int p = 0; p < n_p_; ++p) {
        t.emplace_back(n_ + p, n_ + n_p_, blocks.pressure_integral[p]);
        t.emplace_back(n_ + n_p_, n_ + p, blocks.pressure_integral[p]);
    }
    SpMat sys(n_ + n_p_ + 1, n_ + n_p_ + 1);
    sys.setFromTriplets(t.begin(), t.end());
    lu_.compute(sys);
    if (lu_.info() != Eigen::Success)
        throw SolverDivergence("midpoint system factorization failed");

    rhs_op_ = blocks.mass * (1.0 / dt + 0.5 * lambda_) - blocks.viscous * 0.5;

    if (basis_) {
        const FormLibrary& forms = *blocks.forms;
        const SpMat Et = blocks.coupling.transpose();
        ctrl_mass_ = Et * (forms.mass * basis_->modes);
        ctrl_visc_ = Et * (forms.viscous * basis_->modes);
        ctrl_div_ = Eigen::MatrixXd(forms.divergence * basis_->modes);
    }
}

Vector Simulator::step_reduced(const Vector& x, const Vector& c_prev, const Vector& c_next,
                               Vector* multiplier) const {
    Vector rhs = Vector::Zero(n_ + n_p_ + 1);
    rhs.head(n_) = rhs_op_ * x;
    if (m_ > 0 && (c_prev.size() || c_next.size())) {
        const Vector cp = c_prev.size() ? c_prev : Vector::Zero(m_);
        const Vector cn = c_next.size() ? c_next : Vector::Zero(m_);
        rhs.head(n_) -= ctrl_mass_ * ((cn - cp) / dt_);
        rhs.head(n_) -= ctrl_visc_ * (0.5 * (cn + cp));
        rhs.head(n_) += lambda_ * (ctrl_mass_ * (0.5 * (cn + cp)));
        rhs.segment(n_, n_p_) = -(ctrl_div_ * cn);
    }
    const Vector sol = lu_.solve(rhs);
    if (multiplier) *multiplier = sol.segment(n_, n_p_);
    return sol.head(n_);
}

Vector Simulator::expand_with_control(const Vector& x, const Vector& c) const {
    Vector u = blocks_->expand(x);
    if (m_ > 0 && c.size()) u += basis_->modes * c;
    return u;
}

double Simulator::energy(const Vector& x, const Vector& c) const {
    const Vector u = expand_with_control(x, c);
    const double fluid = u.dot(blocks_->forms->mass * u);
    const Vec3 hw = blocks_->rigid_part(x);
    const double body = blocks_->rigid.mass * hw.head<2>().squaredNorm() +
                        blocks_->rigid.inertia * hw.z() * hw.z();
    return 0.5 * (fluid + body);
}

double Simulator::dissipation(const Vector& u_full) const {
    return u_full.dot(blocks_->forms->viscous * u_full);  // 2 nu |D(u)|^2
}

CoupledState Simulator::make_state(const Vector& x, const Vector& c, double time) const {
    CoupledState s;
    s.fluid_velocity = expand_with_control(x, c);
    const Vec3 hw = blocks_->rigid_part(x);
    s.translation = hw.head<2>();
    s.rotation = hw.z();
    s.time = time;
    return s;
}

Vector Simulator::reduce_state(const CoupledState& state) const {
    const FunctionSpaces& sp = *blocks_->spaces;
    if (state.fluid_velocity.size() != sp.num_velocity_dofs())
        throw CompatibilityError("fluid velocity vector has the wrong dimension");
    Vector x = Vector::Zero(n_);
    // interior dofs in the order the coupling matrix enumerates them
    int k = 0;
    for (int node = 0; node < sp.num_nodes(); ++node) {
        if (sp.node_on_outer[node] || sp.node_on_interface[node]) continue;
        x[k++] = state.fluid_velocity[2 * node];
        x[k++] = state.fluid_velocity[2 * node + 1];
    }
    x[n_ - 3] = state.translation.x();
    x[n_ - 2] = state.translation.y();
    x[n_ - 1] = state.rotation;

    // trace compatibility: u = h' + omega ^ y on the interface, 0 outside
    const Vector reconstructed = blocks_->expand(x);
    const double scale = std::max(1.0, state.fluid_velocity.norm());
    for (int node = 0; node < sp.num_nodes(); ++node) {
        if (!sp.node_on_outer[node] && !sp.node_on_interface[node]) continue;
        for (int comp = 0; comp < 2; ++comp) {
            const int dof = 2 * node + comp;
            if (std::abs(reconstructed[dof] - state.fluid_velocity[dof]) > 1e-8 * scale)
                throw CompatibilityError(
                    "initial fluid trace is incompatible with the rigid velocity");
        }
    }
    return x;
}

Trajectory Simulator::run(const CoupledState& initial, double horizon,
                          const RunMode& mode) const {
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    Vector x = reduce_state(initial);
    Vector c = Vector::Zero(m_);

    const bool closed = std::holds_alternative<ClosedLoop>(mode);
    const FeedbackGain* gain = closed ? std::get<ClosedLoop>(mode).gain : nullptr;
    if (closed && !gain) throw ConfigError("closed-loop run needs a gain");
    if (closed && gain->dimension > 0 && gain->modes != m_)
        throw ConfigError("feedback gain does not match the control basis");
    const auto* open = closed ? nullptr : &std::get<OpenLoop>(mode);
    if (!closed && open->control && m_ == 0)
        throw ConfigError("open-loop control requires a control basis");

    const int steps = static_cast<int>(std::ceil(horizon / dt_ - 1e-12));
    Trajectory traj;
    traj.times.reserve(steps + 1);

    auto record = [&](double t, const Vector& xs, const Vector& cs) {
        traj.times.push_back(t);
        traj.energy.push_back(energy(xs, cs));
        traj.rigid.push_back(blocks_->rigid_part(xs));
        traj.controls.push_back(cs);
        traj.reduced_states.push_back(xs);
    };
    record(initial.time, x, c);

    for (int k = 0; k < steps; ++k) {
        const double t_next = initial.time + (k + 1) * dt_;
        Vector c_next = Vector::Zero(m_);
        if (closed) {
            if (gain->dimension > 0) c_next = gain->evaluate(x, c);  // lagged gain
        } else if (open->control) {
            c_next = open->control(t_next);
            if (c_next.size() != m_) throw ConfigError("control callback dimension mismatch");
        }
        x = step_reduced(x, c, c_next);
        if (!x.allFinite()) throw SolverDivergence("time step produced non-finite state");
        c = c_next;
        record(t_next, x, c);
    }
    return traj;
}

CoupledState Simulator::step(const CoupledState& state, const Vector& zeta_coeffs) const {
    Vector c = zeta_coeffs.size() ? zeta_coeffs : Vector::Zero(m_);
    if (c.size() != m_) throw ConfigError("zeta coefficient dimension mismatch");
    const Vector x = reduce_state(state);
    Vector mult;
    const Vector x_next = step_reduced(x, c, c, &mult);
    CoupledState out = make_state(x_next, c, state.time + dt_);
    out.pressure = mult;
    return out;
}

double measure_decay(const Trajectory& traj, double window_start, double window_end) {
    std::vector<double> ts, logs;
    for (size_t i = 0; i < traj.times.size(); ++i) {
        const double t = traj.times[i];
        if (t < window_start - 1e-12 || t > window_end + 1e-12) continue;
        const double e = traj.energy[i];
        if (!(e > 0.0) || !std::isfinite(e))
            throw DegenerateFit("nonpositive energy sample in fit window");
        ts.push_back(t);
        logs.push_back(std::log(e));
    }
    if (ts.size() < 10) throw DegenerateFit("fewer than 10 samples in fit window");
    const size_t n = ts.size();
    double tm = 0, lm = 0;
    for (size_t i = 0; i < n; ++i) {
        tm += ts[i];
        lm += logs[i];
    }
    tm /= n;
    lm /= n;
    double num = 0, den = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (ts[i] - tm) * (logs[i] - lm);
        den += (ts[i] - tm) * (ts[i] - tm);
    }
    if (den == 0.0) throw DegenerateFit("degenerate time window");
    return -0.5 * num / den;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open trajectory csv: " + path);
    const int m = traj.controls.empty() ? 0 : static_cast<int>(traj.controls.front().size());
    os << "t,energy,h_prime_norm,omega_abs";
    for (int j = 0; j < m; ++j) os << ",zeta_" << j;
    os << "\n";
    char buf[64];
    for (size_t i = 0; i < traj.times.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", traj.times[i]);
        os << buf;
        std::snprintf(buf, sizeof(buf), ",%.17g", traj.energy[i]);
        os << buf;
        std::snprintf(buf, sizeof(buf), ",%.17g", traj.rigid[i].head<2>().norm());
        os << buf;
        std::snprintf(buf, sizeof(buf), ",%.17g", std::abs(traj.rigid[i].z()));
        os << buf;
        for (int j = 0; j < m; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.17g", traj.controls[i][j]);
            os << buf;
        }
        os << "\n";
    }
}

Vector random_compatible_state(const BlockSystem& blocks, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Vector x = Vector::NullaryExpr(blocks.n_reduced, [&](Eigen::Index) { return gauss(rng); });

    // White noise in the discrete space is not H1-bounded as the mesh refines;
    // two passes of the constrained Stokes resolvent (A + M)^{-1} M push the
    // state into the compatible smooth class the stabilization theory assumes
    // (trace matched to its rigid velocity, divergence free).
    Eigen::SparseLU<SpMat> smoother(blocks.saddle(1.0, 1.0));
    if (smoother.info() != Eigen::Success)
        throw SolverDivergence("random state smoother factorization failed");
    for (int pass = 0; pass < 2; ++pass) {
        Vector rhs = Vector::Zero(smoother.rows());
        rhs.head(blocks.n_reduced) = blocks.mass * x;
        x = smoother.solve(rhs).head(blocks.n_reduced);
    }
    const double e = std::sqrt(x.dot(blocks.mass * x));
    if (e <= 0.0) throw SolverDivergence("random state projection collapsed");
    return x / e;
}

}  // namespace fsstab
