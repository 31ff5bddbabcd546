#include "fsstab/operators.hpp"

#include "fsstab/errors.hpp"
#include "fsstab/fem.hpp"

#include <sstream>

namespace fsstab {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void append_block(Triplets& out, const SpMat& m, int row0, int col0, bool transpose = false,
                  double scale = 1.0) {
    for (int oc = 0; oc < m.outerSize(); ++oc)
        for (SpMat::InnerIterator it(m, oc); it; ++it) {
            const int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
            const int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
            out.emplace_back(row0 + r, col0 + c, scale * it.value());
        }
}

SpMat build(int rows, int cols, const Triplets& t) {
    SpMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// scalar Poisson with zero mean
// ---------------------------------------------------------------------------

ScalarPoisson::ScalarPoisson(const FunctionSpaces& spaces, const FormLibrary& forms)
    : spaces_(&spaces), forms_(&forms) {
    const int n = spaces.num_nodes();
    Triplets t;
    append_block(t, forms.scalar_stiff, 0, 0);
    for (int i = 0; i < n; ++i) {
        t.emplace_back(i, n, forms.scalar_integral[i]);
        t.emplace_back(n, i, forms.scalar_integral[i]);
    }
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>(build(n + 1, n + 1, t));
    if (lu_->info() != Eigen::Success)
        throw SolverDivergence("scalar Poisson factorization failed");
}

Vector ScalarPoisson::solve(const Vector& rhs) const {
    const int n = spaces_->num_nodes();
    Vector full = Vector::Zero(n + 1);
    full.head(n) = rhs;
    Vector sol = lu_->solve(full);
    return sol.head(n);
}

// ---------------------------------------------------------------------------
// Neumann problems N, N_hat
// ---------------------------------------------------------------------------

NeumannSolution solve_neumann(const ScalarPoisson& poisson, const FormLibrary& forms,
                              const Vec3& datum) {
    const FunctionSpaces& sp = poisson.spaces();
    const auto& erule = fem::edge_rule_deg5();

    Vector rhs = Vector::Zero(sp.num_nodes());
    for (const auto& te : sp.trace_edges) {
        if (te.tag != kTagInterface) continue;
        const Vec2 a = sp.node_coords[te.nodes[0]];
        const Vec2 b = sp.node_coords[te.nodes[1]];
        for (int q = 0; q < erule.npts; ++q) {
            const double s = erule.s[q];
            const Vec2 y = (1.0 - s) * a + s * b;
            const Vec2 velocity(datum.x() - datum.z() * y.y(), datum.y() + datum.z() * y.x());
            const double flux = velocity.dot(te.normal);
            const double w = erule.weight[q] * te.length;
            for (int i = 0; i < 3; ++i)
                rhs[te.nodes[i]] += w * flux * fem::p2_edge_shape(i, s);
        }
    }

    NeumannSolution out;
    out.potential = poisson.solve(rhs);
    const double scale = std::max(rhs.norm(), 1e-30);
    // residual of the constrained solve, orthogonal to the mean constraint
    Vector res = forms.scalar_stiff * out.potential - rhs;
    const double mean_mult = res.dot(forms.scalar_integral) / forms.scalar_integral.squaredNorm();
    res -= mean_mult * forms.scalar_integral;
    out.laplace_residual = res.norm() / scale;
    if (out.laplace_residual > 1e-10)
        throw SolverDivergence("Neumann solve residual above tolerance");

    // boundary images C q = int q n, C_hat q = int q (y ^ n)
    out.gradient_flux.setZero();
    for (const auto& te : sp.trace_edges) {
        if (te.tag != kTagInterface) continue;
        const Vec2 a = sp.node_coords[te.nodes[0]];
        const Vec2 b = sp.node_coords[te.nodes[1]];
        for (int q = 0; q < erule.npts; ++q) {
            const double s = erule.s[q];
            const Vec2 y = (1.0 - s) * a + s * b;
            double qval = 0.0;
            for (int i = 0; i < 3; ++i)
                qval += out.potential[te.nodes[i]] * fem::p2_edge_shape(i, s);
            const double w = erule.weight[q] * te.length;
            out.gradient_flux.x() += w * qval * te.normal.x();
            out.gradient_flux.y() += w * qval * te.normal.y();
            out.gradient_flux.z() += w * qval * (y.x() * te.normal.y() - y.y() * te.normal.x());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stokes lifting
// ---------------------------------------------------------------------------

StokesLifting::StokesLifting(const FunctionSpaces& spaces, const FormLibrary& forms)
    : spaces_(&spaces), forms_(&forms) {
    const int n_vel = spaces.num_velocity_dofs();
    to_interior_.assign(n_vel, -1);
    for (int n = 0; n < spaces.num_nodes(); ++n) {
        if (spaces.node_on_outer[n] || spaces.node_on_interface[n]) continue;
        for (int c = 0; c < 2; ++c) {
            to_interior_[2 * n + c] = static_cast<int>(interior_.size());
            interior_.push_back(2 * n + c);
        }
    }
    const int ni = static_cast<int>(interior_.size());
    const int n_p = spaces.num_pressure_nodes;

    Triplets t;
    for (int oc = 0; oc < forms.viscous.outerSize(); ++oc)
        for (SpMat::InnerIterator it(forms.viscous, oc); it; ++it) {
            const int r = to_interior_[it.row()], c = to_interior_[it.col()];
            if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
        }
    for (int oc = 0; oc < forms.divergence.outerSize(); ++oc)
        for (SpMat::InnerIterator it(forms.divergence, oc); it; ++it) {
            const int c = to_interior_[it.col()];
            if (c >= 0) {
                t.emplace_back(ni + static_cast<int>(it.row()), c, it.value());
                t.emplace_back(c, ni + static_cast<int>(it.row()), it.value());
            }
        }
    for (int p = 0; p < n_p; ++p) {
        t.emplace_back(ni + p, ni + n_p, forms.pressure_integral[p]);
        t.emplace_back(ni + n_p, ni + p, forms.pressure_integral[p]);
    }
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>(build(ni + n_p + 1, ni + n_p + 1, t));
    if (lu_->info() != Eigen::Success)
        throw SolverDivergence("Stokes lifting factorization failed");
}

LiftedField StokesLifting::lift(const Vector& datum) const {
    const FunctionSpaces& sp = *spaces_;
    const int n_vel = sp.num_velocity_dofs();
    const int ni = static_cast<int>(interior_.size());
    const int n_p = sp.num_pressure_nodes;

    Vector bdry = Vector::Zero(n_vel);
    double datum_norm = 0.0;
    for (int n : sp.interface_nodes)
        for (int c = 0; c < 2; ++c) {
            bdry[2 * n + c] = datum[2 * n + c];
            datum_norm += datum[2 * n + c] * datum[2 * n + c];
        }
    datum_norm = std::sqrt(datum_norm);

    const double flux = forms_->boundary_flux.dot(bdry);
    if (std::abs(flux) > 1e-8 * std::max(datum_norm, 1e-30)) {
        std::ostringstream os;
        os << "lifting datum has net interface flux " << flux;
        throw FluxViolation(os.str());
    }

    Vector rhs = Vector::Zero(ni + n_p + 1);
    const Vector av = forms_->viscous * bdry;
    for (int k = 0; k < ni; ++k) rhs[k] = -av[interior_[k]];
    rhs.segment(ni, n_p) = -(forms_->divergence * bdry);

    const Vector sol = lu_->solve(rhs);
    LiftedField out;
    out.velocity = bdry;
    for (int k = 0; k < ni; ++k) out.velocity[interior_[k]] = sol[k];
    out.pressure = sol.segment(ni, n_p);
    out.divergence_residual = (forms_->divergence * out.velocity).norm() /
                              std::max(1e-30, out.velocity.norm());
    return out;
}

// ---------------------------------------------------------------------------
// Helmholtz / Leray projection
//
// The discrete gradient space is spanned by the L2 representatives M^{-1} G q
// of scalar gradients; P is the M-orthogonal projector onto its complement.
// Solved through the symmetric indefinite system [[-M, G], [G^T, 0]].
// ---------------------------------------------------------------------------

LerayProjector::LerayProjector(const FunctionSpaces& spaces, const FormLibrary& forms)
    : spaces_(&spaces), forms_(&forms) {
    const int n_vel = spaces.num_velocity_dofs();
    const int n_s = spaces.num_nodes();
    Triplets t;
    append_block(t, forms.mass, 0, 0, false, -1.0);
    append_block(t, forms.grad_coupling, 0, n_vel);
    append_block(t, forms.grad_coupling, n_vel, 0, true);
    // fix the constant-scalar direction
    for (int i = 0; i < n_s; ++i) {
        t.emplace_back(n_vel + i, n_vel + n_s, forms.scalar_integral[i]);
        t.emplace_back(n_vel + n_s, n_vel + i, forms.scalar_integral[i]);
    }
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>(build(n_vel + n_s + 1, n_vel + n_s + 1, t));
    if (lu_->info() != Eigen::Success)
        throw SolverDivergence("Leray projector factorization failed");
}

Vector LerayProjector::gradient_part(const Vector& velocity) const {
    const int n_vel = spaces_->num_velocity_dofs();
    const int n_s = spaces_->num_nodes();
    Vector rhs = Vector::Zero(n_vel + n_s + 1);
    rhs.segment(n_vel, n_s) = forms_->grad_coupling.transpose() * velocity;
    const Vector sol = lu_->solve(rhs);
    // first block solves M u_g = G q with G^T u_g = G^T v
    return sol.head(n_vel);
}

Vector LerayProjector::project(const Vector& velocity) const {
    return velocity - gradient_part(velocity);
}

// ---------------------------------------------------------------------------
// block system
// ---------------------------------------------------------------------------

BlockSystem assemble_block_system(const FunctionSpaces& spaces, const FormLibrary& forms,
                                  const RigidBodyData& rigid) {
    BlockSystem bs;
    bs.spaces = &spaces;
    bs.forms = &forms;
    bs.rigid = rigid;

    const int n_vel = spaces.num_velocity_dofs();
    std::vector<int> interior;
    for (int n = 0; n < spaces.num_nodes(); ++n) {
        if (spaces.node_on_outer[n] || spaces.node_on_interface[n]) continue;
        interior.push_back(2 * n);
        interior.push_back(2 * n + 1);
    }
    bs.n_interior = static_cast<int>(interior.size());
    bs.n_reduced = bs.n_interior + 3;
    bs.n_pressure = spaces.num_pressure_nodes;

    Triplets t_e;
    for (int k = 0; k < bs.n_interior; ++k) t_e.emplace_back(interior[k], k, 1.0);
    for (int n : spaces.interface_nodes)
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 3; ++j) {
                const double v = forms.rigid_modes(2 * n + c, j);
                if (v != 0.0) t_e.emplace_back(2 * n + c, bs.n_interior + j, v);
            }
    bs.coupling = build(n_vel, bs.n_reduced, t_e);

    bs.body_mass = Mat3::Zero();
    bs.body_mass(0, 0) = bs.body_mass(1, 1) = rigid.mass;
    bs.body_mass(2, 2) = rigid.inertia;

    SpMat mass_red = SpMat(bs.coupling.transpose()) * forms.mass * bs.coupling;
    Triplets t_m;
    append_block(t_m, mass_red, 0, 0);
    for (int j = 0; j < 3; ++j)
        t_m.emplace_back(bs.n_interior + j, bs.n_interior + j, bs.body_mass(j, j));
    bs.mass = build(bs.n_reduced, bs.n_reduced, t_m);

    bs.viscous = SpMat(bs.coupling.transpose()) * forms.viscous * bs.coupling;
    bs.viscous.makeCompressed();
    bs.constraint = forms.divergence * bs.coupling;
    bs.constraint.makeCompressed();
    bs.pressure_integral = forms.pressure_integral;

    // added mass via the three Neumann potentials, assembled as a Galerkin form
    ScalarPoisson poisson(spaces, forms);
    std::array<NeumannSolution, 3> sols = {
        solve_neumann(poisson, forms, Vec3(1, 0, 0)),
        solve_neumann(poisson, forms, Vec3(0, 1, 0)),
        solve_neumann(poisson, forms, Vec3(0, 0, 1)),
    };
    Mat3 galerkin;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            galerkin(i, j) = sols[i].potential.dot(forms.scalar_stiff * sols[j].potential);
    bs.added_mass = 0.5 * (galerkin + galerkin.transpose());
    for (int j = 0; j < 3; ++j) bs.added_mass_boundary.col(j) = sols[j].gradient_flux;
    return bs;
}

SpMat BlockSystem::saddle(double visc_coeff, double mass_coeff) const {
    Triplets t;
    append_block(t, viscous, 0, 0, false, visc_coeff);
    append_block(t, mass, 0, 0, false, mass_coeff);
    append_block(t, constraint, n_reduced, 0);
    append_block(t, constraint, 0, n_reduced, true);
    const int n_p = static_cast<int>(constraint.rows());
    for (int p = 0; p < n_p; ++p) {
        t.emplace_back(n_reduced + p, n_reduced + n_p, pressure_integral[p]);
        t.emplace_back(n_reduced + n_p, n_reduced + p, pressure_integral[p]);
    }
    return build(n_reduced + n_p + 1, n_reduced + n_p + 1, t);
}

DivFreeProjector::DivFreeProjector(const BlockSystem& blocks) : blocks_(&blocks) {
    n_ = blocks.n_reduced;
    lu_ = std::make_unique<Eigen::SparseLU<SpMat>>(blocks.saddle(0.0, 1.0));
    if (lu_->info() != Eigen::Success)
        throw SolverDivergence("divergence-free projector factorization failed");
}

Vector DivFreeProjector::project(const Vector& x) const {
    Vector rhs = Vector::Zero(lu_->rows());
    rhs.head(n_) = blocks_->mass * x;
    return lu_->solve(rhs).head(n_);
}

}  // namespace fsstab
