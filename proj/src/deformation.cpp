#include "fsstab/deformation.hpp"

#include "fsstab/errors.hpp"
#include "fsstab/fem.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace fsstab {

using fem::TriGeometry;

SolidMechanics::SolidMechanics(const Mesh& mesh, const RigidBodyData& rigid)
    : mesh_(&mesh), rigid_(rigid) {
    spaces_ = build_spaces(mesh, kTagSolid);
    forms_ = assemble_forms(spaces_, 1.0);  // viscous form = 2 int D:D

    const int n_vel = spaces_.num_velocity_dofs();
    to_interior_.assign(n_vel, -1);
    for (int n = 0; n < spaces_.num_nodes(); ++n) {
        if (spaces_.node_on_interface[n]) continue;
        for (int c = 0; c < 2; ++c) {
            to_interior_[2 * n + c] = static_cast<int>(interior_.size());
            interior_.push_back(2 * n + c);
        }
    }

    // moment vectors: int v . e_k and int v . (^y)
    moments_ = Eigen::MatrixXd::Zero(n_vel, 3);
    const auto& quad = fem::tri_rule_deg5();
    for (size_t c = 0; c < spaces_.cell_nodes.size(); ++c) {
        const auto& tri = mesh.triangles[spaces_.cell_tris[c]];
        const TriGeometry geo(mesh.vertices[tri.v[0]], mesh.vertices[tri.v[1]],
                              mesh.vertices[tri.v[2]]);
        for (int q = 0; q < quad.npts; ++q) {
            const double* bq = quad.bary[q].data();
            const double w = quad.weight[q] * geo.area;
            const Vec2 y = geo.point(bq);
            for (int i = 0; i < 6; ++i) {
                const double phi = fem::p2_shape(i, bq);
                const int node = spaces_.cell_nodes[c][i];
                moments_(2 * node, 0) += w * phi;
                moments_(2 * node + 1, 1) += w * phi;
                moments_(2 * node, 2) += -w * phi * y.y();
                moments_(2 * node + 1, 2) += w * phi * y.x();
            }
        }
    }

    // boundary hat extensions of the rigid generators, the test fields of the
    // variational traction evaluation
    hat_tests_ = Eigen::MatrixXd::Zero(n_vel, 3);
    for (int n : spaces_.interface_nodes) {
        const Vec2 y = spaces_.node_coords[n];
        hat_tests_(2 * n, 0) = 1.0;
        hat_tests_(2 * n + 1, 1) = 1.0;
        hat_tests_(2 * n, 2) = -y.y();
        hat_tests_(2 * n + 1, 2) = y.x();
    }
    area_ = mesh.region_area(kTagSolid);
    j0_ = rigid.inertia * area_ / rigid.mass;  // int |y|^2

    // direct traction rows over the solid boundary (diagnostics), using the
    // same normal as F: exterior to the fluid, pointing into the solid
    traction_rows_ = Eigen::MatrixXd::Zero(3, n_vel);
    const auto& erule = fem::edge_rule_deg5();
    for (const auto& te : spaces_.trace_edges) {
        if (te.tag != kTagInterface || te.cell < 0) continue;
        const Vec2 nf = te.normal;
        const auto& tri = mesh.triangles[spaces_.cell_tris[te.cell]];
        const TriGeometry geo(mesh.vertices[tri.v[0]], mesh.vertices[tri.v[1]],
                              mesh.vertices[tri.v[2]]);
        const Vec2 a = spaces_.node_coords[te.nodes[0]];
        const Vec2 b = spaces_.node_coords[te.nodes[1]];
        for (int q = 0; q < erule.npts; ++q) {
            const double s = erule.s[q];
            const Vec2 y = (1.0 - s) * a + s * b;
            // barycentric coordinates of y inside the adjacent cell
            const Vec2 local = geo.jac.inverse() * (y - geo.v0);
            const double bary[3] = {1.0 - local.x() - local.y(), local.x(), local.y()};
            const double w = erule.weight[q] * te.length;
            for (int i = 0; i < 6; ++i) {
                const Vec2 g = geo.jac_inv_t * fem::p2_grad_ref(i, bary);
                const int node = spaces_.cell_nodes[te.cell][i];
                for (int comp = 0; comp < 2; ++comp) {
                    // 2 D(phi_node e_comp) n = e_comp (grad.n) + n_comp grad
                    Vec2 tvec = nf.dot(g) * Vec2::Unit(comp) + nf[comp] * g;
                    traction_rows_(0, 2 * node + comp) += w * tvec.x();
                    traction_rows_(1, 2 * node + comp) += w * tvec.y();
                    traction_rows_(2, 2 * node + comp) +=
                        w * (y.x() * tvec.y() - y.y() * tvec.x());
                }
            }
        }
    }

    // Poincare margin: smallest eigenvalue of the scalar Dirichlet Laplacian
    // by inverse power iteration on interior scalar nodes
    {
        std::vector<int> sint;
        for (int n = 0; n < spaces_.num_nodes(); ++n)
            if (!spaces_.node_on_interface[n]) sint.push_back(n);
        const int ni = static_cast<int>(sint.size());
        std::vector<int> smap(spaces_.num_nodes(), -1);
        for (int k = 0; k < ni; ++k) smap[sint[k]] = k;
        std::vector<Eigen::Triplet<double>> tk, tm;
        for (int oc = 0; oc < forms_.scalar_stiff.outerSize(); ++oc)
            for (SpMat::InnerIterator it(forms_.scalar_stiff, oc); it; ++it) {
                const int r = smap[it.row()], c = smap[it.col()];
                if (r >= 0 && c >= 0) tk.emplace_back(r, c, it.value());
            }
        for (int oc = 0; oc < forms_.scalar_mass.outerSize(); ++oc)
            for (SpMat::InnerIterator it(forms_.scalar_mass, oc); it; ++it) {
                const int r = smap[it.row()], c = smap[it.col()];
                if (r >= 0 && c >= 0) tm.emplace_back(r, c, it.value());
            }
        SpMat K(ni, ni), M(ni, ni);
        K.setFromTriplets(tk.begin(), tk.end());
        M.setFromTriplets(tm.begin(), tm.end());
        Eigen::SimplicialLDLT<SpMat> kldlt(K);
        if (kldlt.info() != Eigen::Success)
            throw SolverDivergence("solid Laplacian factorization failed");
        Vector v = Vector::Ones(ni);
        double lambda1 = 0.0;
        for (int it = 0; it < 60; ++it) {
            Vector w = kldlt.solve(M * v);
            const double nrm = std::sqrt(w.dot(M * w));
            v = w / nrm;
            lambda1 = v.dot(K * v) / v.dot(M * v);
        }
        // C_p^2 = 2/lambda1 from |phi|^2 <= |grad phi|^2/lambda1 and the Korn
        // identity; mu_min = 10 * (2/C_p^2) = 10 * lambda1
        mu_min_ = 10.0 * lambda1;
    }
}

const Eigen::SimplicialLDLT<SpMat>& SolidMechanics::factorization(double mu) const {
    if (!ldlt_ || cached_mu_ != mu) {
        const int ni = static_cast<int>(interior_.size());
        std::vector<Eigen::Triplet<double>> t;
        auto add = [&](const SpMat& m, double scale) {
            for (int oc = 0; oc < m.outerSize(); ++oc)
                for (SpMat::InnerIterator it(m, oc); it; ++it) {
                    const int r = to_interior_[it.row()], c = to_interior_[it.col()];
                    if (r >= 0 && c >= 0) t.emplace_back(r, c, scale * it.value());
                }
        };
        add(forms_.mass, mu);
        add(forms_.viscous, 1.0);
        SpMat K(ni, ni);
        K.setFromTriplets(t.begin(), t.end());
        ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(K);
        if (ldlt_->info() != Eigen::Success)
            throw SolverDivergence("mu-shifted solid factorization failed");
        cached_mu_ = mu;
    }
    return *ldlt_;
}

double SolidMechanics::interface_flux(const Vector& field) const {
    // boundary_flux was assembled with the fluid-exterior normal; flip sign
    return -forms_.boundary_flux.dot(field);
}

Vec3 SolidMechanics::tractions(const Vector& phi) const { return traction_rows_ * phi; }

Vector SolidMechanics::moment_vector(int which) const { return moments_.col(which); }

Vector SolidMechanics::solve_dirichlet(const Vector& zeta, const Vector& volume_force,
                                       double mu) const {
    const int n_vel = spaces_.num_velocity_dofs();
    Vector bdry = Vector::Zero(n_vel);
    for (int n : spaces_.interface_nodes)
        for (int c = 0; c < 2; ++c) bdry[2 * n + c] = zeta[2 * n + c];

    Vector full_rhs = volume_force - mu * (forms_.mass * bdry) - forms_.viscous * bdry;
    const int ni = static_cast<int>(interior_.size());
    Vector rhs(ni);
    for (int k = 0; k < ni; ++k) rhs[k] = full_rhs[interior_[k]];
    const Vector sol = factorization(mu).solve(rhs);
    Vector phi = bdry;
    for (int k = 0; k < ni; ++k) phi[interior_[k]] = sol[k];
    return phi;
}

SolidVelocityField SolidMechanics::solve_lame_fixed_point(const Vector& zeta,
                                                          double mu) const {
    const double flux = interface_flux(zeta);
    double zscale = 0.0;
    for (int n : spaces_.interface_nodes)
        zscale += zeta.segment<2>(2 * n).squaredNorm();
    zscale = std::sqrt(zscale);
    if (std::abs(flux) > 1e-8 * std::max(zscale, 1e-30))
        throw FluxViolation("deformation datum has net interface flux");

    SolidVelocityField out;
    out.mu = mu;

    // F(psi) = (rho_S/M) t1 + rho_S I0^{-1} t2 ^ y, the boundary tractions
    // evaluated variationally against the rigid-generator hat tests so the
    // momentum identities close at the discrete level. Force coefficients
    // g: F = (g1, g2) + g3 ^ y, with rho_S/M = 1/area, rho_S/I0 = 1/j0.
    auto traction_of = [&](const Vector& psi, const Vec3& g) {
        return Vec3(hat_tests_.transpose() *
                    (mu * (forms_.mass * psi) + forms_.viscous * psi - moments_ * g));
    };
    auto close_force = [&](const Vec3& t) {
        return Vec3(-t.x() / area_, -t.y() / area_, -t.z() / j0_);
    };

    Vec3 g = Vec3::Zero();
    Vector phi = solve_dirichlet(zeta, Vector::Zero(spaces_.num_velocity_dofs()), mu);
    const double scale = std::max(1e-30, std::sqrt(phi.dot(forms_.mass * phi)));
    int stalled = 0;
    for (int it = 0; it < 200; ++it) {
        g = close_force(traction_of(phi, g));
        const Vector next = solve_dirichlet(zeta, moments_ * g, mu);
        const Vector diff = next - phi;
        const double incr = std::sqrt(diff.dot(forms_.mass * diff)) / scale;
        out.iteration_report.push_back(incr);
        phi = next;
        if (incr < 1e-13) {
            out.phi = phi;
            out.force_coeffs = g;
            return out;
        }
        const size_t k = out.iteration_report.size();
        if (k >= 2 && out.iteration_report[k - 1] >= out.iteration_report[k - 2]) {
            if (++stalled >= 5)
                throw FixedPointDivergence("traction feedback is not contracting; raise mu");
        } else {
            stalled = 0;
        }
    }
    throw FixedPointDivergence("fixed point failed to converge in 200 iterations");
}

SolidVelocityField SolidMechanics::solve_lame_bordered(const Vector& zeta, double mu) const {
    const int ni = static_cast<int>(interior_.size());
    const int n_vel = spaces_.num_velocity_dofs();

    Vector bdry = Vector::Zero(n_vel);
    for (int n : spaces_.interface_nodes)
        for (int c = 0; c < 2; ++c) bdry[2 * n + c] = zeta[2 * n + c];

    // unknowns: (phi_int, g) where F = (g1, g2) + g3 ^ y; the three bordered
    // rows state g = -S_diag * variational_traction(phi, g)
    std::vector<Eigen::Triplet<double>> t;
    auto add = [&](const SpMat& m, double scale) {
        for (int oc = 0; oc < m.outerSize(); ++oc)
            for (SpMat::InnerIterator it(m, oc); it; ++it) {
                const int r = to_interior_[it.row()], c = to_interior_[it.col()];
                if (r >= 0 && c >= 0) t.emplace_back(r, c, scale * it.value());
            }
    };
    add(forms_.mass, mu);
    add(forms_.viscous, 1.0);
    // momentum force coupling: -Mom g on the interior rows
    for (int k = 0; k < ni; ++k) {
        const int dof = interior_[k];
        for (int j = 0; j < 3; ++j)
            if (moments_(dof, j) != 0.0) t.emplace_back(k, ni + j, -moments_(dof, j));
    }
    // g + S V^T [(mu M + A) phi - Mom g] = S V^T (...) bdry part moved right
    const Vec3 sdiag(1.0 / area_, 1.0 / area_, 1.0 / j0_);
    Eigen::MatrixXd vk = mu * (forms_.mass * hat_tests_) + forms_.viscous * hat_tests_;
    const Mat3 vmom = hat_tests_.transpose() * moments_;
    for (int row = 0; row < 3; ++row) {
        t.emplace_back(ni + row, ni + row, 1.0);
        for (int j = 0; j < 3; ++j)
            t.emplace_back(ni + row, ni + j, -sdiag[row] * vmom(row, j));
        for (int dof = 0; dof < n_vel; ++dof) {
            const int k = to_interior_[dof];
            if (k >= 0 && vk(dof, row) != 0.0)
                t.emplace_back(ni + row, k, sdiag[row] * vk(dof, row));
        }
    }
    SpMat sys(ni + 3, ni + 3);
    sys.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<SpMat> lu(sys);
    if (lu.info() != Eigen::Success)
        throw SolverDivergence("bordered solid factorization failed");

    Vector rhs = Vector::Zero(ni + 3);
    const Vector lift = -(mu * (forms_.mass * bdry) + forms_.viscous * bdry);
    for (int k = 0; k < ni; ++k) rhs[k] = lift[interior_[k]];
    rhs.segment<3>(ni) = -(sdiag.asDiagonal() * Vec3(vk.transpose() * bdry));

    const Vector sol = lu.solve(rhs);
    SolidVelocityField out;
    out.mu = mu;
    out.phi = bdry;
    for (int k = 0; k < ni; ++k) out.phi[interior_[k]] = sol[k];
    out.force_coeffs = sol.segment<3>(ni);
    return out;
}

SolidVelocityField SolidMechanics::solve_auto(const Vector& zeta) const {
    double mu = mu_min_;
    for (int attempt = 0; attempt < 8; ++attempt, mu *= 2.0) {
        try {
            return solve_lame_fixed_point(zeta, mu);
        } catch (const FixedPointDivergence&) {
            continue;
        }
    }
    throw FixedPointDivergence("fixed point diverged even after mu doubling");
}

ConstraintReport SolidMechanics::check_admissibility(const Vector& phi) const {
    ConstraintReport r;
    r.flux = interface_flux(phi);
    r.linear_momentum = Vec2(moments_.col(0).dot(phi), moments_.col(1).dot(phi));
    r.angular_momentum = moments_.col(2).dot(phi);

    const double area = mesh_->region_area(kTagSolid);
    const double j0 = rigid_.inertia * area / rigid_.mass;
    const double l2 = std::sqrt(std::max(1e-300, phi.dot(forms_.mass * phi)));
    double trace_l2 = 0.0, perimeter = 0.0;
    const auto& erule = fem::edge_rule_deg5();
    for (const auto& te : spaces_.trace_edges) {
        if (te.tag != kTagInterface) continue;
        perimeter += te.length;
        for (int q = 0; q < erule.npts; ++q) {
            Vec2 v = Vec2::Zero();
            for (int i = 0; i < 3; ++i) {
                const double s = fem::p2_edge_shape(i, erule.s[q]);
                v.x() += s * phi[2 * te.nodes[i]];
                v.y() += s * phi[2 * te.nodes[i] + 1];
            }
            trace_l2 += erule.weight[q] * te.length * v.squaredNorm();
        }
    }
    trace_l2 = std::sqrt(std::max(trace_l2, 1e-300));
    r.flux_rel = std::abs(r.flux) / (trace_l2 * std::sqrt(perimeter));
    r.linear_rel = r.linear_momentum.norm() / (l2 * std::sqrt(area));
    r.angular_rel = std::abs(r.angular_momentum) / (l2 * std::sqrt(j0));
    return r;
}

DeformationTrajectory integrate_deformation(const std::vector<Vector>& phi_samples,
                                            double lambda, double dt) {
    if (phi_samples.empty()) throw GridMismatch("no deformation samples");
    if (!(dt > 0.0)) throw GridMismatch("sample spacing must be positive");
    const auto n = phi_samples.front().size();
    for (const auto& p : phi_samples)
        if (p.size() != n) throw GridMismatch("inconsistent sample dimensions");

    DeformationTrajectory traj;
    traj.dt = dt;
    Vector acc = Vector::Zero(n);
    traj.times.push_back(0.0);
    traj.displacements.push_back(acc);
    for (size_t k = 0; k + 1 < phi_samples.size(); ++k) {
        const double t0 = k * dt, t1 = (k + 1) * dt;
        acc += 0.5 * dt *
               (std::exp(-lambda * t0) * phi_samples[k] +
                std::exp(-lambda * t1) * phi_samples[k + 1]);
        traj.times.push_back(t1);
        traj.displacements.push_back(acc);
    }
    return traj;
}

Vector transfer_interface_values(const FunctionSpaces& fluid, const FunctionSpaces& solid,
                                 const Vector& fluid_field) {
    // interface nodes of both spaces sit at bitwise-identical coordinates
    std::map<std::pair<double, double>, int> lookup;
    for (int n : solid.interface_nodes)
        lookup[{solid.node_coords[n].x(), solid.node_coords[n].y()}] = n;
    Vector out = Vector::Zero(solid.num_velocity_dofs());
    for (int n : fluid.interface_nodes) {
        const auto it = lookup.find({fluid.node_coords[n].x(), fluid.node_coords[n].y()});
        if (it == lookup.end())
            throw GridMismatch("fluid and solid interface nodes do not match");
        out[2 * it->second] = fluid_field[2 * n];
        out[2 * it->second + 1] = fluid_field[2 * n + 1];
    }
    return out;
}

void write_deformation_csv(const std::string& path, const FunctionSpaces& solid,
                           const Vector& displacement) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open deformation csv: " + path);
    os << "vertex_id,dx,dy\n";
    char buf[96];
    for (int n = 0; n < solid.num_nodes(); ++n) {
        if (solid.node_vertex[n] < 0) continue;  // midpoints stay internal
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", solid.node_vertex[n],
                      displacement[2 * n], displacement[2 * n + 1]);
        os << buf;
    }
}

}  // namespace fsstab
