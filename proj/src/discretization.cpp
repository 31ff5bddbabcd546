#include "fsstab/discretization.hpp"

#include "fsstab/errors.hpp"
#include "fsstab/fem.hpp"

#include <Eigen/SparseLU>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace fsstab {

using fem::TriGeometry;

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

SpMat from_triplets(int rows, int cols, const Triplets& t) {
    SpMat m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

}  // namespace

FunctionSpaces build_spaces(const Mesh& mesh, int region) {
    FunctionSpaces sp;
    sp.mesh = &mesh;
    sp.region = region;

    std::vector<int> vmap(mesh.num_vertices(), -1);
    for (int ti = 0; ti < static_cast<int>(mesh.triangles.size()); ++ti) {
        const auto& t = mesh.triangles[ti];
        if (t.tag != region) continue;
        for (int v : t.v) {
            if (vmap[v] < 0) {
                vmap[v] = sp.num_nodes();
                sp.node_vertex.push_back(v);
                sp.node_coords.push_back(mesh.vertices[v]);
            }
        }
    }
    sp.num_pressure_nodes = sp.num_nodes();

    std::map<std::pair<int, int>, int> edge_node;
    auto midpoint_node = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        auto it = edge_node.find({a, b});
        if (it != edge_node.end()) return it->second;
        const int node = sp.num_nodes();
        edge_node[{a, b}] = node;
        sp.node_vertex.push_back(-1);
        sp.node_coords.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        return node;
    };

    for (int ti = 0; ti < static_cast<int>(mesh.triangles.size()); ++ti) {
        const auto& t = mesh.triangles[ti];
        if (t.tag != region) continue;
        std::array<int, 6> nodes;
        for (int k = 0; k < 3; ++k) nodes[k] = vmap[t.v[k]];
        nodes[3] = midpoint_node(t.v[0], t.v[1]);
        nodes[4] = midpoint_node(t.v[1], t.v[2]);
        nodes[5] = midpoint_node(t.v[2], t.v[0]);
        sp.cell_nodes.push_back(nodes);
        sp.cell_pnodes.push_back({nodes[0], nodes[1], nodes[2]});
        sp.cell_tris.push_back(ti);
    }

    std::map<std::pair<int, int>, int> edge_cell;
    for (size_t c = 0; c < sp.cell_nodes.size(); ++c) {
        const auto& tri = mesh.triangles[sp.cell_tris[c]];
        for (int k = 0; k < 3; ++k) {
            int a = tri.v[k], b = tri.v[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edge_cell[{a, b}] = static_cast<int>(c);
        }
    }

    sp.node_on_outer.assign(sp.num_nodes(), false);
    sp.node_on_interface.assign(sp.num_nodes(), false);
    for (const auto& e : mesh.boundary_edges) {
        const bool wanted = (region == kTagFluid) || e.tag == kTagInterface;
        if (!wanted) continue;
        if (vmap[e.v[0]] < 0 || vmap[e.v[1]] < 0) continue;  // not on this region
        int a = e.v[0], b = e.v[1];
        FunctionSpaces::TraceEdge te;
        te.nodes = {vmap[a], vmap[b], midpoint_node(a, b)};
        te.normal = e.normal;
        te.length = (mesh.vertices[b] - mesh.vertices[a]).norm();
        te.tag = e.tag;
        {
            int ka = e.v[0], kb = e.v[1];
            if (ka > kb) std::swap(ka, kb);
            const auto it = edge_cell.find({ka, kb});
            te.cell = (it == edge_cell.end()) ? -1 : it->second;
        }
        sp.trace_edges.push_back(te);
        auto& flags = (e.tag == kTagOuter) ? sp.node_on_outer : sp.node_on_interface;
        for (int n : te.nodes) flags[n] = true;
    }
    for (int n = 0; n < sp.num_nodes(); ++n) {
        if (sp.node_on_outer[n] && sp.node_on_interface[n])
            throw MeshingFailure("node lies on both boundaries; regions touch");
        if (sp.node_on_outer[n]) sp.outer_nodes.push_back(n);
        if (sp.node_on_interface[n]) sp.interface_nodes.push_back(n);
    }

    if (region == kTagFluid) {
        FormLibrary forms = assemble_forms(sp, 1.0);
        sp.infsup_estimate = inf_sup_estimate(sp, forms);
        if (sp.infsup_estimate < 1e-3) {
            std::ostringstream os;
            os << "discrete inf-sup estimate " << sp.infsup_estimate << " below 1e-3";
            throw InfSupFailure(os.str());
        }
    }
    return sp;
}

FormLibrary assemble_forms(const FunctionSpaces& sp, double viscosity) {
    FormLibrary forms;
    forms.viscosity = viscosity;
    const auto& quad = fem::tri_rule_deg5();
    const Mesh& mesh = *sp.mesh;

    const int n_nodes = sp.num_nodes();
    const int n_vel = sp.num_velocity_dofs();
    const int n_p = sp.num_pressure_nodes;

    Triplets t_mass, t_visc, t_gg, t_dd, t_div, t_sstiff, t_smass, t_pmass, t_gc;
    forms.scalar_integral = Vector::Zero(n_nodes);
    forms.pressure_integral = Vector::Zero(n_p);

    for (size_t c = 0; c < sp.cell_nodes.size(); ++c) {
        const auto& nodes = sp.cell_nodes[c];
        const auto& tri = mesh.triangles[sp.cell_tris[c]];
        const TriGeometry geo(mesh.vertices[tri.v[0]], mesh.vertices[tri.v[1]],
                              mesh.vertices[tri.v[2]]);
        const double area = geo.area;

        Eigen::Matrix<double, 6, 6> me = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 6> ke = Eigen::Matrix<double, 6, 6>::Zero();
        // physical-space gradients at quadrature points
        std::array<std::array<Vec2, 6>, 7> grads;
        std::array<std::array<double, 6>, 7> shapes;
        for (int q = 0; q < quad.npts; ++q) {
            const double* bq = quad.bary[q].data();
            for (int i = 0; i < 6; ++i) {
                shapes[q][i] = fem::p2_shape(i, bq);
                grads[q][i] = geo.jac_inv_t * fem::p2_grad_ref(i, bq);
            }
            const double w = quad.weight[q] * area;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    me(i, j) += w * shapes[q][i] * shapes[q][j];
                    ke(i, j) += w * grads[q][i].dot(grads[q][j]);
                }
        }

        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                t_sstiff.emplace_back(nodes[i], nodes[j], ke(i, j));
                t_smass.emplace_back(nodes[i], nodes[j], me(i, j));
                for (int a = 0; a < 2; ++a) {
                    t_mass.emplace_back(2 * nodes[i] + a, 2 * nodes[j] + a, me(i, j));
                    t_gg.emplace_back(2 * nodes[i] + a, 2 * nodes[j] + a, ke(i, j));
                }
            }
            forms.scalar_integral[nodes[i]] +=
                [&] {
                    double s = 0.0;
                    for (int q = 0; q < quad.npts; ++q) s += quad.weight[q] * shapes[q][i];
                    return s * area;
                }();
        }

        // viscous 2 nu D:D, div-div, velocity-gradient couplings
        for (int q = 0; q < quad.npts; ++q) {
            const double w = quad.weight[q] * area;
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    const Vec2 gi = grads[q][i], gj = grads[q][j];
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            const double visc =
                                viscosity * ((a == b ? gi.dot(gj) : 0.0) + gi[b] * gj[a]);
                            t_visc.emplace_back(2 * nodes[i] + a, 2 * nodes[j] + b, w * visc);
                            t_dd.emplace_back(2 * nodes[i] + a, 2 * nodes[j] + b,
                                              w * gi[a] * gj[b]);
                        }
                    // int (phi_j e_b) . grad q_i
                    for (int b = 0; b < 2; ++b)
                        t_gc.emplace_back(2 * nodes[j] + b, nodes[i],
                                          w * shapes[q][j] * gi[b]);
                }
            // divergence against P1 pressure
            for (int pi = 0; pi < 3; ++pi) {
                const double chi = fem::p1_shape(pi, quad.bary[q].data());
                for (int j = 0; j < 6; ++j)
                    for (int b = 0; b < 2; ++b)
                        t_div.emplace_back(sp.cell_pnodes[c][pi], 2 * nodes[j] + b,
                                           w * chi * grads[q][j][b]);
            }
        }

        // P1 mass and integral
        Eigen::Matrix3d pmass;
        pmass << 2, 1, 1, 1, 2, 1, 1, 1, 2;
        pmass *= area / 12.0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j)
                t_pmass.emplace_back(sp.cell_pnodes[c][i], sp.cell_pnodes[c][j], pmass(i, j));
            forms.pressure_integral[sp.cell_pnodes[c][i]] += area / 3.0;
        }
    }

    forms.mass = from_triplets(n_vel, n_vel, t_mass);
    forms.viscous = from_triplets(n_vel, n_vel, t_visc);
    forms.gradgrad = from_triplets(n_vel, n_vel, t_gg);
    forms.divdiv = from_triplets(n_vel, n_vel, t_dd);
    forms.divergence = from_triplets(n_p, n_vel, t_div);
    forms.scalar_stiff = from_triplets(n_nodes, n_nodes, t_sstiff);
    forms.scalar_mass = from_triplets(n_nodes, n_nodes, t_smass);
    forms.pressure_mass = from_triplets(n_p, n_p, t_pmass);
    forms.grad_coupling = from_triplets(n_vel, n_nodes, t_gc);

    // rigid generators on the interface: e1, e2, omega ^ y = (-y2, y1)
    forms.rigid_modes = Eigen::MatrixXd::Zero(n_vel, 3);
    for (int n : sp.interface_nodes) {
        const Vec2 y = sp.node_coords[n];
        forms.rigid_modes(2 * n, 0) = 1.0;
        forms.rigid_modes(2 * n + 1, 1) = 1.0;
        forms.rigid_modes(2 * n, 2) = -y.y();
        forms.rigid_modes(2 * n + 1, 2) = y.x();
    }

    // interface flux functional, n points out of the fluid
    forms.boundary_flux = Vector::Zero(n_vel);
    const auto& erule = fem::edge_rule_deg5();
    for (const auto& te : sp.trace_edges) {
        if (te.tag != kTagInterface) continue;
        for (int q = 0; q < erule.npts; ++q) {
            const double w = erule.weight[q] * te.length;
            for (int i = 0; i < 3; ++i) {
                const double phi = fem::p2_edge_shape(i, erule.s[q]);
                forms.boundary_flux[2 * te.nodes[i]] += w * phi * te.normal.x();
                forms.boundary_flux[2 * te.nodes[i] + 1] += w * phi * te.normal.y();
            }
        }
    }
    return forms;
}

double inf_sup_estimate(const FunctionSpaces& sp, const FormLibrary& forms) {
    // beta^2 = smallest eigenvalue of  B A^{-1} B^T q = beta^2 M_p q  on
    // zero-mean pressures, A = vector Laplacian with full Dirichlet velocity.
    const int n_vel = sp.num_velocity_dofs();
    const int n_p = sp.num_pressure_nodes;

    std::vector<int> keep;
    for (int n = 0; n < sp.num_nodes(); ++n)
        if (!sp.node_on_outer[n] && !sp.node_on_interface[n]) {
            keep.push_back(2 * n);
            keep.push_back(2 * n + 1);
        }
    const int ni = static_cast<int>(keep.size());
    std::vector<int> to_interior(n_vel, -1);
    for (int k = 0; k < ni; ++k) to_interior[keep[k]] = k;

    Triplets t_saddle;
    auto push_block = [&](const SpMat& m, int row0, int col0, bool restrict_rows,
                          bool restrict_cols, bool transpose) {
        for (int oc = 0; oc < m.outerSize(); ++oc)
            for (SpMat::InnerIterator it(m, oc); it; ++it) {
                int r = transpose ? static_cast<int>(it.col()) : static_cast<int>(it.row());
                int c = transpose ? static_cast<int>(it.row()) : static_cast<int>(it.col());
                if (restrict_rows) {
                    r = to_interior[r];
                    if (r < 0) continue;
                }
                if (restrict_cols) {
                    c = to_interior[c];
                    if (c < 0) continue;
                }
                t_saddle.emplace_back(row0 + r, col0 + c, it.value());
            }
    };
    // [[A, B^T, 0], [B, 0, m], [0, m^T, 0]]
    const int n_total = ni + n_p + 1;
    push_block(forms.gradgrad, 0, 0, true, true, false);
    push_block(forms.divergence, ni, 0, false, true, false);
    push_block(forms.divergence, 0, ni, true, false, true);
    for (int p = 0; p < n_p; ++p) {
        t_saddle.emplace_back(ni + p, ni + n_p, forms.pressure_integral[p]);
        t_saddle.emplace_back(ni + n_p, ni + p, forms.pressure_integral[p]);
    }
    SpMat saddle = from_triplets(n_total, n_total, t_saddle);

    Eigen::SparseLU<SpMat> lu(saddle);
    if (lu.info() != Eigen::Success)
        throw SolverDivergence("inf-sup saddle factorization failed");

    // Lanczos in the M_p inner product on q -> S^{-1} M_p q.
    auto apply = [&](const Vector& q) {
        Vector rhs = Vector::Zero(n_total);
        rhs.segment(ni, n_p) = forms.pressure_mass * q;
        Vector sol = lu.solve(rhs);
        return Vector(-sol.segment(ni, n_p));  // p solves -S p + m gamma = M_p q
    };
    auto mp_dot = [&](const Vector& a, const Vector& b) {
        return a.dot(forms.pressure_mass * b);
    };

    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss;
    Vector v = Vector::NullaryExpr(n_p, [&](Eigen::Index) { return gauss(rng); });
    v = apply(v);  // purge the constant-pressure direction
    double nrm = std::sqrt(mp_dot(v, v));
    v /= nrm;

    const int steps = std::min(40, n_p - 1);
    std::vector<Vector> basis{v};
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
    Vector prev = Vector::Zero(n_p);
    double beta = 0.0;
    int m = 0;
    for (int k = 0; k < steps; ++k) {
        Vector w = apply(basis[k]);
        const double alpha = mp_dot(w, basis[k]);
        T(k, k) = alpha;
        w -= alpha * basis[k];
        if (k > 0) w -= beta * basis[k - 1];
        for (const auto& u : basis) w -= mp_dot(w, u) * u;  // full reorthogonalization
        beta = std::sqrt(std::max(0.0, mp_dot(w, w)));
        m = k + 1;
        if (beta < 1e-13) break;
        if (k + 1 < steps) {
            T(k, k + 1) = T(k + 1, k) = beta;
            basis.push_back(w / beta);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(m, m));
    const double theta_max = es.eigenvalues().maxCoeff();
    if (theta_max <= 0.0) throw SolverDivergence("inf-sup Lanczos failed");
    return 1.0 / std::sqrt(theta_max);
}

void write_matrix_coo(const std::string& path, const SpMat& m) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open matrix dump file: " + path);
    char buf[96];
    for (int oc = 0; oc < m.outerSize(); ++oc)
        for (SpMat::InnerIterator it(m, oc); it; ++it) {
            std::snprintf(buf, sizeof(buf), "%ld %ld %.17g\n", static_cast<long>(it.row()),
                          static_cast<long>(it.col()), it.value());
            os << buf;
        }
}

}  // namespace fsstab
