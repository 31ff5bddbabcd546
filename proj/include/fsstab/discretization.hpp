#pragma once

#include "fsstab/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

namespace fsstab {

using SpMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Taylor-Hood pair on one mesh region: continuous P2 for each velocity
// component, continuous P1 for the pressure. Scalar P2 fields (potentials)
// share the velocity node enumeration.
//
// Node numbering: region vertices first, then region edge midpoints.
// A velocity dof is 2*node + component.
struct FunctionSpaces {
    const Mesh* mesh = nullptr;
    int region = kTagFluid;

    std::vector<int> node_vertex;      // node -> mesh vertex id (or -1 for midpoints)
    std::vector<Vec2> node_coords;
    std::vector<std::array<int, 6>> cell_nodes;  // per region triangle (P2 local order)
    std::vector<int> cell_tris;        // region triangle -> mesh triangle index
    std::vector<std::array<int, 3>> cell_pnodes;  // P1 pressure nodes per cell
    int num_pressure_nodes = 0;

    // boundary structure (nodes on tagged boundary edges, incl. midpoints)
    std::vector<int> outer_nodes;      // on the container boundary (fluid space)
    std::vector<int> interface_nodes;  // on the fluid-solid interface
    std::vector<bool> node_on_outer;
    std::vector<bool> node_on_interface;

    // P2 trace data per tagged boundary edge adjacent to this region:
    // the three trace nodes (endpoints + midpoint) and copies of edge geometry
    struct TraceEdge {
        std::array<int, 3> nodes;   // local node ids: v0, v1, midpoint
        Vec2 normal;                // unit normal pointing out of the fluid
        double length;
        int tag;
        int cell = -1;              // adjacent region cell (for trace gradients)
    };
    std::vector<TraceEdge> trace_edges;

    double infsup_estimate = 0.0;  // fluid region only

    int num_nodes() const { return static_cast<int>(node_coords.size()); }
    int num_velocity_dofs() const { return 2 * num_nodes(); }
    int velocity_dof(int node, int comp) const { return 2 * node + comp; }
};

// Elementary Galerkin forms shared by the coupled operators.
struct FormLibrary {
    double viscosity = 1.0;

    SpMat mass;          // vector P2 L2 inner product
    SpMat viscous;       // 2 nu int D(u):D(v)
    SpMat gradgrad;      // int grad u : grad v (vector)
    SpMat divdiv;        // int (div u)(div v)
    SpMat divergence;    // int q div u  (pressure x velocity)
    SpMat scalar_stiff;  // int grad p . grad q (scalar P2)
    SpMat scalar_mass;   // scalar P2 L2
    SpMat pressure_mass; // P1 L2
    SpMat grad_coupling; // int v . grad q  (velocity x scalar P2)

    Eigen::MatrixXd rigid_modes;  // n_vel x 3: e1, e2, rotation (-y2, y1) on interface nodes
    Vector boundary_flux;         // f_i = int_{interface} phi_i . n dGamma (n out of fluid)
    Vector pressure_integral;     // int p_i (P1), zero-mean constraint row
    Vector scalar_integral;       // int q_i (P2)
};

// Builds the P2/P1 spaces for one region of the mesh. For the fluid region
// this runs the inf-sup eigen-test and throws InfSupFailure below 1e-3.
FunctionSpaces build_spaces(const Mesh& mesh, int region = kTagFluid);

FormLibrary assemble_forms(const FunctionSpaces& spaces, double viscosity);

// Smallest inf-sup value of the discrete divergence/pressure pair, computed
// from a Lanczos iteration on the pressure Schur complement.
double inf_sup_estimate(const FunctionSpaces& spaces, const FormLibrary& forms);

// Interpolates an analytic field at the P2 nodes of the space.
template <typename F>
Vector interpolate_velocity(const FunctionSpaces& spaces, F&& field) {
    Vector u(spaces.num_velocity_dofs());
    for (int n = 0; n < spaces.num_nodes(); ++n) {
        const Vec2 value = field(spaces.node_coords[n]);
        u[2 * n] = value.x();
        u[2 * n + 1] = value.y();
    }
    return u;
}

// Writes a sparse matrix in "i j value" coordinate text format.
void write_matrix_coo(const std::string& path, const SpMat& m);

}  // namespace fsstab
