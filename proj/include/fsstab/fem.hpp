#pragma once

#include <Eigen/Dense>
#include <array>

namespace fsstab::fem {

using Vec2 = Eigen::Vector2d;

// Triangle quadrature rule in barycentric coordinates, weights sum to 1.
struct TriQuadrature {
    int npts;
    std::array<std::array<double, 3>, 7> bary;
    std::array<double, 7> weight;
};

// 7-point rule, exact through polynomial degree 5.
const TriQuadrature& tri_rule_deg5();

// Gauss-Legendre points/weights on [0,1], 3 points (degree 5).
struct EdgeQuadrature {
    int npts;
    std::array<double, 3> s;
    std::array<double, 3> weight;
};
const EdgeQuadrature& edge_rule_deg5();

// Quadratic Lagrange basis on the reference triangle.
// Local node order: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0).
double p2_shape(int i, const double b[3]);
// Gradient w.r.t. barycentric coordinates b1, b2 (with b0 = 1 - b1 - b2 eliminated),
// i.e. derivatives on the reference triangle with vertices (0,0),(1,0),(0,1).
Vec2 p2_grad_ref(int i, const double b[3]);

// Linear basis: value is just the barycentric coordinate.
inline double p1_shape(int i, const double b[3]) { return b[i]; }
Vec2 p1_grad_ref(int i);

// Affine map data for a straight triangle (v0,v1,v2).
struct TriGeometry {
    Eigen::Matrix2d jac;      // [v1-v0, v2-v0]
    Eigen::Matrix2d jac_inv_t;
    double area;              // signed
    Vec2 v0;

    TriGeometry(const Vec2& a, const Vec2& b, const Vec2& c);
    Vec2 point(const double bary[3]) const;  // physical coordinates
};

// Trace of the P2 basis along one edge: 1D quadratic in s in [0,1]
// with nodes at s=0, s=1, s=1/2.
double p2_edge_shape(int i, double s);

}  // namespace fsstab::fem
