#include "fsstab/fem.hpp"

namespace fsstab::fem {

const TriQuadrature& tri_rule_deg5() {
    // Dunavant degree-5 rule (7 points).
    static const TriQuadrature rule = [] {
        TriQuadrature r{};
        r.npts = 7;
        const double a1 = 0.0597158717897698, b1 = 0.4701420641051151;
        const double a2 = 0.7974269853530873, b2 = 0.1012865073234563;
        const double w0 = 0.225;
        const double w1 = 0.1323941527885062;
        const double w2 = 0.1259391805448271;
        r.bary[0] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        r.weight[0] = w0;
        r.bary[1] = {a1, b1, b1};
        r.bary[2] = {b1, a1, b1};
        r.bary[3] = {b1, b1, a1};
        r.weight[1] = r.weight[2] = r.weight[3] = w1;
        r.bary[4] = {a2, b2, b2};
        r.bary[5] = {b2, a2, b2};
        r.bary[6] = {b2, b2, a2};
        r.weight[4] = r.weight[5] = r.weight[6] = w2;
        return r;
    }();
    return rule;
}

const EdgeQuadrature& edge_rule_deg5() {
    static const EdgeQuadrature rule = [] {
        EdgeQuadrature r{};
        r.npts = 3;
        const double c = std::sqrt(3.0 / 5.0) / 2.0;
        r.s = {0.5 - c, 0.5, 0.5 + c};
        r.weight = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        return r;
    }();
    return rule;
}

double p2_shape(int i, const double b[3]) {
    switch (i) {
        case 0: return b[0] * (2.0 * b[0] - 1.0);
        case 1: return b[1] * (2.0 * b[1] - 1.0);
        case 2: return b[2] * (2.0 * b[2] - 1.0);
        case 3: return 4.0 * b[0] * b[1];
        case 4: return 4.0 * b[1] * b[2];
        case 5: return 4.0 * b[2] * b[0];
    }
    return 0.0;
}

Vec2 p2_grad_ref(int i, const double b[3]) {
    // d b0 = (-1,-1), d b1 = (1,0), d b2 = (0,1)
    const Vec2 g0(-1.0, -1.0), g1(1.0, 0.0), g2(0.0, 1.0);
    switch (i) {
        case 0: return (4.0 * b[0] - 1.0) * g0;
        case 1: return (4.0 * b[1] - 1.0) * g1;
        case 2: return (4.0 * b[2] - 1.0) * g2;
        case 3: return 4.0 * (b[1] * g0 + b[0] * g1);
        case 4: return 4.0 * (b[2] * g1 + b[1] * g2);
        case 5: return 4.0 * (b[0] * g2 + b[2] * g0);
    }
    return Vec2::Zero();
}

Vec2 p1_grad_ref(int i) {
    switch (i) {
        case 0: return Vec2(-1.0, -1.0);
        case 1: return Vec2(1.0, 0.0);
        case 2: return Vec2(0.0, 1.0);
    }
    return Vec2::Zero();
}

TriGeometry::TriGeometry(const Vec2& a, const Vec2& b, const Vec2& c) : v0(a) {
    jac.col(0) = b - a;
    jac.col(1) = c - a;
    const double det = jac.determinant();
    area = 0.5 * det;
    Eigen::Matrix2d inv;
    inv << jac(1, 1), -jac(0, 1), -jac(1, 0), jac(0, 0);
    inv /= det;
    jac_inv_t = inv.transpose();
}

Vec2 TriGeometry::point(const double bary[3]) const {
    return v0 + jac * Vec2(bary[1], bary[2]);
}

double p2_edge_shape(int i, double s) {
    // i = 0,1 endpoints, i = 2 midpoint
    switch (i) {
        case 0: return (1.0 - s) * (1.0 - 2.0 * s);
        case 1: return s * (2.0 * s - 1.0);
        case 2: return 4.0 * s * (1.0 - s);
    }
    return 0.0;
}

}  // namespace fsstab::fem
