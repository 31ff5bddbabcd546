#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsstab/discretization.hpp"
#include "fsstab/errors.hpp"
#include "fsstab/geometry.hpp"

#include <fstream>
#include <numbers>
#include <random>

using namespace fsstab;

namespace {
constexpr double kPi = std::numbers::pi;

GeometryConfig disk_config(double h) {
    GeometryConfig g;
    g.container_radius = 1.0;
    g.solid_radius = 0.3;
    g.mesh_size = h;
    return g;
}

struct Setup {
    Mesh mesh;
    FunctionSpaces spaces;
    FormLibrary forms;
    Setup(double h, double nu = 1.0)
        : mesh(generate_mesh(disk_config(h))),
          spaces(build_spaces(mesh, kTagFluid)),
          forms(assemble_forms(spaces, nu)) {}
};

double sym_error(const SpMat& m) {
    SpMat d = SpMat(m.transpose()) - m;
    double err = 0.0;
    for (int oc = 0; oc < d.outerSize(); ++oc)
        for (SpMat::InnerIterator it(d, oc); it; ++it)
            err = std::max(err, std::abs(it.value()));
    return err;
}
}  // namespace

TEST_CASE("spaces carry consistent dof structure") {
    Setup s(0.15);
    CHECK(s.spaces.num_pressure_nodes > 0);
    CHECK(s.spaces.num_velocity_dofs() == 2 * s.spaces.num_nodes());
    // every interface velocity node is disjoint from the outer list
    for (int n : s.spaces.interface_nodes) CHECK(!s.spaces.node_on_outer[n]);

    // dof counts scale roughly 4x per refinement
    Setup fine(0.075);
    const double ratio = static_cast<double>(fine.spaces.num_velocity_dofs()) /
                         s.spaces.num_velocity_dofs();
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.0);
}

TEST_CASE("inf-sup estimate is bounded away from zero") {
    Setup s(0.2);
    CHECK(s.spaces.infsup_estimate > 0.1);
    // and stays stable under refinement
    Setup fine(0.1);
    CHECK(fine.spaces.infsup_estimate > 0.1);
    CHECK(std::abs(fine.spaces.infsup_estimate - s.spaces.infsup_estimate) < 0.2);
}

TEST_CASE("mass and viscous forms are symmetric, viscous is PSD") {
    Setup s(0.15);
    CHECK(sym_error(s.forms.mass) < 1e-14);
    CHECK(sym_error(s.forms.viscous) < 1e-14);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    for (int k = 0; k < 10; ++k) {
        Vector v = Vector::NullaryExpr(s.spaces.num_velocity_dofs(),
                                       [&](Eigen::Index) { return gauss(rng); });
        CHECK(v.dot(s.forms.viscous * v) >= 0.0);
        CHECK(v.dot(s.forms.mass * v) > 0.0);
    }
}

TEST_CASE("rigid motions lie in the kernel of the viscous form") {
    Setup s(0.15, 0.7);
    const Vector ones = interpolate_velocity(s.spaces, [](const Vec2&) { return Vec2(1.0, 0.4); });
    const Vector rot = interpolate_velocity(s.spaces, [](const Vec2& y) { return Vec2(-y.y(), y.x()); });
    const double scale = s.forms.viscous.coeff(0, 0);
    CHECK((s.forms.viscous * ones).norm() < 1e-12 * scale * ones.size());
    CHECK((s.forms.viscous * rot).norm() < 1e-11 * scale * rot.size());
    // ... and the rigid field is pointwise divergence free against the pressure space
    CHECK((s.forms.divergence * rot).norm() < 1e-12 * rot.size());
}

TEST_CASE("interface flux of the unit normal equals the circumference") {
    Setup s(0.05);
    // datum = n (pointing out of the fluid, i.e. -e_r on the interface)
    const Vector vn = interpolate_velocity(s.spaces, [](const Vec2& y) {
        const double r = y.norm();
        return Vec2(-y.x() / r, -y.y() / r);
    });
    const double flux = s.forms.boundary_flux.dot(vn);
    CHECK(flux == doctest::Approx(2.0 * kPi * 0.3).epsilon(2e-3));

    // rigid fields carry zero net flux through the closed interface
    for (int k = 0; k < 3; ++k)
        CHECK(std::abs(s.forms.boundary_flux.dot(s.forms.rigid_modes.col(k))) < 1e-12);
}

TEST_CASE("discrete Korn identity on fields vanishing on the boundary") {
    // 2|D(v)|^2 = |grad v|^2 + (div v)^2 + exact divergence term; for discrete
    // fields vanishing on the whole boundary the divergence term integrates
    // to zero, leaving |grad v|^2 <= 2|D(v)|^2.
    Setup s(0.15);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 20; ++trial) {
        Vector v = Vector::NullaryExpr(s.spaces.num_velocity_dofs(),
                                       [&](Eigen::Index) { return gauss(rng); });
        for (int n = 0; n < s.spaces.num_nodes(); ++n)
            if (s.spaces.node_on_outer[n] || s.spaces.node_on_interface[n])
                v[2 * n] = v[2 * n + 1] = 0.0;
        const double grad2 = v.dot(s.forms.gradgrad * v);
        const double dd2 = v.dot(s.forms.viscous * v);  // nu = 1: 2 int |D|^2
        const double div2 = v.dot(s.forms.divdiv * v);
        CHECK(grad2 <= dd2 * (1.0 + 1e-12));
        // the sharper identity: 2|D|^2 = |grad|^2 + |div|^2
        CHECK(dd2 == doctest::Approx(grad2 + div2).epsilon(1e-12));
    }
}

TEST_CASE("viscous form is positive definite after outer Dirichlet elimination") {
    // Korn + Poincare: a field vanishing on the container boundary with
    // D(v) = 0 would be rigid, and rigid fields vanishing there are zero
    Setup s(0.15);
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 10; ++trial) {
        Vector v = Vector::NullaryExpr(s.spaces.num_velocity_dofs(),
                                       [&](Eigen::Index) { return gauss(rng); });
        for (int n : s.spaces.outer_nodes) v[2 * n] = v[2 * n + 1] = 0.0;
        const double energy = v.dot(s.forms.viscous * v);
        CHECK(energy > 1e-8 * v.squaredNorm());
    }
    // ... and the rigid field itself, which does not vanish there, has none
    const Vector rot = interpolate_velocity(s.spaces, [](const Vec2& y) { return Vec2(-y.y(), y.x()); });
    CHECK(rot.dot(s.forms.viscous * rot) < 1e-10);
}

TEST_CASE("coordinate-format matrix dump") {
    Setup s(0.25);
    write_matrix_coo("mass_dump.txt", s.forms.pressure_mass);
    std::ifstream is("mass_dump.txt");
    REQUIRE(is.good());
    int i, j;
    double v;
    size_t rows = 0;
    double sum = 0.0;
    while (is >> i >> j >> v) {
        ++rows;
        sum += v;
    }
    CHECK(rows == static_cast<size_t>(s.forms.pressure_mass.nonZeros()));
    // entries of the P1 mass matrix sum to the fluid area
    CHECK(sum == doctest::Approx(s.mesh.region_area(kTagFluid)).epsilon(1e-12));
}

TEST_CASE("solid-region spaces expose the interface as their boundary") {
    Mesh mesh = generate_mesh(disk_config(0.15));
    FunctionSpaces solid = build_spaces(mesh, kTagSolid);
    CHECK(solid.outer_nodes.empty());
    CHECK(!solid.interface_nodes.empty());
    FormLibrary forms = assemble_forms(solid, 1.0);
    CHECK(sym_error(forms.scalar_stiff) < 1e-14);
    // solid area from the P1 integral row
    CHECK(forms.pressure_integral.sum() == doctest::Approx(kPi * 0.09).epsilon(0.01));
}
