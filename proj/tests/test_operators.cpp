#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsstab/discretization.hpp"
#include "fsstab/errors.hpp"
#include "fsstab/geometry.hpp"
#include "fsstab/operators.hpp"

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
    GeometryConfig config;
    Mesh mesh;
    FunctionSpaces spaces;
    FormLibrary forms;
    ScalarPoisson poisson;
    Setup(double h, double nu = 1.0)
        : config(disk_config(h)),
          mesh(generate_mesh(config)),
          spaces(build_spaces(mesh, kTagFluid)),
          forms((config.viscosity = nu, assemble_forms(spaces, nu))),
          poisson(spaces, forms) {}
};

// e1 . CN(e1) for concentric disks of radii a < b (harmonic series oracle,
// q = (Ar + B/r) cos theta with A = a^2/(a^2-b^2), B = a^2 b^2/(a^2-b^2)).
double added_mass_exact(double a, double b) {
    return kPi * a * a * (a * a + b * b) / (b * b - a * a);
}

Vector random_vector(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    return Vector::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); });
}
}  // namespace

TEST_CASE("Neumann solve reproduces the harmonic-series added mass") {
    Setup s(0.05);
    const NeumannSolution n1 = solve_neumann(s.poisson, s.forms, Vec3(1, 0, 0));
    CHECK(n1.laplace_residual <= 1e-10);
    // zero mean
    CHECK(std::abs(s.forms.scalar_integral.dot(n1.potential)) < 1e-10);

    const double exact = added_mass_exact(0.3, 1.0);
    CHECK(exact == doctest::Approx(0.3387).epsilon(2e-4));
    CHECK(n1.gradient_flux.x() == doctest::Approx(exact).epsilon(0.02));

    // rotation datum: (omega ^ y) . n = 0 on centered circles, so q_hat ~ 0
    const NeumannSolution nh = solve_neumann(s.poisson, s.forms, Vec3(0, 0, 1));
    CHECK(nh.gradient_flux.norm() < 1e-3);

    // zero datum -> zero potential
    const NeumannSolution n0 = solve_neumann(s.poisson, s.forms, Vec3::Zero());
    CHECK(n0.potential.norm() < 1e-12);
}

TEST_CASE("Stokes lifting honors trace, incompressibility and flux gate") {
    Setup s(0.1);

    // rigid datum h' + omega ^ y is the lifting L0(h') + L0_hat(omega)
    const Vector rigid = s.forms.rigid_modes * Vec3(0.7, -0.2, 0.4);
    StokesLifting lifting(s.spaces, s.forms);
    const LiftedField lf = lifting.lift(rigid);
    for (int n : s.spaces.interface_nodes)
        for (int c = 0; c < 2; ++c)
            CHECK(lf.velocity[2 * n + c] == doctest::Approx(rigid[2 * n + c]).epsilon(1e-12));
    for (int n : s.spaces.outer_nodes)
        for (int c = 0; c < 2; ++c) CHECK(lf.velocity[2 * n + c] == 0.0);
    CHECK(lf.divergence_residual < 1e-10);

    // tangential mode tau cos(2 theta): flux-free, solve succeeds
    const Vector tang = interpolate_velocity(s.spaces, [](const Vec2& y) {
        const double th = std::atan2(y.y(), y.x());
        const double r = y.norm();
        return Vec2(-y.y() / r, y.x() / r) * std::cos(2.0 * th);
    });
    Vector tang_iface = Vector::Zero(tang.size());
    for (int n : s.spaces.interface_nodes)
        for (int c = 0; c < 2; ++c) tang_iface[2 * n + c] = tang[2 * n + c];
    CHECK_NOTHROW(lifting.lift(tang_iface));

    // normal datum n has net flux 2 pi a -> rejected
    const Vector nrm = interpolate_velocity(s.spaces, [](const Vec2& y) {
        const double r = y.norm();
        return Vec2(-y.x() / r, -y.y() / r);
    });
    CHECK_THROWS_AS(lifting.lift(nrm), FluxViolation);
}

TEST_CASE("Leray projection is an M-orthogonal idempotent projector") {
    Setup s(0.1);
    LerayProjector leray(s.spaces, s.forms);
    std::mt19937_64 rng(3);

    const Vector v = random_vector(s.spaces.num_velocity_dofs(), rng);
    const Vector pv = leray.project(v);
    const Vector ppv = leray.project(pv);
    CHECK((ppv - pv).norm() <= 1e-10 * std::max(1.0, pv.norm()));

    // orthogonality in the L2 inner product
    const Vector residual = v - pv;
    CHECK(std::abs(pv.dot(s.forms.mass * residual)) <= 1e-10 * v.squaredNorm());

    // projected field is weakly divergence free: orthogonal to all scalar gradients
    const Vector gv = s.forms.grad_coupling.transpose() * pv;
    CHECK(gv.norm() <= 1e-9 * std::max(1.0, pv.norm()));

    // the L2 representative of a Neumann gradient projects to ~0
    const NeumannSolution n1 = solve_neumann(s.poisson, s.forms, Vec3(1, 0, 0));
    Eigen::SimplicialLDLT<SpMat> mass_solver(s.forms.mass);
    const Vector grad_rep = mass_solver.solve(s.forms.grad_coupling * n1.potential);
    CHECK(leray.project(grad_rep).norm() <= 1e-9 * grad_rep.norm());

    // fields already divergence-free are fixed points
    CHECK((leray.project(pv) - pv).norm() <= 1e-10 * pv.norm());
}

TEST_CASE("block system invariants") {
    Setup s(0.1);
    const RigidBodyData rigid = solid_moments(s.mesh, 1.0, s.config.tol_geom());
    const BlockSystem bs = assemble_block_system(s.spaces, s.forms, rigid);

    // exact symmetry of the added mass
    CHECK((bs.added_mass - bs.added_mass.transpose()).norm() == 0.0);
    // positive semidefinite
    Eigen::SelfAdjointEigenSolver<Mat3> es(bs.added_mass);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * bs.added_mass.norm());

    // Galerkin block agrees with the boundary-integral C/C_hat images
    CHECK((bs.added_mass - bs.added_mass_boundary).norm() <=
          1e-8 * std::max(1.0, bs.added_mass.norm()));

    // (C_hat N)^T = C N_hat on the boundary-integral route itself
    CHECK((bs.added_mass_boundary - bs.added_mass_boundary.transpose()).norm() <=
          1e-8 * std::max(1.0, bs.added_mass_boundary.norm()));

    // concentric disks: rotation row/column vanish
    CHECK(std::abs(bs.added_mass(2, 2)) < 1e-3);
    CHECK(std::abs(bs.added_mass(0, 2)) < 1e-3);
    CHECK(std::abs(bs.added_mass(0, 1)) < 1e-3);

    // quadratic form identity against a combined Neumann solve
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 hw(gauss(rng), gauss(rng), gauss(rng));
        const NeumannSolution sol = solve_neumann(s.poisson, s.forms, hw);
        const double grad_energy = sol.potential.dot(s.forms.scalar_stiff * sol.potential);
        const double quad = hw.dot(bs.added_mass * hw);
        CHECK(quad == doctest::Approx(grad_energy).epsilon(1e-8));
    }

    // lambda M - A symmetric on the constrained subspace (it is symmetric outright)
    DivFreeProjector proj(bs);
    const double lambda = 0.8;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x1 = proj.project(random_vector(bs.n_reduced, rng));
        const Vector x2 = proj.project(random_vector(bs.n_reduced, rng));
        const Vector op_x1 = lambda * (bs.mass * x1) + bs.viscous * x1;
        const Vector op_x2 = lambda * (bs.mass * x2) + bs.viscous * x2;
        const double lhs = x2.dot(op_x1), rhs = x1.dot(op_x2);
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(std::abs(lhs), 1.0));
        // dissipativity of A: <A x, x> = -2 nu |D(u)|^2 <= 0
        CHECK(x1.dot(bs.viscous * x1) >= 0.0);
    }

    // divergence-free projection really lands on the constraint manifold
    const Vector x = proj.project(random_vector(bs.n_reduced, rng));
    CHECK((bs.constraint * x).norm() <= 1e-9 * std::max(1.0, x.norm()));
}

TEST_CASE("gradient part of a steady coupled solve is slaved to the liftings") {
    // steady solve of the coupled system with a body force, then compare
    // (I-P)u with (I-P)(L0 h' + L0_hat omega) at the resulting rigid velocity
    Setup s(0.1);
    const RigidBodyData rigid = solid_moments(s.mesh, 1.0, s.config.tol_geom());
    const BlockSystem bs = assemble_block_system(s.spaces, s.forms, rigid);

    // random forcing, solve (A + M) x = f on the constraint manifold
    std::mt19937_64 rng(23);
    Eigen::SparseLU<SpMat> lu(bs.saddle(1.0, 1.0));
    REQUIRE(lu.info() == Eigen::Success);
    Vector rhs = Vector::Zero(lu.rows());
    rhs.head(bs.n_reduced) = bs.mass * random_vector(bs.n_reduced, rng);
    const Vector x = lu.solve(rhs).head(bs.n_reduced);

    const Vector u = bs.expand(x);
    const Vec3 hw = bs.rigid_part(x);

    StokesLifting lifting(s.spaces, s.forms);
    const LiftedField lf = lifting.lift(s.forms.rigid_modes * hw);

    LerayProjector leray(s.spaces, s.forms);
    const Vector gap = leray.gradient_part(u) - leray.gradient_part(lf.velocity);
    const double unorm = std::sqrt(u.dot(s.forms.mass * u));
    CHECK(std::sqrt(gap.dot(s.forms.mass * gap)) <= 10.0 * 0.1 * 0.1 * unorm);
}
