#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fsstab/errors.hpp"
#include "fsstab/geometry.hpp"
#include "fsstab/spectral.hpp"
#include "fsstab/stabilization.hpp"

#include <Eigen/SVD>
#include <numbers>
#include <random>

using namespace fsstab;

namespace {
constexpr double kPi = std::numbers::pi;

struct Pipeline {
    GeometryConfig config;
    Mesh mesh;
    FunctionSpaces spaces;
    FormLibrary forms;
    RigidBodyData rigid;
    BlockSystem blocks;
    SpectralDecomposition spectrum;

    explicit Pipeline(double h, int count = 8) {
        config.container_radius = 1.0;
        config.solid_radius = 0.3;
        config.mesh_size = h;
        mesh = generate_mesh(config);
        spaces = build_spaces(mesh, kTagFluid);
        forms = assemble_forms(spaces, config.viscosity);
        rigid = solid_moments(mesh, config.solid_density, config.tol_geom());
        blocks = assemble_block_system(spaces, forms, rigid);
        spectrum = solve_eigs(blocks, count);
    }
};

Pipeline& pipeline() {
    static Pipeline p(0.15);
    return p;
}
}  // namespace

TEST_CASE("control basis: flux-free trigonometric family") {
    Pipeline& p = pipeline();
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);
    CHECK(basis.dimension == 6);
    for (int j = 0; j < 6; ++j)
        CHECK(std::abs(basis.fluxes[j]) <= 1e-10 * std::max(1.0, basis.modes.col(j).norm()));
    CHECK(basis.gram_condition <= 1e3);

    // the raw radial field carries the full circumference flux and is the
    // direction the correction removes
    Vector radial = Vector::Zero(p.spaces.num_velocity_dofs());
    for (int n : p.spaces.interface_nodes) {
        const Vec2 r = p.spaces.node_coords[n].normalized();
        radial[2 * n] = r.x();
        radial[2 * n + 1] = r.y();
    }
    CHECK(std::abs(p.forms.boundary_flux.dot(radial)) ==
          doctest::Approx(2.0 * kPi * 0.3).epsilon(0.03));

    // single spin mode works too
    const ControlBasis spin = build_control_basis(p.spaces, p.forms, 1);
    CHECK(std::abs(spin.fluxes[0]) <= 1e-10);

    CHECK_THROWS_AS(build_control_basis(p.spaces, p.forms, 0), ConfigError);
}

TEST_CASE("control injection: lambda linearity and steady-state consistency") {
    Pipeline& p = pipeline();
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 4);
    const double lambda = 1.5 * std::abs(p.spectrum.eigenvalues[0]);
    const ControlOperator op1 = assemble_B(basis, p.blocks, lambda);
    const ControlOperator op2 = assemble_B(basis, p.blocks, 2.0 * lambda);

    // doubling lambda changes only the lifting mass contribution
    const Eigen::MatrixXd diff = op2.force - op1.force - lambda * op1.lifting_mass;
    CHECK(diff.norm() <= 1e-12 * std::max(1.0, op1.force.norm()));

    // a zero mode injects nothing
    ControlBasis null_basis;
    null_basis.dimension = 1;
    null_basis.modes = Eigen::MatrixXd::Zero(p.spaces.num_velocity_dofs(), 1);
    null_basis.fluxes = Vector::Zero(1);
    StokesLifting lifting(p.spaces, p.forms);
    null_basis.liftings.push_back(lifting.lift(null_basis.modes.col(0)));
    const ControlOperator null_op = assemble_B(null_basis, p.blocks, lambda);
    CHECK(null_op.force.norm() == 0.0);
    CHECK(null_op.lifting_mass.norm() == 0.0);

    // two discrete paths to the steady state driven by constant zeta = xi_j
    Eigen::SparseLU<SpMat> steady(p.blocks.saddle(1.0, -lambda));
    REQUIRE(steady.info() == Eigen::Success);
    const int n = p.blocks.n_reduced;
    for (int j = 0; j < basis.dimension; ++j) {
        // path 1: direct solve with the interpolated boundary datum
        Vector rhs = Vector::Zero(steady.rows());
        const Vector xi = basis.modes.col(j);
        rhs.head(n) = p.blocks.coupling.transpose() *
                      (lambda * (p.forms.mass * xi) - p.forms.viscous * xi);
        rhs.segment(n, p.blocks.n_pressure) = -(p.forms.divergence * xi);
        const Vector x1 = steady.solve(rhs).head(n);
        const Vector u1 = p.blocks.expand(x1) + xi;

        // path 2: lifting-based injection column
        Vector rhs2 = Vector::Zero(steady.rows());
        rhs2.head(n) = op1.force.col(j);
        const Vector x2 = steady.solve(rhs2).head(n);
        const Vector u2 = p.blocks.expand(x2) + basis.liftings[j].velocity;

        const double scale = std::max(1.0, u1.norm());
        CHECK((u1 - u2).norm() <= 1e-8 * scale);
    }
}

TEST_CASE("Kalman rank: generic family controls, obstructed family does not") {
    Pipeline& p = pipeline();
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);

    // lambda bracketing four modes (including the degenerate translation pair)
    const double lambda =
        0.5 * (std::abs(p.spectrum.eigenvalues[3]) + std::abs(p.spectrum.eigenvalues[4]));
    const UnstableSubspace u = split_spectrum(p.spectrum, lambda);
    REQUIRE(u.dimension == 4);

    const ControlOperator op = assemble_B(basis, p.blocks, lambda);
    const Eigen::MatrixXd B = reduced_input_matrix(u, op);
    const RankReport report = project_and_check_controllability(u, B);
    CHECK(report.rank == u.dimension);
    CHECK(report.controllable);

    // N = 0 is trivially controllable
    UnstableSubspace empty = split_spectrum(p.spectrum, 0.5 * std::abs(p.spectrum.eigenvalues[0]));
    const RankReport trivial =
        project_and_check_controllability(empty, reduced_input_matrix(empty, op));
    CHECK(trivial.controllable);
    CHECK(trivial.rank == 0);

    // combinations orthogonal to every adjoint traction: B C = 0 by construction
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
    const int null_dim = static_cast<int>(B.cols() - svd.rank());
    REQUIRE(null_dim > 0);
    const Eigen::MatrixXd C = svd.matrixV().rightCols(null_dim);
    const Eigen::MatrixXd B_obstructed = B * C;
    const RankReport blocked = project_and_check_controllability(u, B_obstructed);
    CHECK(blocked.rank < u.dimension);
    CHECK(!blocked.controllable);
}

TEST_CASE("Riccati feedback: closed form, structure and pole placement") {
    Pipeline& p = pipeline();
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);

    // N = 1 (spin mode only): scalar Riccati closed form applies
    const double lambda1 = 1.5 * std::abs(p.spectrum.eigenvalues[0]);
    const UnstableSubspace u1 = split_spectrum(p.spectrum, lambda1);
    REQUIRE(u1.dimension == 1);
    const ControlOperator op1 = assemble_B(basis, p.blocks, lambda1);
    const FeedbackGain fb1 = solve_riccati(u1, op1);

    const Eigen::MatrixXd B1 = reduced_input_matrix(u1, op1);
    const double alpha = u1.eigenvalues[0];
    const double a = alpha + lambda1;
    const double beta2 = B1.row(0).squaredNorm();
    REQUIRE(a > 0.0);
    const double pi_exact = (a + std::sqrt(a * a + beta2)) / beta2;
    CHECK(fb1.riccati(0, 0) == doctest::Approx(pi_exact).epsilon(1e-10));
    CHECK(fb1.closed_loop_poles[0].real() ==
          doctest::Approx(alpha - beta2 * pi_exact).epsilon(1e-10));
    CHECK(fb1.closed_loop_poles[0].real() < -lambda1);
    CHECK(fb1.riccati_residual <= 1e-8);

    // N = 4 case
    const double lambda4 =
        0.5 * (std::abs(p.spectrum.eigenvalues[3]) + std::abs(p.spectrum.eigenvalues[4]));
    const UnstableSubspace u4 = split_spectrum(p.spectrum, lambda4);
    const ControlOperator op4 = assemble_B(basis, p.blocks, lambda4);
    const FeedbackGain fb4 = solve_riccati(u4, op4);
    CHECK(fb4.riccati_residual <= 1e-8);
    CHECK((fb4.riccati - fb4.riccati.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fb4.riccati);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * fb4.riccati.norm());
    for (int i = 0; i < fb4.closed_loop_poles.size(); ++i)
        CHECK(fb4.closed_loop_poles[i].real() < -lambda4);

    // feedback factors through P_u: states orthogonal to H_u map to zero
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss;
    Vector x = Vector::NullaryExpr(p.blocks.n_reduced,
                                   [&](Eigen::Index) { return gauss(rng); });
    const Vector x_stable = x - u4.project(x);
    const Vector zeta = fb4.evaluate(x_stable, Vector::Zero(6));
    CHECK(zeta.norm() <= 1e-10 * std::max(1.0, x.norm()) * fb4.gain.norm());

    // uncontrollable input: zero injection
    ControlOperator op_zero = op4;
    op_zero.force.setZero();
    op_zero.lifting_mass.setZero();
    CHECK_THROWS_AS(solve_riccati(u4, op_zero), RiccatiNoSolution);

    // N = 0: empty gain maps everything to zero
    UnstableSubspace u0 = split_spectrum(p.spectrum, 0.5 * std::abs(p.spectrum.eigenvalues[0]));
    const FeedbackGain fb0 = solve_riccati(u0, op4);
    CHECK(fb0.evaluate(x, Vector::Zero(6)).norm() == 0.0);
}

TEST_CASE("gain json export carries the full record") {
    Pipeline& p = pipeline();
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 3);
    const double lambda = 1.5 * std::abs(p.spectrum.eigenvalues[0]);
    const UnstableSubspace u = split_spectrum(p.spectrum, lambda);
    const FeedbackGain fb = solve_riccati(u, assemble_B(basis, p.blocks, lambda));
    write_gain_json("gain_test.json", fb);

    std::ifstream is("gain_test.json");
    REQUIRE(is.good());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    for (const char* key :
         {"lambda", "N", "m", "riccati_residual", "closed_loop_poles", "gain_matrix"})
        CHECK(text.find(key) != std::string::npos);
}
