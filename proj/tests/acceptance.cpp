// End-to-end acceptance suite: one criterion per function, one pass/fail line
// each, nonzero exit when anything fails. Heavier pipelines are shared.
#include "fsstab/config.hpp"
#include "fsstab/deformation.hpp"
#include "fsstab/errors.hpp"
#include "fsstab/experiment.hpp"
#include "fsstab/simulation.hpp"
#include "fsstab/spectral.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <string>

using namespace fsstab;

namespace {

constexpr double kPi = std::numbers::pi;
const double kAddedMassExact = kPi * 0.09 * (0.09 + 1.0) / (1.0 - 0.09);

int g_failures = 0;

void report(const std::string& criterion, bool pass, const std::string& what) {
    std::printf("[%s] criterion %s: %s\n", pass ? "PASS" : "FAIL", criterion.c_str(),
                what.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), pattern, args...);
    return std::string(buf);
}

struct Pipeline {
    GeometryConfig config;
    Mesh mesh;
    FunctionSpaces spaces;
    FormLibrary forms;
    RigidBodyData rigid;
    BlockSystem blocks;

    explicit Pipeline(double h) {
        config.container_radius = 1.0;
        config.solid_radius = 0.3;
        config.solid_density = 1.0;
        config.viscosity = 1.0;
        config.mesh_size = h;
        mesh = generate_mesh(config);
        spaces = build_spaces(mesh, kTagFluid);
        forms = assemble_forms(spaces, config.viscosity);
        rigid = solid_moments(mesh, config.solid_density, config.tol_geom());
        blocks = assemble_block_system(spaces, forms, rigid);
    }
};

Pipeline& pipeline(double h) {
    static std::map<double, std::unique_ptr<Pipeline>> cache;
    auto& slot = cache[h];
    if (!slot) slot = std::make_unique<Pipeline>(h);
    return *slot;
}

double added_mass_boundary_route(Pipeline& p) {
    ScalarPoisson poisson(p.spaces, p.forms);
    return solve_neumann(poisson, p.forms, Vec3(1, 0, 0)).gradient_flux.x();
}

// shared spectral data on the reference mesh
struct MainSpectrum {
    SpectralDecomposition spectrum;
    double lambda;
};
MainSpectrum& main_spectrum() {
    static std::unique_ptr<MainSpectrum> cache;
    if (!cache) {
        cache = std::make_unique<MainSpectrum>();
        cache->spectrum = solve_eigs(pipeline(0.05).blocks, 12);
        cache->lambda = 1.5 * std::abs(cache->spectrum.eigenvalues[0]);
    }
    return *cache;
}

// ---------------------------------------------------------------------------

void criterion_1_added_mass_oracle() {
    const double coarse = added_mass_boundary_route(pipeline(0.05));
    const double fine = added_mass_boundary_route(pipeline(0.025));
    const double rel_coarse = std::abs(coarse - kAddedMassExact) / kAddedMassExact;
    const double rel_fine = std::abs(fine - kAddedMassExact) / kAddedMassExact;
    report("1", rel_coarse <= 0.02 && rel_fine <= 0.005,
           fmt("added-mass harmonic oracle %.4f: rel err %.2e (h=0.05, tol 2e-2), %.2e "
               "(h=0.025, tol 5e-3)",
               kAddedMassExact, rel_coarse, rel_fine));
}

void criterion_2_mass_structure() {
    Pipeline& p = pipeline(0.05);
    const double sym = (p.blocks.added_mass - p.blocks.added_mass.transpose()).norm();
    Eigen::SelfAdjointEigenSolver<Mat3> es(p.blocks.added_mass);
    const double min_eig = es.eigenvalues().minCoeff();

    ScalarPoisson poisson(p.spaces, p.forms);
    std::mt19937_64 rng(101);
    std::normal_distribution<double> gauss;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Vec3 hw(gauss(rng), gauss(rng), gauss(rng));
        const NeumannSolution sol = solve_neumann(poisson, p.forms, hw);
        const double energy = sol.potential.dot(p.forms.scalar_stiff * sol.potential);
        const double quad = hw.dot(p.blocks.added_mass * hw);
        worst = std::max(worst, std::abs(energy - quad) / std::max(energy, 1e-30));
    }
    const bool pass = sym == 0.0 && min_eig >= -1e-10 * p.blocks.added_mass.norm() &&
                      worst <= 1e-8;
    report("2", pass,
           fmt("M_add symmetry %.1e (exact), min eig %.2e (>= -1e-10), quadratic identity "
               "rel %.2e (tol 1e-8, 100 draws)",
               sym, min_eig, worst));
}

void criterion_3_self_adjointness() {
    Pipeline& p = pipeline(0.05);
    const double lambda = main_spectrum().lambda;
    DivFreeProjector proj(p.blocks);
    std::mt19937_64 rng(102);
    std::normal_distribution<double> gauss;
    auto randv = [&] {
        return Vector(Vector::NullaryExpr(p.blocks.n_reduced,
                                          [&](Eigen::Index) { return gauss(rng); }));
    };
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Vector x1 = proj.project(randv());
        const Vector x2 = proj.project(randv());
        const Vector op1 = lambda * (p.blocks.mass * x1) + p.blocks.viscous * x1;
        const Vector op2 = lambda * (p.blocks.mass * x2) + p.blocks.viscous * x2;
        const double a = x2.dot(op1), b = x1.dot(op2);
        worst = std::max(worst,
                         std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30}));
    }
    report("3", worst <= 1e-9,
           fmt("(lambda M - A) adjoint pairing residual %.2e on 100 coupled pairs (tol 1e-9)",
               worst));
}

void criterion_4_spectrum() {
    const SpectralDecomposition& sd = main_spectrum().spectrum;
    bool negative = true, resid_ok = true;
    for (int i = 0; i < 10; ++i) {
        negative = negative && sd.eigenvalues[i] < 0.0;
        resid_ok = resid_ok && sd.residuals[i] <= 1e-8;
    }
    // the Lanczos pencil is real symmetric: imaginary parts vanish identically;
    // the dense brute-force oracle on the coarse mesh cross-checks realness
    Pipeline& coarse = pipeline(0.2);
    const SpectralDecomposition sd_coarse = solve_eigs(coarse.blocks, 10);
    const auto dense = oracles::dense_coupled_spectrum(coarse.blocks, 10);
    double match = 0.0, imag_max = 0.0;
    for (int i = 0; i < 10; ++i) {
        imag_max = std::max(imag_max, std::abs(dense[i].imag()));
        match = std::max(match, std::abs(sd_coarse.eigenvalues[i] - dense[i].real()) /
                                    std::abs(dense[i].real()));
    }
    const bool pass = negative && resid_ok && match <= 1e-6 && imag_max <= 1e-10;
    report("4", pass,
           fmt("10 leading eigenvalues: real (|Im| = 0 by construction, dense oracle "
               "|Im| %.1e), negative %d, residual max %.1e (tol 1e-8), dense match %.2e "
               "(tol 1e-6)",
               imag_max, negative ? 1 : 0, sd.residuals.head(10).maxCoeff(), match));
}

void criterion_5_controllability() {
    Pipeline& p = pipeline(0.05);
    const double lambda = main_spectrum().lambda;
    const UnstableSubspace u = split_spectrum(main_spectrum().spectrum, lambda);
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);
    const ControlOperator op = assemble_B(basis, p.blocks, lambda);
    const Eigen::MatrixXd B = reduced_input_matrix(u, op);
    const RankReport rank = project_and_check_controllability(u, B);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
    const int null_dim = static_cast<int>(B.cols() - svd.rank());
    const Eigen::MatrixXd obstructed = B * svd.matrixV().rightCols(null_dim);
    const RankReport blocked = project_and_check_controllability(u, obstructed);

    const bool pass = rank.controllable && rank.rank == u.dimension && null_dim > 0 &&
                      blocked.rank < u.dimension;
    report("5", pass,
           fmt("Kalman rank %d == N = %d with 6 modes at lambda = 1.5|mu1| = %.3f; "
               "traction-orthogonal modes give rank %d < N",
               rank.rank, u.dimension, lambda, blocked.rank));
}

void criterion_6_feedback_decay() {
    Pipeline& p = pipeline(0.05);
    const MainSpectrum& ms = main_spectrum();
    const double lambda = ms.lambda;
    const double mu1 = std::abs(ms.spectrum.eigenvalues[0]);

    const UnstableSubspace u = split_spectrum(ms.spectrum, lambda);
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);
    const FeedbackGain gain = solve_riccati(u, assemble_B(basis, p.blocks, lambda));
    double pole_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < gain.closed_loop_poles.size(); ++i)
        pole_max = std::max(pole_max, gain.closed_loop_poles[i].real());

    const double dt = std::min(1e-2, 0.1 / lambda);
    Simulator sim(p.blocks, &basis, 0.0, dt);
    const CoupledState init =
        sim.make_state(random_compatible_state(p.blocks, 4242), Vector::Zero(6), 0.0);
    const Trajectory closed = sim.run(init, 8.0 / lambda, ClosedLoop{&gain});
    const double closed_rate = measure_decay(closed, 2.0 / lambda, 8.0 / lambda);

    const CoupledState eigen_init =
        sim.make_state(ms.spectrum.vectors.col(0), Vector::Zero(6), 0.0);
    const Trajectory open = sim.run(eigen_init, 8.0 / lambda, OpenLoop{});
    const double open_rate = measure_decay(open, 2.0 / lambda, 8.0 / lambda);

    const bool pass = gain.riccati_residual <= 1e-8 && pole_max < -lambda &&
                      closed_rate >= lambda * 0.95 &&
                      std::abs(open_rate - mu1) <= 0.03 * mu1 && mu1 < lambda;
    report("6", pass,
           fmt("Riccati residual %.1e (tol 1e-8); poles max Re %.3f < -lambda = %.3f; "
               "closed-loop rate %.3f >= 0.95 lambda = %.3f; open-loop rate %.3f vs |mu1| "
               "%.3f (3%%)",
               gain.riccati_residual, pole_max, -lambda, closed_rate, 0.95 * lambda,
               open_rate, mu1));

    // same pipeline exercised end to end through the bundled experiment config
    ExperimentConfig cfg = load_config(FSSTAB_DEFAULT_CONFIG);
    cfg.output_directory = (std::filesystem::temp_directory_path() / "fsstab_acceptance_run")
                               .string();
    const ExperimentSummary summary = run_experiment(cfg);
    report("6 (bundled config)",
           summary.measured_rate >= summary.lambda * 0.95 && summary.controllable,
           fmt("default experiment: measured rate %.3f >= 0.95 lambda = %.3f, rank %d of %d",
               summary.measured_rate, 0.95 * summary.lambda, summary.kalman_rank,
               summary.unstable_dimension));
}

void criterion_7_energy_identity() {
    Pipeline& p = pipeline(0.05);
    const Vector x0 = random_compatible_state(p.blocks, 77);

    // The midpoint step satisfies dE = -2 nu int |D(u_mid)|^2 dt exactly, so
    // the defect against the true dissipation integral equals the energy gap
    // to a finely substepped reference trajectory.
    auto defect = [&](double dt) {
        Simulator big(p.blocks, nullptr, 0.0, dt);
        const double e_big = big.energy(big.step_reduced(x0, Vector(), Vector()), Vector());
        const int sub = 128;
        Simulator fine(p.blocks, nullptr, 0.0, dt / sub);
        Vector x = x0;
        for (int k = 0; k < sub; ++k) x = fine.step_reduced(x, Vector(), Vector());
        return std::abs(e_big - fine.energy(x, Vector()));
    };
    // keep |mu| dt << 1: outside the asymptotic range the exp(-2 mu dt)
    // attenuation between the two dt levels biases the observed ratio
    const double d1 = defect(0.002);
    const double d2 = defect(0.001);
    const double order = std::log2(d1 / d2);
    report("7", order >= 2.5 && order <= 3.5,
           fmt("per-step energy defect |dE + 2nu int |D|^2 dt|: %.3e (dt=0.002) vs %.3e "
               "(dt=0.001), observed local order %.2f in [2.5, 3.5]",
               d1, d2, order));
}

void criterion_8_deformation() {
    Pipeline& p = pipeline(0.05);
    SolidMechanics solid(p.mesh, p.rigid);
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 6);
    const double tol_constraint = 10.0 * 0.05 * 0.05;

    bool converged = true;
    double worst_constraint = 0.0, worst_agreement = 0.0;
    std::vector<Vector> solutions;
    double mu_used = solid.mu_min();
    for (int j = 0; j < 6; ++j) {
        const Vector zeta =
            transfer_interface_values(p.spaces, solid.spaces(), basis.modes.col(j));
        SolidVelocityField field;
        try {
            field = solid.solve_auto(zeta);
        } catch (const FixedPointDivergence&) {
            converged = false;
            continue;
        }
        mu_used = field.mu;
        const ConstraintReport rep = solid.check_admissibility(field.phi);
        worst_constraint =
            std::max({worst_constraint, rep.flux_rel, rep.linear_rel, rep.angular_rel});
        const SolidVelocityField direct = solid.solve_lame_bordered(zeta, field.mu);
        worst_agreement =
            std::max(worst_agreement,
                     (field.phi - direct.phi).norm() / std::max(1.0, field.phi.norm()));
        solutions.push_back(field.phi);
    }

    double superposition = 0.0;
    if (solutions.size() >= 2) {
        // superposition compares solves at one fixed mu
        auto at_mu = [&](const Vector& modes_col) {
            return solid
                .solve_lame_fixed_point(
                    transfer_interface_values(p.spaces, solid.spaces(), modes_col), mu_used)
                .phi;
        };
        const Vector both = at_mu(basis.modes.col(0) + basis.modes.col(1));
        superposition = (both - at_mu(basis.modes.col(0)) - at_mu(basis.modes.col(1))).norm() /
                        std::max(1.0, both.norm());
    }

    const bool pass = converged && worst_agreement <= 1e-8 &&
                      worst_constraint <= tol_constraint && superposition <= 1e-9;
    report("8", pass,
           fmt("6 control modes: fixed point converged %d; bordered-oracle gap %.1e (tol "
               "1e-8); constraint residual max %.1e (tol %.1e); superposition %.1e (tol 1e-9)",
               converged ? 1 : 0, worst_agreement, worst_constraint, tol_constraint,
               superposition));
}

void criterion_9_shift_equivalence() {
    Pipeline& p = pipeline(0.1);
    const SpectralDecomposition sd = solve_eigs(p.blocks, 4);
    const double lambda = 1.5 * std::abs(sd.eigenvalues[0]);
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, 3);

    Vector x0 = sd.vectors.col(0) + 0.6 * sd.vectors.col(1);
    x0 /= std::sqrt(x0.dot(p.blocks.mass * x0));

    const double horizon = 4.0 / lambda;
    const int steps = 12000;
    const double dt = horizon / steps;
    Simulator plain(p.blocks, &basis, 0.0, dt);
    Simulator shifted(p.blocks, &basis, lambda, dt);
    const CoupledState init = plain.make_state(x0, Vector::Zero(3), 0.0);

    Vector c0(3);
    c0 << 0.3, -0.2, 0.15;
    const Trajectory t_plain = plain.run(init, horizon, OpenLoop{[&](double) { return c0; }});
    const Trajectory t_shift = shifted.run(
        init, horizon, OpenLoop{[&](double t) { return Vector(std::exp(lambda * t) * c0); }});

    double worst = 0.0;
    for (size_t i = 0; i < t_plain.times.size(); ++i) {
        const Vector expect = std::exp(lambda * t_plain.times[i]) * t_plain.reduced_states[i];
        worst = std::max(worst, (t_shift.reduced_states[i] - expect).norm() /
                                    std::max(1.0, expect.norm()));
    }
    report("9", worst <= 1e-6,
           fmt("lambda-shifted trajectory vs exp(lambda t) x unshifted over [0, 4/lambda]: "
               "sup rel deviation %.2e (tol 1e-6)",
               worst));
}

void criterion_10_mesh_convergence() {
    const double mu_h = std::abs(solve_eigs(pipeline(0.1).blocks, 1).eigenvalues[0]);
    const double mu_h2 = std::abs(main_spectrum().spectrum.eigenvalues[0]);
    const double mu_h4 = std::abs(solve_eigs(pipeline(0.025).blocks, 1).eigenvalues[0]);
    const double eig_order = std::log2(std::abs(mu_h - mu_h2) / std::abs(mu_h2 - mu_h4));

    const double am_h2 = pipeline(0.05).blocks.added_mass(0, 0);
    const double am_h4 = pipeline(0.025).blocks.added_mass(0, 0);
    const double am_order = std::log2(std::abs(am_h2 - kAddedMassExact) /
                                      std::abs(am_h4 - kAddedMassExact));

    const bool pass = eig_order >= 1.7 && eig_order <= 2.3 && am_order >= 1.7 &&
                      am_order <= 2.3;
    report("10", pass,
           fmt("observed order under h -> h/2: leading eigenvalue %.2f, added mass %.2f "
               "(both in [1.7, 2.3])",
               eig_order, am_order));
}

}  // namespace

int main() {
    try {
        criterion_1_added_mass_oracle();
        criterion_2_mass_structure();
        criterion_3_self_adjointness();
        criterion_4_spectrum();
        criterion_5_controllability();
        criterion_6_feedback_decay();
        criterion_7_energy_identity();
        criterion_8_deformation();
        criterion_9_shift_equivalence();
        criterion_10_mesh_convergence();
    } catch (const std::exception& e) {
        std::printf("[FAIL] acceptance aborted: %s\n", e.what());
        return 1;
    }
    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
