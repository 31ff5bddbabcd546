#include "fsstab/experiment.hpp"

#include "fsstab/deformation.hpp"
#include "fsstab/errors.hpp"
#include "fsstab/simulation.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fsstab {

namespace {

struct PipelineState {
    ExperimentConfig config;
    Mesh mesh;
    FunctionSpaces spaces;
    FormLibrary forms;
    RigidBodyData rigid;
    BlockSystem blocks;
    SpectralDecomposition spectrum;
    double lambda = 0.0;
};

PipelineState build_pipeline(const ExperimentConfig& config) {
    PipelineState p;
    p.config = config;
    if (config.mesh_file) {
        p.mesh = Mesh::load(*config.mesh_file);
        validate_mesh(p.mesh, config.geometry.quality_floor_deg);
        p.mesh.mesh_size = config.geometry.mesh_size;
    } else {
        p.mesh = generate_mesh(config.geometry);
    }
    p.spaces = build_spaces(p.mesh, kTagFluid);
    p.forms = assemble_forms(p.spaces, config.geometry.viscosity);
    p.rigid = solid_moments(p.mesh, config.geometry.solid_density,
                            config.geometry.tol_geom());
    p.blocks = assemble_block_system(p.spaces, p.forms, p.rigid);

    // compute the window [-lambda - margin, 0] with margin = 2 lambda, so the
    // spectral-gap guard around -lambda sees its neighborhood
    int count = std::max(config.eigen_count, 4);
    for (int attempt = 0;; ++attempt) {
        p.spectrum = solve_eigs(p.blocks, count);
        p.lambda = config.lambda > 0.0
                       ? config.lambda
                       : config.lambda_relative * std::abs(p.spectrum.eigenvalues[0]);
        if (p.spectrum.eigenvalues[count - 1] < -3.0 * p.lambda) break;
        if (attempt >= 3)
            throw InsufficientSpectrum("could not bracket -lambda; raise eigen_count");
        count *= 2;
    }
    return p;
}

Vector initial_condition(const PipelineState& p, const ExperimentConfig& config) {
    if (config.initial.rfind("eigenmode:", 0) == 0) {
        const int k = std::stoi(config.initial.substr(10));
        if (k < 0 || k >= p.spectrum.eigenvalues.size())
            throw ConfigError("eigenmode index out of the computed range");
        return p.spectrum.vectors.col(k);
    }
    return random_compatible_state(p.blocks, config.seed);
}

nlohmann::json report_to_json(const VerificationReport& report) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks) {
        nlohmann::json j;
        j["name"] = c.name;
        j["value"] = c.value;
        j["threshold"] = c.threshold;
        j["pass"] = c.pass;
        if (!c.detail.empty()) j["detail"] = c.detail;
        checks.push_back(j);
    }
    return checks;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const fs::path out_dir(config.output_directory);
    fs::create_directories(out_dir);

    PipelineState p = build_pipeline(config);
    const double lambda = p.lambda;

    ExperimentSummary summary;
    summary.lambda = lambda;
    summary.leading_eigenvalue = p.spectrum.eigenvalues[0];
    summary.output_directory = out_dir.string();

    p.mesh.save((out_dir / "mesh.txt").string());
    write_spectrum_csv((out_dir / "spectrum.csv").string(), p.spectrum);

    const UnstableSubspace unstable = split_spectrum(p.spectrum, lambda);
    const ControlBasis basis = build_control_basis(p.spaces, p.forms, config.control_modes);
    const ControlOperator input = assemble_B(basis, p.blocks, lambda);
    const Eigen::MatrixXd b_matrix = reduced_input_matrix(unstable, input);
    const RankReport rank = project_and_check_controllability(unstable, b_matrix);
    const FeedbackGain gain = solve_riccati(unstable, input);
    write_gain_json((out_dir / "gain.json").string(), gain);

    summary.unstable_dimension = unstable.dimension;
    summary.control_modes = config.control_modes;
    summary.kalman_rank = rank.rank;
    summary.controllable = rank.controllable;
    summary.riccati_residual = gain.riccati_residual;

    const double dt = config.dt > 0.0 ? config.dt : std::min(1e-2, 0.1 / lambda);
    const double horizon = config.horizon > 0.0 ? config.horizon : 8.0 / lambda;
    Simulator sim(p.blocks, &basis, 0.0, dt);
    const Vector x0 = initial_condition(p, config);
    const CoupledState init = sim.make_state(x0, Vector::Zero(basis.dimension), 0.0);

    const Trajectory closed = sim.run(init, horizon, ClosedLoop{&gain});
    write_trajectory_csv((out_dir / "trajectory.csv").string(), closed);
    summary.measured_rate = measure_decay(closed, 2.0 / lambda, horizon);

    const Trajectory open = sim.run(init, horizon, OpenLoop{});
    summary.open_loop_rate = measure_decay(open, 2.0 / lambda, horizon);

    // deformation reconstructed from the realized boundary control
    SolidMechanics solid(p.mesh, p.rigid);
    const int stride =
        std::max<int>(1, static_cast<int>(closed.times.size() / config.deformation_snapshots));
    std::vector<Vector> phis;
    nlohmann::json constraints = nlohmann::json::array();
    double worst = 0.0;
    for (size_t k = 0; k < closed.times.size(); k += stride) {
        Vector zeta_fluid = Vector::Zero(p.spaces.num_velocity_dofs());
        for (int j = 0; j < basis.dimension; ++j)
            zeta_fluid += closed.controls[k][j] * basis.modes.col(j);
        const Vector zeta = transfer_interface_values(p.spaces, solid.spaces(), zeta_fluid);
        const SolidVelocityField field = solid.solve_auto(zeta);
        const ConstraintReport rep = solid.check_admissibility(field.phi);
        nlohmann::json row;
        row["t"] = closed.times[k];
        row["flux"] = rep.flux;
        row["linear_momentum"] = {rep.linear_momentum.x(), rep.linear_momentum.y()};
        row["angular_momentum"] = rep.angular_momentum;
        row["flux_rel"] = rep.flux_rel;
        row["linear_rel"] = rep.linear_rel;
        row["angular_rel"] = rep.angular_rel;
        // norm record for the boundary-to-interior amplification estimate
        const double phi_h1 =
            std::sqrt(field.phi.dot(solid.forms().gradgrad * field.phi) +
                      field.phi.dot(solid.forms().mass * field.phi));
        row["phi_h1"] = phi_h1;
        row["zeta_norm"] = closed.controls[k].norm();
        constraints.push_back(row);
        worst = std::max({worst, rep.flux_rel, rep.linear_rel, rep.angular_rel});
        phis.push_back(field.phi);
    }
    summary.constraint_max = worst;
    {
        nlohmann::json j;
        j["snapshots"] = constraints;
        j["max_residual"] = worst;
        j["tolerance"] = 10.0 * p.mesh.mesh_size * p.mesh.mesh_size;
        std::ofstream os(out_dir / "constraints.json");
        os << j.dump(2) << "\n";
    }
    const DeformationTrajectory deform =
        integrate_deformation(phis, lambda, stride * dt);
    for (size_t k = 0; k < deform.displacements.size();
         k += std::max<size_t>(1, deform.displacements.size() / 5)) {
        char name[64];
        std::snprintf(name, sizeof(name), "deformation_%04zu.csv", k);
        write_deformation_csv((out_dir / name).string(), solid.spaces(),
                              deform.displacements[k]);
    }

    nlohmann::json j;
    j["lambda"] = lambda;
    j["leading_eigenvalue"] = p.spectrum.eigenvalues[0];
    j["N"] = unstable.dimension;
    j["m"] = config.control_modes;
    j["kalman_rank"] = rank.rank;
    j["controllable"] = rank.controllable;
    j["riccati_residual"] = gain.riccati_residual;
    j["measured_rate"] = summary.measured_rate;
    j["open_loop_rate"] = summary.open_loop_rate;
    j["constraint_max"] = worst;
    j["infsup_estimate"] = p.spaces.infsup_estimate;
    j["added_mass"] = {{p.blocks.added_mass(0, 0), p.blocks.added_mass(0, 1),
                        p.blocks.added_mass(0, 2)},
                       {p.blocks.added_mass(1, 0), p.blocks.added_mass(1, 1),
                        p.blocks.added_mass(1, 2)},
                       {p.blocks.added_mass(2, 0), p.blocks.added_mass(2, 1),
                        p.blocks.added_mass(2, 2)}};
    j["dt"] = dt;
    j["horizon"] = horizon;
    j["seed"] = config.seed;
    j["mesh"] = {{"vertices", p.mesh.num_vertices()},
                 {"triangles", p.mesh.triangles.size()},
                 {"min_angle_deg", p.mesh.min_angle_deg()}};
    {
        Eigen::SelfAdjointEigenSolver<Mat3> es(p.blocks.added_mass);
        double pole_margin = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < gain.closed_loop_poles.size(); ++i)
            pole_margin = std::max(pole_margin, gain.closed_loop_poles[i].real() + lambda);
        j["invariants"] = {
            {"added_mass_symmetry",
             (p.blocks.added_mass - p.blocks.added_mass.transpose()).norm()},
            {"added_mass_min_eig", es.eigenvalues().minCoeff()},
            {"added_mass_boundary_gap",
             (p.blocks.added_mass - p.blocks.added_mass_boundary).norm()},
            {"spectral_residual_max", p.spectrum.residuals.maxCoeff()},
            {"control_flux_max", basis.fluxes.cwiseAbs().maxCoeff()},
            {"control_gram_condition", basis.gram_condition},
            {"closed_loop_pole_margin", pole_margin},
            {"constraint_tolerance", 10.0 * p.mesh.mesh_size * p.mesh.mesh_size},
        };
    }
    {
        std::ofstream os(out_dir / "summary.json");
        os << j.dump(2) << "\n";
    }
    return summary;
}

bool VerificationReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

VerificationReport verify(const ExperimentConfig& config) {
    VerificationReport report;
    auto add = [&](const std::string& name, double value, double threshold,
                   const std::string& detail = "") {
        report.checks.push_back({name, value, threshold, value <= threshold, detail});
    };

    PipelineState p = build_pipeline(config);
    const double lambda = p.lambda;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss;
    auto randv = [&](int n) {
        return Vector(Vector::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); }));
    };

    // discretization invariants
    add("infsup_above_floor", 1e-3 - p.spaces.infsup_estimate, 0.0,
        "inf-sup estimate " + std::to_string(p.spaces.infsup_estimate));
    {
        double korn_excess = 0.0;
        for (int t = 0; t < 20; ++t) {
            Vector v = randv(p.spaces.num_velocity_dofs());
            for (int n = 0; n < p.spaces.num_nodes(); ++n)
                if (p.spaces.node_on_outer[n] || p.spaces.node_on_interface[n])
                    v[2 * n] = v[2 * n + 1] = 0.0;
            const double lhs = v.dot(p.forms.gradgrad * v);
            const double rhs = v.dot(p.forms.viscous * v) / p.config.geometry.viscosity;
            korn_excess = std::max(korn_excess, (lhs - rhs) / std::max(1.0, rhs));
        }
        add("fluid_korn_identity", korn_excess, 1e-12);
    }

    // added-mass structure
    add("added_mass_symmetry",
        (p.blocks.added_mass - p.blocks.added_mass.transpose()).norm(), 0.0);
    {
        Eigen::SelfAdjointEigenSolver<Mat3> es(p.blocks.added_mass);
        add("added_mass_min_eig", -es.eigenvalues().minCoeff(),
            1e-10 * p.blocks.added_mass.norm());
        add("added_mass_boundary_route",
            (p.blocks.added_mass - p.blocks.added_mass_boundary).norm(),
            1e-8 * std::max(1.0, p.blocks.added_mass.norm()));
    }
    {
        ScalarPoisson poisson(p.spaces, p.forms);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Vec3 hw(gauss(rng), gauss(rng), gauss(rng));
            const NeumannSolution sol = solve_neumann(poisson, p.forms, hw);
            const double energy = sol.potential.dot(p.forms.scalar_stiff * sol.potential);
            const double quad = hw.dot(p.blocks.added_mass * hw);
            worst = std::max(worst, std::abs(energy - quad) / std::max(1e-30, energy));
        }
        add("added_mass_quadratic_identity", worst, 1e-8);
    }

    // self-adjointness and dissipativity on the constrained subspace
    {
        DivFreeProjector proj(p.blocks);
        double asym = 0.0, dissip = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Vector x1 = proj.project(randv(p.blocks.n_reduced));
            const Vector x2 = proj.project(randv(p.blocks.n_reduced));
            const Vector op1 = lambda * (p.blocks.mass * x1) + p.blocks.viscous * x1;
            const Vector op2 = lambda * (p.blocks.mass * x2) + p.blocks.viscous * x2;
            const double a = x2.dot(op1), b = x1.dot(op2);
            asym = std::max(asym, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0}));
            dissip = std::max(dissip, -x1.dot(p.blocks.viscous * x1));
        }
        add("self_adjoint_pairing", asym, 1e-9);
        add("dissipativity", dissip, 0.0);
    }

    // Leray projection structure
    {
        LerayProjector leray(p.spaces, p.forms);
        const Vector v = randv(p.spaces.num_velocity_dofs());
        const Vector pv = leray.project(v);
        add("leray_idempotent", (leray.project(pv) - pv).norm() / std::max(1.0, pv.norm()),
            1e-10);
        add("leray_orthogonal", std::abs(pv.dot(p.forms.mass * (v - pv))) / v.squaredNorm(),
            1e-10);
    }

    // spectrum quality
    add("spectral_residual_max", p.spectrum.residuals.maxCoeff(), 1e-8);
    add("spectrum_negative", p.spectrum.eigenvalues.maxCoeff(), 0.0);
    {
        const Eigen::MatrixXd gram =
            p.spectrum.vectors.transpose() * (p.blocks.mass * p.spectrum.vectors);
        add("m_orthonormal_basis",
            (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(),
            1e-8);
    }

    // stabilization chain; LambdaOnSpectrum and friends surface as report rows
    try {
        const UnstableSubspace unstable = split_spectrum(p.spectrum, lambda);
        const ControlBasis basis =
            build_control_basis(p.spaces, p.forms, config.control_modes);
        add("control_flux_max", basis.fluxes.cwiseAbs().maxCoeff(), 1e-10);
        add("control_gram_condition", basis.gram_condition, 1e6);
        const ControlOperator input = assemble_B(basis, p.blocks, lambda);
        const Eigen::MatrixXd b_matrix = reduced_input_matrix(unstable, input);
        const RankReport rank = project_and_check_controllability(unstable, b_matrix);
        add("kalman_rank_deficiency", unstable.dimension - rank.rank, 0.0,
            "rank " + std::to_string(rank.rank) + " of N = " +
                std::to_string(unstable.dimension) + " with m = " +
                std::to_string(config.control_modes));
        if (rank.controllable) {
            const FeedbackGain gain = solve_riccati(unstable, input);
            add("riccati_residual", gain.riccati_residual, 1e-8);
            double pole_margin = -1.0;  // want Re < -lambda strictly
            for (int i = 0; i < gain.closed_loop_poles.size(); ++i)
                pole_margin =
                    std::max(pole_margin, gain.closed_loop_poles[i].real() + lambda);
            add("closed_loop_poles_below_minus_lambda", pole_margin, 0.0);
        }
    } catch (const Error& e) {
        report.checks.push_back(
            {"stabilization_stage", 1.0, 0.0, false, std::string("error: ") + e.what()});
    }

    // energy identity for one midpoint step
    {
        const double dt = std::min(1e-2, 0.1 / lambda);
        Simulator sim(p.blocks, nullptr, 0.0, dt);
        const Vector x = random_compatible_state(p.blocks, config.seed + 1);
        const Vector xn = sim.step_reduced(x, Vector(), Vector());
        const double de = sim.energy(xn, Vector()) - sim.energy(x, Vector());
        const double diss =
            dt * sim.dissipation(sim.expand_with_control(0.5 * (x + xn), Vector()));
        add("energy_identity_per_step", std::abs(de + diss) / std::max(1e-30, std::abs(de)),
            1e-10);
    }

    // deformation constraints for the configured mode family
    try {
        SolidMechanics solid(p.mesh, p.rigid);
        const ControlBasis basis =
            build_control_basis(p.spaces, p.forms, config.control_modes);
        double worst = 0.0, super = 0.0;
        Vector prev;
        double mu_used = solid.mu_min();
        for (int j = 0; j < basis.dimension; ++j) {
            const Vector zeta =
                transfer_interface_values(p.spaces, solid.spaces(), basis.modes.col(j));
            const SolidVelocityField field = solid.solve_auto(zeta);
            mu_used = field.mu;
            const ConstraintReport rep = solid.check_admissibility(field.phi);
            worst = std::max({worst, rep.flux_rel, rep.linear_rel, rep.angular_rel});
            if (j == 1 && prev.size()) {
                const Vector z2 = transfer_interface_values(p.spaces, solid.spaces(),
                                                            basis.modes.col(0)) +
                                  zeta;
                // superposition is a fixed-mu statement
                const SolidVelocityField first =
                    solid.solve_lame_fixed_point(
                        transfer_interface_values(p.spaces, solid.spaces(),
                                                  basis.modes.col(0)),
                        mu_used);
                const SolidVelocityField second = solid.solve_lame_fixed_point(zeta, mu_used);
                const SolidVelocityField both = solid.solve_lame_fixed_point(z2, mu_used);
                super = (both.phi - first.phi - second.phi).norm() /
                        std::max(1.0, both.phi.norm());
            }
            prev = field.phi;
        }
        add("deformation_constraints_max", worst,
            10.0 * p.mesh.mesh_size * p.mesh.mesh_size);
        add("deformation_superposition", super, 1e-9);

        double korn_excess = 0.0;
        for (int t = 0; t < 10; ++t) {
            Vector v = randv(solid.spaces().num_velocity_dofs());
            for (int n : solid.spaces().interface_nodes) v[2 * n] = v[2 * n + 1] = 0.0;
            const double lhs = v.dot(solid.forms().gradgrad * v);
            const double rhs = v.dot(solid.forms().viscous * v);
            korn_excess = std::max(korn_excess, (lhs - rhs) / std::max(1.0, rhs));
        }
        add("solid_korn_identity", korn_excess, 1e-12);
    } catch (const Error& e) {
        report.checks.push_back(
            {"deformation_stage", 1.0, 0.0, false, std::string("error: ") + e.what()});
    }

    return report;
}

void print_report(std::ostream& os, const VerificationReport& report) {
    for (const auto& c : report.checks) {
        os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.value
           << " (threshold " << c.threshold << ")";
        if (!c.detail.empty()) os << "  -- " << c.detail;
        os << "\n";
    }
    os << (report.all_pass() ? "all checks passed\n" : "SOME CHECKS FAILED\n");
}

void write_report_json(const std::string& path, const VerificationReport& report) {
    nlohmann::json j;
    j["checks"] = report_to_json(report);
    j["all_pass"] = report.all_pass();
    std::ofstream os(path);
    if (!os) throw Error("cannot open report json: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace fsstab
