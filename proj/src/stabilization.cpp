#include "fsstab/stabilization.hpp"

#include "fsstab/errors.hpp"
#include "fsstab/fem.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace fsstab {

namespace {

// interface L2 Gram matrix of interface-supported velocity fields
Eigen::MatrixXd interface_gram(const FunctionSpaces& sp, const Eigen::MatrixXd& modes) {
    const auto& erule = fem::edge_rule_deg5();
    const int m = static_cast<int>(modes.cols());
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    for (const auto& te : sp.trace_edges) {
        if (te.tag != kTagInterface) continue;
        for (int q = 0; q < erule.npts; ++q) {
            const double w = erule.weight[q] * te.length;
            std::vector<Vec2> vals(m, Vec2::Zero());
            for (int i = 0; i < m; ++i)
                for (int k = 0; k < 3; ++k) {
                    const double phi = fem::p2_edge_shape(k, erule.s[q]);
                    vals[i].x() += phi * modes(2 * te.nodes[k], i);
                    vals[i].y() += phi * modes(2 * te.nodes[k] + 1, i);
                }
            for (int i = 0; i < m; ++i)
                for (int j = i; j < m; ++j) gram(i, j) += w * vals[i].dot(vals[j]);
        }
    }
    return gram.selfadjointView<Eigen::Upper>();
}

}  // namespace

ControlBasis build_control_basis(const FunctionSpaces& spaces, const FormLibrary& forms,
                                 int m) {
    if (m < 1) throw ConfigError("control basis needs at least one mode");

    ControlBasis basis;
    basis.dimension = m;
    const int n_vel = spaces.num_velocity_dofs();
    basis.modes = Eigen::MatrixXd::Zero(n_vel, m);

    // mode family: k=0 spin, then per k >= 1 the normal/tangential cos/sin modes
    auto fill_mode = [&](int j, int k, int kind) {
        for (int n : spaces.interface_nodes) {
            const Vec2 y = spaces.node_coords[n];
            const double theta = std::atan2(y.y(), y.x());
            const Vec2 radial = y.normalized();
            const Vec2 tangent(-radial.y(), radial.x());
            double amp = 1.0;
            Vec2 dir = tangent;
            switch (kind) {
                case 0: dir = tangent; amp = 1.0; break;  // spin
                case 1: dir = radial;  amp = std::cos(k * theta); break;
                case 2: dir = radial;  amp = std::sin(k * theta); break;
                case 3: dir = tangent; amp = std::cos(k * theta); break;
                case 4: dir = tangent; amp = std::sin(k * theta); break;
            }
            basis.modes(2 * n, j) = amp * dir.x();
            basis.modes(2 * n + 1, j) = amp * dir.y();
        }
    };
    int j = 0;
    fill_mode(j++, 0, 0);
    for (int k = 1; j < m; ++k)
        for (int kind = 1; kind <= 4 && j < m; ++kind) fill_mode(j++, k, kind);

    // flux correction against the radial bubble (which carries nonzero flux)
    Vector radial_mode = Vector::Zero(n_vel);
    for (int n : spaces.interface_nodes) {
        const Vec2 r = spaces.node_coords[n].normalized();
        radial_mode[2 * n] = r.x();
        radial_mode[2 * n + 1] = r.y();
    }
    const double radial_flux = forms.boundary_flux.dot(radial_mode);
    if (std::abs(radial_flux) < 1e-12)
        throw SolverDivergence("degenerate interface: radial field has no flux");
    basis.fluxes = Vector(m);
    for (int col = 0; col < m; ++col) {
        const double flux = forms.boundary_flux.dot(basis.modes.col(col));
        basis.modes.col(col) -= (flux / radial_flux) * radial_mode;
        basis.fluxes[col] = forms.boundary_flux.dot(basis.modes.col(col));
        if (std::abs(basis.fluxes[col]) >
            1e-10 * std::max(1.0, basis.modes.col(col).norm()))
            throw FluxViolation("control mode flux correction failed");
    }

    const Eigen::MatrixXd gram = interface_gram(spaces, basis.modes);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    basis.gram_condition = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(basis.gram_condition <= 1e6))
        throw ConfigError("control modes are numerically dependent on the interface");

    StokesLifting lifting(spaces, forms);
    basis.liftings.reserve(m);
    for (int col = 0; col < m; ++col)
        basis.liftings.push_back(lifting.lift(basis.modes.col(col)));
    return basis;
}

ControlOperator assemble_B(const ControlBasis& basis, const BlockSystem& blocks,
                           double lambda) {
    const FormLibrary& forms = *blocks.forms;
    const int m = basis.dimension;
    ControlOperator op;
    op.lambda = lambda;
    op.force = Eigen::MatrixXd(blocks.n_reduced, m);
    op.lifting_mass = Eigen::MatrixXd(blocks.n_reduced, m);
    op.interp_mass = Eigen::MatrixXd(blocks.n_reduced, m);
    const SpMat Et = blocks.coupling.transpose();
    for (int j = 0; j < m; ++j) {
        const Vector& w = basis.liftings[j].velocity;
        const Vector& psi = basis.liftings[j].pressure;
        const Vector mw = forms.mass * w;
        op.lifting_mass.col(j) = Et * mw;
        op.interp_mass.col(j) = Et * (forms.mass * basis.modes.col(j));
        op.force.col(j) = Et * (lambda * mw - forms.viscous * w +
                                SpMat(forms.divergence.transpose()) * psi);
    }
    return op;
}

Eigen::MatrixXd reduced_input_matrix(const UnstableSubspace& u, const ControlOperator& op) {
    if (u.dimension == 0) return Eigen::MatrixXd(0, op.force.cols());
    const Eigen::MatrixXd b0 = u.basis.transpose() * op.force;
    const Eigen::MatrixXd b1 = u.basis.transpose() * op.lifting_mass;
    Eigen::MatrixXd out = b0;
    for (int i = 0; i < u.dimension; ++i)
        out.row(i) -= (u.eigenvalues[i] + op.lambda) * b1.row(i);
    return out;
}

RankReport project_and_check_controllability(const UnstableSubspace& u,
                                             const Eigen::MatrixXd& input) {
    RankReport report;
    report.dimension = u.dimension;
    report.modes = static_cast<int>(input.cols());
    if (u.dimension == 0) {
        report.rank = 0;
        report.controllable = true;  // empty system
        return report;
    }
    const int N = u.dimension, m = report.modes;
    // A_u is diagonal on the eigenbasis; scale it to unit size so the Kalman
    // block columns stay comparable
    const double scale = std::max(1.0, u.eigenvalues.cwiseAbs().maxCoeff());
    Eigen::MatrixXd kalman(N, N * m);
    Eigen::MatrixXd column = input;
    for (int p = 0; p < N; ++p) {
        kalman.middleCols(p * m, m) = column;
        column = (u.eigenvalues / scale).asDiagonal() * column;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(kalman);
    const double sigma_max = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    // absolute floor: couplings far below the system scale are noise
    const double tol = std::max(1e-10 * sigma_max, 1e-10 * scale);
    report.rank = static_cast<int>((svd.singularValues().array() > tol).count());
    report.controllable = report.rank == N;
    return report;
}

Vector FeedbackGain::evaluate(const Vector& x, const Vector& c_prev) const {
    if (dimension == 0) return Vector::Zero(modes);
    return state_map * x + control_map * c_prev;
}

FeedbackGain solve_riccati(const UnstableSubspace& u, const ControlOperator& op) {
    FeedbackGain fb;
    fb.lambda = op.lambda;
    fb.dimension = u.dimension;
    fb.modes = static_cast<int>(op.force.cols());

    const int N = u.dimension, m = fb.modes;
    if (N == 0) {
        fb.riccati = Eigen::MatrixXd(0, 0);
        fb.gain = Eigen::MatrixXd(m, 0);
        fb.state_map = Eigen::MatrixXd::Zero(m, op.force.rows());
        fb.control_map = Eigen::MatrixXd::Zero(m, m);
        fb.closed_loop_poles = Eigen::VectorXcd(0);
        return fb;
    }

    const Eigen::MatrixXd B = reduced_input_matrix(u, op);
    const RankReport report = project_and_check_controllability(u, B);
    if (!report.controllable)
        throw RiccatiNoSolution("projected pair is not controllable; enlarge Xi");

    Eigen::MatrixXd A_s = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) A_s(i, i) = u.eigenvalues[i] + op.lambda;
    const Eigen::MatrixXd BBt = B * B.transpose();

    // Hamiltonian eigen-decomposition
    Eigen::MatrixXd H(2 * N, 2 * N);
    H.topLeftCorner(N, N) = A_s;
    H.topRightCorner(N, N) = -BBt;
    H.bottomLeftCorner(N, N) = -Eigen::MatrixXd::Identity(N, N);
    H.bottomRightCorner(N, N) = -A_s.transpose();
    Eigen::EigenSolver<Eigen::MatrixXd> es(H);
    if (es.info() != Eigen::Success) throw RiccatiNoSolution("Hamiltonian eigensolve failed");

    Eigen::MatrixXd basis(2 * N, N);
    int found = 0;
    for (int i = 0; i < 2 * N && found < N; ++i) {
        const std::complex<double> ev = es.eigenvalues()[i];
        if (ev.real() >= 0.0) continue;
        if (std::abs(ev.imag()) < 1e-12) {
            basis.col(found++) = es.eigenvectors().col(i).real();
        } else if (ev.imag() > 0.0) {  // take each conjugate pair once
            basis.col(found++) = es.eigenvectors().col(i).real();
            if (found < N) basis.col(found++) = es.eigenvectors().col(i).imag();
        }
    }
    if (found != N)
        throw RiccatiNoSolution("Hamiltonian has no stable N-dimensional subspace");

    const Eigen::MatrixXd X1 = basis.topRows(N);
    const Eigen::MatrixXd X2 = basis.bottomRows(N);
    Eigen::FullPivLU<Eigen::MatrixXd> x1lu(X1);
    if (!x1lu.isInvertible())
        throw RiccatiNoSolution("stable subspace is not a graph over the state space");
    Eigen::MatrixXd Pi = X2 * x1lu.inverse();
    Pi = 0.5 * (Pi + Pi.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> pies(Pi);
    if (pies.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, Pi.norm()))
        throw RiccatiNoSolution("Riccati solution is not positive semidefinite");

    fb.riccati = Pi;
    fb.riccati_residual = (Pi * A_s + A_s.transpose() * Pi - Pi * BBt * Pi +
                           Eigen::MatrixXd::Identity(N, N))
                              .norm();
    fb.gain = -B.transpose() * Pi;

    Eigen::MatrixXd A_u = Eigen::MatrixXd::Zero(N, N);
    for (int i = 0; i < N; ++i) A_u(i, i) = u.eigenvalues[i];
    const Eigen::MatrixXd closed = A_u - BBt * Pi;
    fb.closed_loop_poles = Eigen::EigenSolver<Eigen::MatrixXd>(closed).eigenvalues();

    // zeta = gain * (modal coefficients of the Duhamel-reduced state)
    fb.state_map = fb.gain * (u.basis.transpose() * SpMat(u.blocks->mass));
    fb.control_map = fb.gain * (u.basis.transpose() * op.interp_mass);
    return fb;
}

void write_gain_json(const std::string& path, const FeedbackGain& fb) {
    nlohmann::json j;
    j["lambda"] = fb.lambda;
    j["N"] = fb.dimension;
    j["m"] = fb.modes;
    j["riccati_residual"] = fb.riccati_residual;
    j["closed_loop_poles"] = nlohmann::json::array();
    for (int i = 0; i < fb.closed_loop_poles.size(); ++i)
        j["closed_loop_poles"].push_back(
            {fb.closed_loop_poles[i].real(), fb.closed_loop_poles[i].imag()});
    j["gain_matrix"] = nlohmann::json::array();
    for (int r = 0; r < fb.gain.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < fb.gain.cols(); ++c) row.push_back(fb.gain(r, c));
        j["gain_matrix"].push_back(row);
    }
    std::ofstream os(path);
    if (!os) throw Error("cannot open gain json: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace fsstab
