#include "ssmc/elqr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/SparseLU>

#include "ssmc/errors.hpp"
#include "ssmc/ode.hpp"

namespace ssmc::elqr {

namespace {

struct Bracket {
    std::size_t i;
    double s, h;
};

Bracket locate(const std::vector<double>& grid, double t, const char* what) {
    if (grid.empty()) throw PreconditionError(std::string(what) + ": empty grid");
    const double tol = 1e-12 * std::max(1.0, std::abs(grid.back()));
    if (t < grid.front() - tol || t > grid.back() + tol) {
        std::ostringstream msg;
        msg << what << ": time " << t << " outside [" << grid.front() << ", " << grid.back() << "]";
        throw PreconditionError(msg.str());
    }
    if (grid.size() == 1) return {0, 0.0, 1.0};
    auto it = std::upper_bound(grid.begin(), grid.end(), t);
    std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
    i = std::min(i, grid.size() - 2);
    const double h = grid[i + 1] - grid[i];
    return {i, std::clamp((t - grid[i]) / h, 0.0, 1.0), h};
}

template <class Get, class GetD>
auto hermite(const Bracket& b, Get value, GetD deriv) {
    const double s = b.s;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return (h00 * value(b.i) + h10 * b.h * deriv(b.i) + h01 * value(b.i + 1) + h11 * b.h * deriv(b.i + 1)).eval();
}

bool is_symmetric(const Eigen::MatrixXd& X) {
    return X.rows() == X.cols() && (X - X.transpose()).norm() <= 1e-12 * std::max(1.0, X.norm());
}

void require_psd(const Eigen::MatrixXd& X, const char* name, bool strict) {
    if (!is_symmetric(X)) throw PreconditionError(std::string(name) + " must be square and symmetric");
    if (X.size() == 0) return;
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(X, Eigen::EigenvaluesOnly).eigenvalues()(0);
    const double floor = 1e-12 * std::max(1.0, X.norm());
    if (strict ? !(lo > 0.0) : lo < -floor) {
        std::ostringstream msg;
        msg << name << " must be positive " << (strict ? "definite" : "semidefinite") << " (smallest eigenvalue " << lo
            << ")";
        throw PreconditionError(msg.str());
    }
}

void require_realified(const linred::ReducedLinearModel& model) {
    if (!model.realified) throw PreconditionError("LQ design needs a realified reduced model");
}

// B R^-1 B^T
Eigen::MatrixXd gain_matrix(const linred::ReducedLinearModel& model, const LQData& lq) {
    return model.B_r * lq.R_hat.ldlt().solve(model.B_r.transpose());
}

double trapezoid(const std::vector<double>& grid, const Eigen::VectorXd& f) {
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        acc += 0.5 * (grid[k + 1] - grid[k]) * (f(static_cast<Eigen::Index>(k)) + f(static_cast<Eigen::Index>(k + 1)));
    return acc;
}

ode::State to_state(const Eigen::VectorXd& v) { return ode::State(v.data(), v.data() + v.size()); }

void put_row(std::ostream& out, double t, const Eigen::VectorXd& v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    out << buf;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g", v(i));
        out << buf;
    }
    out << '\n';
}

} // namespace

Eigen::VectorXd SampledSignal::at(double t) const {
    const Bracket b = locate(grid, t, "sampled signal");
    if (grid.size() == 1) return values.col(0);
    const auto i = static_cast<Eigen::Index>(b.i);
    if (mode == Interpolation::linear) return (1.0 - b.s) * values.col(i) + b.s * values.col(i + 1);
    if (derivatives.size() != 0)
        return hermite(b, [&](std::size_t k) { return values.col(static_cast<Eigen::Index>(k)); },
                       [&](std::size_t k) { return derivatives.col(static_cast<Eigen::Index>(k)); });
    auto slope = [&](std::size_t k) -> Eigen::VectorXd {
        const std::size_t lo = k == 0 ? 0 : k - 1, hi = std::min(k + 1, grid.size() - 1);
        return (values.col(static_cast<Eigen::Index>(hi)) - values.col(static_cast<Eigen::Index>(lo))) /
               (grid[hi] - grid[lo]);
    };
    return hermite(b, [&](std::size_t k) { return values.col(static_cast<Eigen::Index>(k)); }, slope);
}

LQWeights::LQWeights(Eigen::MatrixXd Q_, Eigen::MatrixXd R_, Eigen::MatrixXd M_)
    : Q(std::move(Q_)), R_hat(std::move(R_)), M_hat(std::move(M_)) {
    if (M_hat.size() == 0) M_hat = Eigen::MatrixXd::Zero(Q.rows(), Q.cols());
    require_psd(Q, "Q", false);
    require_psd(R_hat, "R_hat", true);
    require_psd(M_hat, "M_hat", false);
    if (M_hat.rows() != Q.rows()) throw PreconditionError("Q and M_hat dimensions differ");
}

Eigen::MatrixXd RiccatiSolution::P_at(double t) const {
    const Bracket b = locate(grid, t, "Riccati solution");
    if (grid.size() == 1) return P[0];
    if (interpolation == Interpolation::cubic && dP.size() == P.size())
        return hermite(b, [&](std::size_t k) { return P[k]; }, [&](std::size_t k) { return dP[k]; });
    return (1.0 - b.s) * P[b.i] + b.s * P[b.i + 1];
}

Eigen::VectorXd RiccatiSolution::s_at(double t) const {
    if (s.size() == 0) throw PreconditionError("compensation vector not computed");
    return SampledSignal{grid, s, ds, interpolation}.at(t);
}

LQData assemble_lq(const LQWeights& weights, const linred::ReducedLinearModel& model, const ssm::SSMModel& ssm,
                   const ssm::ReducedTrajectory& p_traj, double epsilon, std::span<const double> grid) {
    require_realified(model);
    if (grid.size() < 2) throw PreconditionError("assemble_lq: need at least two grid nodes");
    const Eigen::Index N = model.V_r.rows();
    if (weights.Q.rows() != N) throw PreconditionError("assemble_lq: Q does not match the state dimension");
    if (weights.R_hat.rows() != model.inputs()) throw PreconditionError("assemble_lq: R_hat does not match the inputs");
    const double tol = 1e-12 * std::max(1.0, std::abs(p_traj.t1()));
    if (grid.front() < p_traj.t0() - tol || grid.back() > p_traj.t1() + tol) {
        std::ostringstream msg;
        msg << "assemble_lq: grid [" << grid.front() << ", " << grid.back() << "] outside trajectory span ["
            << p_traj.t0() << ", " << p_traj.t1() << "]";
        throw PreconditionError(msg.str());
    }
    LQData lq;
    lq.grid.assign(grid.begin(), grid.end());
    lq.epsilon = epsilon;
    const auto G = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXcd Pm(ssm.dim(), G);
    for (Eigen::Index k = 0; k < G; ++k) Pm.col(k) = p_traj.at(grid[static_cast<std::size_t>(k)]);
    lq.Wp = ssm::eval_parameterization_batch(ssm, Pm);

    const Eigen::MatrixXd QV = weights.Q * model.V_r;
    const Eigen::MatrixXd MV = weights.M_hat * model.V_r;
    lq.Q2 = epsilon * epsilon * model.V_r.transpose() * QV;
    lq.Q2 = 0.5 * (lq.Q2 + lq.Q2.transpose()).eval();
    lq.M2 = epsilon * epsilon * model.V_r.transpose() * MV;
    lq.M2 = 0.5 * (lq.M2 + lq.M2.transpose()).eval();
    lq.R_hat = weights.R_hat;
    lq.bQ = 2.0 * epsilon * QV.transpose() * lq.Wp;
    lq.bM_t1 = 2.0 * epsilon * MV.transpose() * lq.Wp.col(G - 1);
    lq.a = (lq.Wp.array() * (weights.Q * lq.Wp).array()).colwise().sum().transpose();
    lq.a_t1 = lq.Wp.col(G - 1).dot(weights.M_hat * lq.Wp.col(G - 1));
    lq.b.resize(model.dim(), G);
    for (Eigen::Index k = 0; k < G; ++k) lq.b.col(k) = model.forcing(grid[static_cast<std::size_t>(k)]);
    return lq;
}

Eigen::MatrixXd riccati_rhs(const linred::ReducedLinearModel& model, const LQData& lq, const Eigen::MatrixXd& P) {
    const Eigen::MatrixXd& L = model.Lambda_r;
    const Eigen::MatrixXd S = gain_matrix(model, lq);
    return -P * L - L.transpose() * P - lq.Q2 + P * S * P;
}

RiccatiSolution solve_riccati(const linred::ReducedLinearModel& model, const LQData& lq, const SolverOptions& opts) {
    require_realified(model);
    if (lq.grid.size() < 2 || !(lq.t1() > lq.t0())) throw PreconditionError("solve_riccati: need t1 > t0");
    if (lq.R_hat.ldlt().info() != Eigen::Success || !(lq.R_hat.ldlt().rcond() > 0.0))
        throw PreconditionError("solve_riccati: R_hat is not invertible");
    const int d = model.dim();
    const Eigen::MatrixXd L = model.Lambda_r;
    const Eigen::MatrixXd S = gain_matrix(model, lq);

    std::vector<double> back(lq.grid.rbegin(), lq.grid.rend());
    Eigen::MatrixXd P1 = lq.M2;
    const double limit = opts.escape_limit;
    auto rhs = [&](const ode::State& x, ode::State& dx, double t) {
        Eigen::Map<const Eigen::MatrixXd> P(x.data(), d, d);
        const double nrm = P.norm();
        if (!std::isfinite(nrm) || nrm > limit) {
            std::ostringstream msg;
            msg << "Riccati solution escapes (|P| = " << nrm << ") near t = " << t;
            throw NumericalError(msg.str());
        }
        Eigen::MatrixXd D = -P * L - L.transpose() * P - lq.Q2 + P * S * P;
        D = 0.5 * (D + D.transpose()).eval();
        dx.assign(D.data(), D.data() + D.size());
    };
    ode::Options o;
    o.rel_tol = opts.rel_tol;
    o.abs_tol = opts.abs_tol;
    o.initial_step = 1e-3 * (lq.t1() - lq.t0());
    const auto states = ode::integrate_on_grid(rhs, ode::State(P1.data(), P1.data() + P1.size()), back, o);

    RiccatiSolution sol;
    sol.grid = lq.grid;
    sol.interpolation = opts.interpolation;
    const std::size_t G = lq.grid.size();
    sol.P.resize(G);
    sol.dP.resize(G);
    for (std::size_t j = 0; j < G; ++j) {
        Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(states[G - 1 - j].data(), d, d);
        P = 0.5 * (P + P.transpose()).eval();
        sol.dP[j] = riccati_rhs(model, lq, P);
        sol.dP[j] = 0.5 * (sol.dP[j] + sol.dP[j].transpose()).eval();
        sol.P[j] = std::move(P);
    }
    sol.P[G - 1] = lq.M2;
    return sol;
}

void solve_compensation(const linred::ReducedLinearModel& model, const LQData& lq, RiccatiSolution& riccati,
                        const SolverOptions& opts) {
    require_realified(model);
    if (riccati.grid != lq.grid) throw PreconditionError("solve_compensation: Riccati and LQ grids differ");
    const int d = model.dim();
    const Eigen::Index G = static_cast<Eigen::Index>(lq.grid.size());
    if (lq.bQ.cols() != G || lq.b.cols() != G || lq.bQ.rows() != d || lq.b.rows() != d)
        throw PreconditionError("solve_compensation: sampled signals do not match the grid");
    const Eigen::MatrixXd Lt = model.Lambda_r.transpose();
    const Eigen::MatrixXd S = gain_matrix(model, lq);
    const SampledSignal bQ{lq.grid, lq.bQ, {}, opts.interpolation};
    const SampledSignal b{lq.grid, lq.b, {}, opts.interpolation};
    auto field = [&](const Eigen::MatrixXd& P, const Eigen::VectorXd& s, const Eigen::VectorXd& bq,
                     const Eigen::VectorXd& bb) -> Eigen::VectorXd { return (P * S - Lt) * s + bq + 2.0 * P * bb; };

    std::vector<double> back(lq.grid.rbegin(), lq.grid.rend());
    const Eigen::VectorXd s1 = lq.bM_t1.size() == d ? Eigen::VectorXd(-lq.bM_t1) : Eigen::VectorXd::Zero(d);
    auto rhs = [&](const ode::State& x, ode::State& dx, double t) {
        Eigen::Map<const Eigen::VectorXd> s(x.data(), d);
        const Eigen::VectorXd r = field(riccati.P_at(t), s, bQ.at(t), b.at(t));
        dx.assign(r.data(), r.data() + r.size());
    };
    ode::Options o;
    o.rel_tol = opts.rel_tol;
    o.abs_tol = opts.abs_tol;
    o.initial_step = 1e-3 * (lq.t1() - lq.t0());
    const auto states = ode::integrate_on_grid(rhs, to_state(s1), back, o);
    riccati.s.resize(d, G);
    riccati.ds.resize(d, G);
    for (Eigen::Index j = 0; j < G; ++j) {
        riccati.s.col(j) = Eigen::Map<const Eigen::VectorXd>(states[static_cast<std::size_t>(G - 1 - j)].data(), d);
        riccati.ds.col(j) = field(riccati.P[static_cast<std::size_t>(j)], riccati.s.col(j), lq.bQ.col(j), lq.b.col(j));
    }
    riccati.s.col(G - 1) = s1;
}

Eigen::VectorXd control_input(const linred::ReducedLinearModel& model, const LQData& lq, const RiccatiSolution& riccati,
                              const Eigen::VectorXd& q, double t) {
    const Eigen::VectorXd r = -riccati.P_at(t) * q + 0.5 * riccati.s_at(t);
    return lq.R_hat.ldlt().solve(model.B_r.transpose() * r);
}

Eigen::VectorXd control_input_physical(const linred::ReducedLinearModel& model, const LQData& lq,
                                       const RiccatiSolution& riccati, const mech::SparseMatrix& B,
                                       const Eigen::VectorXd& z, const Eigen::VectorXd& Wp, double t) {
    const Eigen::VectorXd q = linred::reduced_initial_condition(model, B, z, Wp, lq.epsilon);
    return control_input(model, lq, riccati, q, t);
}

double reduced_objective(const LQData& lq, const Eigen::MatrixXd& q, const Eigen::MatrixXd& u) {
    const Eigen::Index G = static_cast<Eigen::Index>(lq.grid.size());
    if (q.cols() != G || u.cols() != G) throw PreconditionError("reduced_objective: samples do not match the grid");
    Eigen::VectorXd f(G);
    for (Eigen::Index k = 0; k < G; ++k)
        f(k) = lq.bQ.col(k).dot(q.col(k)) + q.col(k).dot(lq.Q2 * q.col(k)) + u.col(k).dot(lq.R_hat * u.col(k));
    const Eigen::VectorXd qT = q.col(G - 1);
    const double terminal = (lq.bM_t1.size() == qT.size() ? lq.bM_t1.dot(qT) : 0.0) + qT.dot(lq.M2 * qT);
    return trapezoid(lq.grid, f) + terminal;
}

ControlSolution closed_loop_simulate(const linred::ReducedLinearModel& model, const RiccatiSolution& riccati,
                                     const LQData& lq, const Eigen::VectorXd& q0, int metric_dof,
                                     const SolverOptions& opts) {
    require_realified(model);
    const int d = model.dim();
    if (q0.size() != d) throw PreconditionError("closed_loop_simulate: q0 has the wrong dimension");
    if (riccati.s.size() == 0) throw PreconditionError("closed_loop_simulate: compensation vector missing");
    if (metric_dof < 0 || metric_dof >= lq.Wp.rows()) throw PreconditionError("closed_loop_simulate: bad metric DOF");
    const SampledSignal b{lq.grid, lq.b, {}, opts.interpolation};
    auto rhs = [&](const ode::State& x, ode::State& dx, double t) {
        Eigen::Map<const Eigen::VectorXd> q(x.data(), d);
        const Eigen::VectorXd u = control_input(model, lq, riccati, q, t);
        const Eigen::VectorXd r = model.Lambda_r * q + model.B_r * u + b.at(t);
        dx.assign(r.data(), r.data() + r.size());
    };
    ode::Options o;
    o.rel_tol = opts.rel_tol;
    o.abs_tol = opts.abs_tol;
    o.initial_step = 1e-3 * (lq.t1() - lq.t0());
    const auto states = ode::integrate_on_grid(rhs, to_state(q0), lq.grid, o);

    ControlSolution sol;
    sol.grid = lq.grid;
    const auto G = static_cast<Eigen::Index>(lq.grid.size());
    sol.q.resize(d, G);
    sol.u.resize(model.inputs(), G);
    for (Eigen::Index k = 0; k < G; ++k) {
        sol.q.col(k) = Eigen::Map<const Eigen::VectorXd>(states[static_cast<std::size_t>(k)].data(), d);
        sol.u.col(k) = control_input(model, lq, riccati, sol.q.col(k), lq.grid[static_cast<std::size_t>(k)]);
        if (!sol.u.col(k).allFinite()) {
            std::ostringstream msg;
            msg << "non-finite control at t = " << lq.grid[static_cast<std::size_t>(k)];
            throw NumericalError(msg.str());
        }
    }
    sol.z_pred = lq.Wp + lq.epsilon * model.V_r * sol.q;
    sol.segment_boundaries = {lq.t0(), lq.t1()};
    sol.metrics.reduced_objective = reduced_objective(lq, sol.q, sol.u);
    sol.metrics.objective_value = sol.metrics.reduced_objective + trapezoid(lq.grid, lq.a) + lq.a_t1;
    sol.metrics.peak_controlled_amplitude = sol.z_pred.row(metric_dof).cwiseAbs().maxCoeff();
    sol.segments.push_back({lq.t0(), lq.t1(), sol.metrics, 0.0});
    return sol;
}

FullResponse validate_full(const mech::FirstOrderSystem& full, std::span<const double> times, const Eigen::MatrixXd& u,
                           const Eigen::VectorXd& z0, double rel_tol, double abs_tol) {
    if (times.size() < 2) throw PreconditionError("validate_full: need at least two time samples");
    if (z0.size() != full.N) throw PreconditionError("validate_full: z0 has the wrong dimension");
    if (u.cols() != static_cast<Eigen::Index>(times.size()) || u.rows() != full.inputs())
        throw PreconditionError("validate_full: control samples do not cover the time grid");
    Eigen::SparseLU<mech::SparseMatrix> lu;
    lu.compute(full.B);
    if (lu.info() != Eigen::Success) throw NumericalError("validate_full: B is singular");
    const SampledSignal us{std::vector<double>(times.begin(), times.end()), u, {}, Interpolation::linear};
    auto rhs = [&](const ode::State& x, ode::State& dx, double t) {
        Eigen::Map<const Eigen::VectorXd> z(x.data(), full.N);
        const Eigen::VectorXd r = lu.solve(full.rhs(z, t, us.at(t)));
        dx.assign(r.data(), r.data() + r.size());
    };
    ode::Options o;
    o.rel_tol = rel_tol;
    o.abs_tol = abs_tol;
    o.initial_step = 1e-3 * (times.back() - times.front());
    const auto states = ode::integrate_on_grid(rhs, to_state(z0), times, o);
    FullResponse out;
    out.times.assign(times.begin(), times.end());
    out.z.resize(full.N, static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < states.size(); ++k)
        out.z.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(states[k].data(), full.N);
    return out;
}

ControlSolution receding_horizon(const mech::FirstOrderSystem& full, const ssm::SSMModel& ssm,
                                 const linred::ReducedLinearModel& model, const LQWeights& weights,
                                 const Eigen::VectorXd& z0, const std::vector<double>& boundaries,
                                 const RecedingOptions& opts) {
    if (boundaries.size() < 2) throw PreconditionError("receding_horizon: need at least the two horizon ends");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
        if (!(boundaries[i] > boundaries[i - 1]))
            throw PreconditionError("receding_horizon: boundaries must be strictly increasing");
    if (opts.nodes_per_segment < 2) throw PreconditionError("receding_horizon: need at least two nodes per segment");
    const int obs = opts.metric_dof;
    if (obs < 0 || obs >= full.N) throw PreconditionError("receding_horizon: bad metric DOF");

    ControlSolution out;
    out.segment_boundaries = boundaries;
    std::vector<Eigen::MatrixXd> us, qs, zp, zf;
    Eigen::VectorXd z_true = z0;
    Eigen::VectorXd prev_end;
    double objective = 0.0, reduced = 0.0;
    for (std::size_t seg = 0; seg + 1 < boundaries.size(); ++seg) {
        const double t0 = boundaries[seg], t1 = boundaries[seg + 1];
        const auto grid = ode::uniform_grid(t0, t1, opts.nodes_per_segment);
        const Eigen::VectorXcd p0 = ssm::project_to_master(ssm.master, full.B, z_true);
        ssm::SimulationOptions so;
        so.samples = opts.nodes_per_segment;
        const auto p_traj = ssm::simulate_reduced(ssm, p0, t0, t1, so);
        const LQData lq = assemble_lq(weights, model, ssm, p_traj, full.epsilon, grid);
        RiccatiSolution ric = solve_riccati(model, lq, opts.solver);
        solve_compensation(model, lq, ric, opts.solver);
        const Eigen::VectorXd q0 = linred::reduced_initial_condition(model, full.B, z_true, lq.Wp.col(0), full.epsilon);
        ControlSolution part = closed_loop_simulate(model, ric, lq, q0, obs, opts.solver);

        SegmentReport rep = part.segments.front();
        for (const auto& P : ric.P) {
            const double nP = P.norm();
            if (nP > 0.0) rep.riccati_asymmetry = std::max(rep.riccati_asymmetry, (P - P.transpose()).norm() / nP);
        }
        Eigen::MatrixXd shown = part.z_pred;
        if (opts.validate) {
            const FullResponse fr = validate_full(full, grid, part.u, z_true);
            const Eigen::VectorXd err = (fr.z.row(obs) - part.z_pred.row(obs)).transpose();
            rep.metrics.rms_prediction_error = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
            rep.metrics.peak_controlled_amplitude = fr.z.row(obs).cwiseAbs().maxCoeff();
            shown = fr.z;
            zf.push_back(fr.z);
            z_true = fr.z.col(fr.z.cols() - 1);
        } else {
            z_true = part.z_pred.col(part.z_pred.cols() - 1);
        }
        if (prev_end.size() != 0) rep.state_jump = (shown.col(0) - prev_end).norm();
        prev_end = shown.col(shown.cols() - 1);
        objective += rep.metrics.objective_value;
        reduced += rep.metrics.reduced_objective;
        out.segments.push_back(rep);
        out.grid.insert(out.grid.end(), grid.begin(), grid.end());
        us.push_back(part.u);
        qs.push_back(part.q);
        zp.push_back(part.z_pred);
    }
    auto hcat = [](const std::vector<Eigen::MatrixXd>& parts) {
        Eigen::Index cols = 0;
        for (const auto& p : parts) cols += p.cols();
        Eigen::MatrixXd M(parts.front().rows(), cols);
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            M.middleCols(c, p.cols()) = p;
            c += p.cols();
        }
        return M;
    };
    out.u = hcat(us);
    out.q = hcat(qs);
    out.z_pred = hcat(zp);
    out.metrics.objective_value = objective;
    out.metrics.reduced_objective = reduced;
    if (opts.validate) {
        out.z_full = hcat(zf);
        const Eigen::VectorXd err = (out.z_full->row(obs) - out.z_pred.row(obs)).transpose();
        out.metrics.rms_prediction_error = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
        out.metrics.peak_controlled_amplitude = out.z_full->row(obs).cwiseAbs().maxCoeff();
    } else {
        out.metrics.peak_controlled_amplitude = out.z_pred.row(obs).cwiseAbs().maxCoeff();
    }
    return out;
}

void write_control_csv(std::ostream& out, const ControlSolution& sol) {
    out << "t";
    for (Eigen::Index i = 0; i < sol.u.rows(); ++i) out << ",u" << i + 1;
    out << '\n';
    for (std::size_t k = 0; k < sol.grid.size(); ++k) put_row(out, sol.grid[k], sol.u.col(static_cast<Eigen::Index>(k)));
}

void write_response_csv(std::ostream& out, const ControlSolution& sol, const std::vector<int>& dofs) {
    for (int d : dofs)
        if (d < 0 || d >= sol.z_pred.rows()) throw PreconditionError("write_response_csv: DOF out of range");
    out << "t";
    for (int d : dofs) out << ",pred_x" << d + 1;
    if (sol.z_full)
        for (int d : dofs) out << ",full_x" << d + 1;
    out << '\n';
    const Eigen::Index w = static_cast<Eigen::Index>(dofs.size());
    Eigen::VectorXd row(sol.z_full ? 2 * w : w);
    for (std::size_t k = 0; k < sol.grid.size(); ++k) {
        const auto c = static_cast<Eigen::Index>(k);
        for (Eigen::Index j = 0; j < w; ++j) {
            row(j) = sol.z_pred(dofs[static_cast<std::size_t>(j)], c);
            if (sol.z_full) row(w + j) = (*sol.z_full)(dofs[static_cast<std::size_t>(j)], c);
        }
        put_row(out, sol.grid[k], row);
    }
}

void write_summary(std::ostream& out, const ControlSolution& sol) {
    char buf[512];
    auto kv = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%s = %.17g\n", key, v);
        out << buf;
    };
    kv("objective_value", sol.metrics.objective_value);
    kv("reduced_objective", sol.metrics.reduced_objective);
    kv("rms_prediction_error", sol.metrics.rms_prediction_error);
    kv("peak_controlled_amplitude", sol.metrics.peak_controlled_amplitude);
    out << "validated = " << (sol.z_full ? "true" : "false") << '\n';
    out << "segment_boundaries =";
    for (double t : sol.segment_boundaries) {
        std::snprintf(buf, sizeof buf, " %.17g", t);
        out << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < sol.segments.size(); ++i) {
        const auto& s = sol.segments[i];
        std::snprintf(buf, sizeof buf,
                      "segment %zu: t0 = %.17g, t1 = %.17g, rms_prediction_error = %.17g, peak = %.17g, "
                      "objective = %.17g, state_jump = %.17g, riccati_asymmetry = %.17g\n",
                      i + 1, s.t0, s.t1, s.metrics.rms_prediction_error, s.metrics.peak_controlled_amplitude,
                      s.metrics.objective_value, s.state_jump, s.riccati_asymmetry);
        out << buf;
    }
}

} // namespace ssmc::elqr
