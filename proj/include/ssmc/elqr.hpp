#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/linred.hpp"
#include "ssmc/mechmodel.hpp"
#include "ssmc/ssm.hpp"

namespace ssmc::elqr {

enum class Interpolation { linear, cubic };

// Column-sampled vector signal on a strictly increasing grid. Cubic mode uses
// Hermite segments with the stored derivatives, or central differences when
// none are stored.
struct SampledSignal {
    std::vector<double> grid;
    Eigen::MatrixXd values;      // rows x grid.size()
    Eigen::MatrixXd derivatives; // empty or same shape as values
    Interpolation mode = Interpolation::linear;

    Eigen::VectorXd at(double t) const;
    Eigen::Index rows() const { return values.rows(); }
};

struct LQWeights {
    Eigen::MatrixXd Q, R_hat, M_hat;

    LQWeights() = default;
    // Checks symmetry, Q and M_hat positive semidefinite and R_hat positive definite.
    LQWeights(Eigen::MatrixXd Q, Eigen::MatrixXd R_hat, Eigen::MatrixXd M_hat);
};

struct LQData {
    std::vector<double> grid;
    Eigen::MatrixXd Q2, R_hat, M2;
    Eigen::MatrixXd bQ;   // 2l x grid
    Eigen::VectorXd bM_t1;
    Eigen::MatrixXd b;    // 2l x grid, realified forcing
    Eigen::VectorXd a;    // W^T Q W on the grid
    double a_t1 = 0.0;    // W(p(t1))^T M_hat W(p(t1))
    Eigen::MatrixXd Wp;   // N x grid, W(p(t))
    double epsilon = 1.0;

    double t0() const { return grid.front(); }
    double t1() const { return grid.back(); }
};

struct SolverOptions {
    Interpolation interpolation = Interpolation::linear;
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    // |P| beyond this is reported as a finite-time escape.
    double escape_limit = 1e12;
};

struct RiccatiSolution {
    std::vector<double> grid;
    std::vector<Eigen::MatrixXd> P;  // per node, symmetric
    std::vector<Eigen::MatrixXd> dP; // Riccati right-hand side per node
    Eigen::MatrixXd s;               // 2l x grid; empty until solve_compensation
    Eigen::MatrixXd ds;
    Interpolation interpolation = Interpolation::linear;

    Eigen::MatrixXd P_at(double t) const;
    Eigen::VectorXd s_at(double t) const;
};

struct ControlMetrics {
    double rms_prediction_error = 0.0; // metric DOF, full vs predicted (0 without full response)
    double peak_controlled_amplitude = 0.0;
    double objective_value = 0.0;      // including the constant terms
    double reduced_objective = 0.0;    // without them
};

struct SegmentReport {
    double t0 = 0.0, t1 = 0.0;
    ControlMetrics metrics;
    double state_jump = 0.0; // |z_true(t0) - previous segment end| (0 for the first)
    double riccati_asymmetry = 0.0; // max over nodes of |P - P^T| / |P|
};

struct ControlSolution {
    std::vector<double> grid; // boundary times appear twice in receding runs
    Eigen::MatrixXd u;        // q x grid
    Eigen::MatrixXd q;        // 2l x grid
    Eigen::MatrixXd z_pred;   // N x grid
    std::optional<Eigen::MatrixXd> z_full;
    std::vector<double> segment_boundaries;
    std::vector<SegmentReport> segments;
    ControlMetrics metrics;
};

// Q2, bQ, M2, bM, b and a on `grid` from the trajectory p(t) on the SSM.
LQData assemble_lq(const LQWeights& weights, const linred::ReducedLinearModel& model, const ssm::SSMModel& ssm,
                   const ssm::ReducedTrajectory& p_traj, double epsilon, std::span<const double> grid);

// Backward sweep of P' = -P L - L^T P - Q2 + P B R^-1 B^T P from P(t1) = M2 on the realified model.
RiccatiSolution solve_riccati(const linred::ReducedLinearModel& model, const LQData& lq, const SolverOptions& opts = {});
// Backward sweep of s' = (P B R^-1 B^T - L^T) s + bQ + 2 P b from s(t1) = -bM(t1); fills riccati.s.
void solve_compensation(const linred::ReducedLinearModel& model, const LQData& lq, RiccatiSolution& riccati,
                        const SolverOptions& opts = {});

// Right-hand side of the Riccati equation at P.
Eigen::MatrixXd riccati_rhs(const linred::ReducedLinearModel& model, const LQData& lq, const Eigen::MatrixXd& P);

// u = -R^-1 B^T P q + R^-1 B^T s / 2
Eigen::VectorXd control_input(const linred::ReducedLinearModel& model, const LQData& lq, const RiccatiSolution& riccati,
                              const Eigen::VectorXd& q, double t);
// Same law with q recovered from a measured state: q = U_r^T B (z - W(p(t))) / epsilon.
Eigen::VectorXd control_input_physical(const linred::ReducedLinearModel& model, const LQData& lq,
                                       const RiccatiSolution& riccati, const mech::SparseMatrix& B,
                                       const Eigen::VectorXd& z, const Eigen::VectorXd& Wp, double t);

// Trapezoidal J~ for given samples of q and u on lq.grid.
double reduced_objective(const LQData& lq, const Eigen::MatrixXd& q, const Eigen::MatrixXd& u);

// Forward closed loop q' = L q + B u(t, q) + b(t) on lq.grid with reconstruction z = W(p) + eps V q.
ControlSolution closed_loop_simulate(const linred::ReducedLinearModel& model, const RiccatiSolution& riccati,
                                     const LQData& lq, const Eigen::VectorXd& q0, int metric_dof = 0,
                                     const SolverOptions& opts = {});

struct FullResponse {
    std::vector<double> times;
    Eigen::MatrixXd z; // N x times
};

// Integrates the full lifted model with u interpolated linearly from the samples.
FullResponse validate_full(const mech::FirstOrderSystem& full, std::span<const double> times, const Eigen::MatrixXd& u,
                           const Eigen::VectorXd& z0, double rel_tol = 1e-10, double abs_tol = 1e-12);

struct RecedingOptions {
    std::size_t nodes_per_segment = 2000;
    // Seed later segments with the full-model state; otherwise with the prediction.
    bool validate = true;
    int metric_dof = 0;
    SolverOptions solver;
};

// `boundaries` includes both ends of the horizon.
ControlSolution receding_horizon(const mech::FirstOrderSystem& full, const ssm::SSMModel& ssm,
                                 const linred::ReducedLinearModel& model, const LQWeights& weights,
                                 const Eigen::VectorXd& z0, const std::vector<double>& boundaries,
                                 const RecedingOptions& opts = {});

// t, u1, ..., uq
void write_control_csv(std::ostream& out, const ControlSolution& sol);
// t, then predicted and (if present) full values of each listed DOF.
void write_response_csv(std::ostream& out, const ControlSolution& sol, const std::vector<int>& dofs);
void write_summary(std::ostream& out, const ControlSolution& sol);

} // namespace ssmc::elqr
