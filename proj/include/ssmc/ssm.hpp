#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/mechmodel.hpp"
#include "ssmc/polynomial.hpp"
#include "ssmc/spectral.hpp"

namespace ssmc::ssm {

// Autonomous SSM z = W(p), p' = R(p) as truncated power series over the
// multi-indices of `set` (dimension 2m, ordered as the master columns).
struct SSMModel {
    int order = 0;
    spectral::MasterSubspace master;
    MultiIndexSet set;
    Eigen::MatrixXcd W; // N x set.size()
    Eigen::MatrixXcd R; // 2m x set.size()
    spectral::ResonanceSet resonances;
    double res_tol = 0.05;

    int m() const { return master.m(); }
    int dim() const { return master.dim(); }
    int N() const { return static_cast<int>(W.rows()); }
};

struct SSMOptions {
    double res_tol = 0.05;
    // Coefficient systems up to this size use a dense LU.
    int dense_threshold = 2000;
    // Non-resonant coefficient systems below this reciprocal condition are rejected.
    double min_rcond = 1e-13;
    // Solve the multi-indices of one degree concurrently.
    bool parallel = true;
};

SSMModel compute_autonomous_ssm(const mech::FirstOrderSystem& fo, const spectral::MasterSubspace& master, int order,
                                const SSMOptions& opts = {});

// Throws PreconditionError unless p(2i+1) == conj(p(2i)) up to roundoff.
void require_conjugate_symmetric(const Eigen::VectorXcd& p);

Eigen::VectorXcd eval_parameterization_complex(const SSMModel& ssm, const Eigen::VectorXcd& p);
// Real state W(p); the imaginary part is checked against 1e-9 |Re W(p)| and dropped.
Eigen::VectorXd eval_parameterization(const SSMModel& ssm, const Eigen::VectorXcd& p);
// Column j = W(P.col(j)), using the parallel expansion kernel.
Eigen::MatrixXd eval_parameterization_batch(const SSMModel& ssm, const Eigen::MatrixXcd& P);

Eigen::VectorXcd eval_reduced_field(const SSMModel& ssm, const Eigen::VectorXcd& p);
// DW(p) R(p)
Eigen::VectorXcd eval_tangent_flow(const SSMModel& ssm, const Eigen::VectorXcd& p);

// p0 = U^* B z0, conjugate-symmetrized by averaging each pair.
Eigen::VectorXcd project_to_master(const spectral::MasterSubspace& master, const mech::SparseMatrix& B,
                                   const Eigen::VectorXd& z0);

struct ReducedTrajectory {
    std::vector<double> times;
    Eigen::MatrixXcd p;  // 2m x T
    Eigen::MatrixXcd dp; // R(p) at each node

    // Cubic Hermite interpolation between nodes using the stored field values.
    Eigen::VectorXcd at(double t) const;
    double t0() const { return times.front(); }
    double t1() const { return times.back(); }
};

struct SimulationOptions {
    std::size_t samples = 2001;
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
};

// Integrates p' = R(p) on a uniform grid of `samples` nodes over [t0, t1]. Only
// the representative coordinates are integrated, so conjugate symmetry holds
// exactly at every sample.
ReducedTrajectory simulate_reduced(const SSMModel& ssm, const Eigen::VectorXcd& p0, double t0, double t1,
                                   const SimulationOptions& opts = {});

// (a, |B DW R - A W - F(W)|) at p = (a, ..., a).
std::vector<std::pair<double, double>> invariance_residual(const mech::FirstOrderSystem& fo, const SSMModel& ssm,
                                                           const std::vector<double>& amplitudes);

// Least-squares slope of log(residual) against log(a).
double loglog_slope(const std::vector<std::pair<double, double>>& table);

std::string ssm_to_json(const SSMModel& ssm, const std::string& model_hash = {});
SSMModel ssm_from_json(const std::string& text, std::string* model_hash = nullptr);

// t, Re p1, Im p1, ..., Re p2m, Im p2m
void write_trajectory_csv(std::ostream& out, const ReducedTrajectory& traj);

} // namespace ssmc::ssm
