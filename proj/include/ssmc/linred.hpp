#pragma once

#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/mechmodel.hpp"
#include "ssmc/spectral.hpp"

namespace ssmc::linred {

enum class Metric { dcgain, mhsv };

struct ModalRanking {
    int pair_index = 0; // 1-based, as in the eigenpair list
    double frequency = 0.0; // |Im lambda|, rad/s
    double dcgain = 0.0;
    double mhsv = 0.0;
    double normalized_dcgain = 0.0;
    double normalized_mhsv = 0.0;
    bool stable = true;
};

// Static gain of one mode (pair) -(C v)(u^* Bext)/lambda + conjugate, spectral norm.
double pair_dcgain(const spectral::EigenPair& pair, const Eigen::MatrixXd& Bext, const Eigen::MatrixXd& C);
// sqrt of the largest singular value of Wc Wo for the modal realization of one pair.
double pair_mhsv(const spectral::EigenPair& pair, const Eigen::MatrixXd& Bext, const Eigen::MatrixXd& C);

// Both metrics for the first m_hat pairs, normalized over the stable ones.
// Unstable pairs must appear in `forced` (1-based indices); they are marked
// unstable and carry zero metrics. `parallel` spreads pairs over threads.
std::vector<ModalRanking> rank_modes(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                     const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced = {},
                                     bool parallel = true);
std::vector<ModalRanking> dcgains(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                  const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced = {});
std::vector<ModalRanking> mhsvs(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced = {});

// Forced and unstable pairs first, then stable pairs by descending normalized
// metric (ties by ascending index) until the cumulative metric reaches
// `threshold`. Returns ascending 1-based pair indices.
std::vector<int> select_basis(const std::vector<ModalRanking>& rankings, Metric metric, double threshold,
                              const std::vector<int>& forced = {});

double default_threshold(Metric metric);
int default_m_hat(int n);

// Displacement rows of the actuator placement: C = [D^T 0].
Eigen::MatrixXd collocated_observation(const mech::FirstOrderSystem& fo);

struct ReducedLinearModel {
    std::vector<int> selection;
    std::vector<spectral::EigenPair> pairs; // selected pairs, in selection order
    Eigen::VectorXcd lambda;                // complex diagonal, conjugates adjacent
    Eigen::MatrixXcd U, V;                  // N x dim, columns (v1, conj v1, ...)
    Eigen::MatrixXcd Bhat;                  // U^* Bext
    Eigen::MatrixXd C_obs;
    mech::ForcingSignal Fext;

    // Real coordinates (sqrt2 Re q, sqrt2 Im q) per pair; filled by realify().
    bool realified = false;
    Eigen::MatrixXd Lambda_r, B_r, U_r, V_r;

    int dim() const { return static_cast<int>(lambda.size()); }
    int inputs() const { return static_cast<int>(Bhat.cols()); }
    Eigen::VectorXcd forcing_complex(double t) const;
    // U_r^T Fext(t); requires realified.
    Eigen::VectorXd forcing(double t) const;
};

// Selection entries are 1-based indices into `pairs`.
ReducedLinearModel build_reduced_linear(std::span<const spectral::EigenPair> pairs, const std::vector<int>& selection,
                                        const Eigen::MatrixXd& Bext, const mech::ForcingSignal& Fext,
                                        const Eigen::MatrixXd& C_obs);

ReducedLinearModel realify(ReducedLinearModel model);

// U^* B (z0 - W(p0)) / epsilon, complex or realified per the model.
Eigen::VectorXcd reduced_initial_condition_complex(const ReducedLinearModel& model, const mech::SparseMatrix& B,
                                                   const Eigen::VectorXd& z0, const Eigen::VectorXd& W_p0,
                                                   double epsilon);
Eigen::VectorXd reduced_initial_condition(const ReducedLinearModel& model, const mech::SparseMatrix& B,
                                          const Eigen::VectorXd& z0, const Eigen::VectorXd& W_p0, double epsilon);

struct HinfCheck {
    double measured_gap = 0.0;
    double bound = 0.0;
    double worst_frequency = 0.0;
    bool holds() const { return measured_gap <= bound * (1.0 + 1e-9) + 1e-14; }
};

// Sweeps |G(iw) - Ghat(iw)|_2 with G = C (iw B - A)^-1 Bext from the full
// pencil and Ghat the modal sum over the selected pairs; the bound is
// 4 sum sigma^M over the pairs of `pairs` not in the selection. `pairs` should
// cover the whole spectrum for the bound to apply.
HinfCheck hinf_bound_check(const mech::FirstOrderSystem& fo, std::span<const spectral::EigenPair> pairs,
                           const std::vector<int>& selection, const Eigen::MatrixXd& C,
                           std::span<const double> omegas);
// 200-point log grid spanning the spectrum plus every |Im lambda| and 0.
std::vector<double> default_frequency_grid(std::span<const spectral::EigenPair> pairs);

// pair_index, frequency, dcgain, mhsv, normalized_dcgain, normalized_mhsv, selected
void write_ranking_csv(std::ostream& out, const std::vector<ModalRanking>& rankings, const std::vector<int>& selection);

} // namespace ssmc::linred
