#pragma once

#include <complex>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/mechmodel.hpp"
#include "ssmc/polynomial.hpp"

namespace ssmc::spectral {

// One eigentriple A v = lambda B v, u^* A = lambda u^* B with u^* B v = 1.
// For a complex lambda this is the representative (Im lambda > 0) of a
// conjugate pair; conjugate() yields the partner by elementwise conjugation.
struct EigenPair {
    cplx lambda;
    Eigen::VectorXcd v;
    Eigen::VectorXcd u;
    int index = 0; // 1-based pair index in the returned ordering

    bool is_real() const { return lambda.imag() == 0.0; }
    EigenPair conjugate() const { return {std::conj(lambda), v.conjugate(), u.conjugate(), index}; }
    double damping_ratio() const { return std::abs(lambda) > 0.0 ? -lambda.real() / std::abs(lambda) : 0.0; }
    double frequency_hz() const;
    // |Re lambda| < 1e-10 |lambda|: the fixed point is numerically non-hyperbolic.
    bool near_zero_real_part() const { return std::abs(lambda.real()) < 1e-10 * std::abs(lambda); }
};

enum class Ordering { real_part_descending, frequency_ascending };

struct EigenOptions {
    // State dimensions up to this size use the dense solver.
    int dense_threshold = 2000;
    // Shift for the iterative path; eigenvalues nearest to it are found first.
    cplx shift{0.0, 0.0};
    double tolerance = 1e-10;
    int max_restarts = 200;
};

// Returns `count` modes (conjugate pairs represented once; real eigenvalues
// count as one mode each). Right vectors are phase-fixed so their
// largest-magnitude entry is real positive, then scaled so the displacement
// block satisfies phi^* M phi = 1 (unit 2-norm when no mass block is known);
// left vectors are scaled to u^* B v = 1.
std::vector<EigenPair> solve_modes(const mech::FirstOrderSystem& fo, int count, Ordering ordering,
                                   const EigenOptions& opts = {});

// Columns ordered (v1, conj v1, ..., vm, conj vm).
struct MasterSubspace {
    std::vector<EigenPair> pairs;
    Eigen::MatrixXcd V;
    Eigen::MatrixXcd U;
    Eigen::VectorXcd lambda;

    int m() const { return static_cast<int>(pairs.size()); }
    int dim() const { return 2 * m(); }
    static MasterSubspace from_pairs(std::vector<EigenPair> pairs);
};

struct ResonanceEntry {
    int target = 0;  // 0-based coordinate of lambda_E
    MultiIndex k;
    friend bool operator==(const ResonanceEntry&, const ResonanceEntry&) = default;
};

struct ResonanceSet {
    std::vector<ResonanceEntry> entries;

    bool contains(int target, const MultiIndex& k) const;
    // Targets j with (j, k) resonant, ascending.
    std::vector<int> targets_for(const MultiIndex& k) const;
};

// All (j, k) with 2 <= |k| <= max_order and |k . lambda_E - lambda_E[j]| <=
// rel_tol |lambda_E[j]|, plus the linear entries (j, e_j).
ResonanceSet detect_inner_resonances(const Eigen::VectorXcd& lambda_E, int max_order, double rel_tol = 0.05);

// Solves diag(d) W + W diag(d)^T + rhs = 0 elementwise. Requires Re(d) < 0.
Eigen::Matrix2cd solve_lyapunov_2x2(const Eigen::Vector2cd& d, const Eigen::Matrix2cd& rhs);

// index, re_lambda, im_lambda, damping_ratio, frequency_hz; one row per
// eigenvalue with conjugates adjacent.
void write_spectrum_csv(std::ostream& out, const std::vector<EigenPair>& modes);

} // namespace ssmc::spectral
