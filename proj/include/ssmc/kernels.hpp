#pragma once

// Data-parallel inner loops. Every kernel has a serial reference version used
// by the tests and the benchmark; the OpenMP version partitions work so each
// thread writes disjoint outputs in the same summation order as the serial
// one, so both produce bit-identical results.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/polynomial.hpp"

namespace ssmc::kernels {

void eval_polynomial_serial(const PolynomialMap& f, const Eigen::VectorXcd& z, Eigen::VectorXcd& out);
void eval_polynomial_omp(const PolynomialMap& f, const Eigen::VectorXcd& z, Eigen::VectorXcd& out);
void eval_polynomial_serial(const PolynomialMap& f, const Eigen::VectorXd& z, Eigen::VectorXd& out);
void eval_polynomial_omp(const PolynomialMap& f, const Eigen::VectorXd& z, Eigen::VectorXd& out);

Eigen::MatrixXcd compose_serial(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set,
                                int max_order);
Eigen::MatrixXcd compose_omp(const PolynomialMap& f, const Eigen::MatrixXcd& w, const MultiIndexSet& set,
                             int max_order);

// Columns j of the result are coeffs * monomials(p_j): evaluates a polynomial
// vector field at a batch of reduced states (one column of `points` each).
Eigen::MatrixXcd eval_expansion_serial(const Eigen::MatrixXcd& coeffs, const MultiIndexSet& set,
                                       const Eigen::MatrixXcd& points);
Eigen::MatrixXcd eval_expansion_omp(const Eigen::MatrixXcd& coeffs, const MultiIndexSet& set,
                                    const Eigen::MatrixXcd& points);

// Entry j: spectral norm of C (i w_j B - A)^-1 Bext - CV diag(1 / (i w_j - lambda)) UB,
// the gap between a full transfer function and a modal truncation.
std::vector<double> transfer_gap_serial(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& Bext,
                                        const Eigen::MatrixXcd& C, const Eigen::MatrixXcd& CV,
                                        const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& UB,
                                        std::span<const double> omegas);
std::vector<double> transfer_gap_omp(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, const Eigen::MatrixXcd& Bext,
                                     const Eigen::MatrixXcd& C, const Eigen::MatrixXcd& CV,
                                     const Eigen::VectorXcd& lambda, const Eigen::MatrixXcd& UB,
                                     std::span<const double> omegas);

} // namespace ssmc::kernels
