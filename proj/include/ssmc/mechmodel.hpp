#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ssmc/polynomial.hpp"

namespace ssmc::mech {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class Waveform { sine, cosine };

// amplitude * wave(omega * t + phase) * distribution
struct ForcingChannel {
    Eigen::VectorXd distribution;
    double amplitude = 1.0;
    double angular_frequency = 0.0; // rad/s
    double phase = 0.0;             // rad
    Waveform waveform = Waveform::sine;

    double scalar(double t) const;
};

// Finite sum of sinusoidal load patterns.
struct ForcingSignal {
    int dim = 0;
    std::vector<ForcingChannel> channels;

    Eigen::VectorXd eval(double t) const;
    bool empty() const { return channels.empty(); }
    // Zero-pads every distribution vector to `new_dim` (load enters the first rows).
    ForcingSignal padded(int new_dim) const;
    void validate() const;
};

// M x'' + Cd x' + K x + f(x, x') = epsilon (E(t) + D u)
struct SecondOrderSystem {
    int n = 0;
    SparseMatrix M, Cd, K;
    PolynomialMap f;    // dim_in = 2n over z = (x, x'), dim_out = n
    ForcingSignal E;
    Eigen::MatrixXd D;  // n x q actuator placement
    double epsilon = 1.0;

    int inputs() const { return static_cast<int>(D.cols()); }
    // Throws ModelError on any violated invariant.
    void validate() const;
};

// B z' = A z + F(z) + epsilon (Fext(t) + Bext u), z = (x, x').
struct FirstOrderSystem {
    int n = 0; // DOF count of the underlying second-order system
    int N = 0; // state dimension 2n
    SparseMatrix A, B;
    SparseMatrix mass; // M block, used for eigenvector normalization
    PolynomialMap F;
    ForcingSignal Fext;
    Eigen::MatrixXd Bext;
    double epsilon = 1.0;

    int inputs() const { return static_cast<int>(Bext.cols()); }
    // Right-hand side A z + F(z) + epsilon (Fext(t) + Bext u) (before applying B^-1).
    Eigen::VectorXd rhs(const Eigen::VectorXd& z, double t, const Eigen::VectorXd& u) const;
};

struct ChainParams {
    int n_masses = 10;
    double m = 1.0;
    double k = 1.0;
    double c = 0.1;
    double kappa = 0.5;
    std::vector<int> actuator_indices{1, 5}; // 1-based mass indices
    double epsilon = 0.001;
};

// Chain of equal masses between two walls with linear springs/dashpots
// k T, c T and cubic springs kappa * (elongation)^3. `forcing` must have
// dim = n_masses (or be empty).
SecondOrderSystem build_oscillator_chain(const ChainParams& params, ForcingSignal forcing = {});

// Load E(t) = D (sin(0.1 sqrt2 t), cos(0.1 sqrt3 t))^T used by the chain benchmark.
ForcingSignal benchmark_chain_forcing(const Eigen::MatrixXd& D);

// Cubic chain nonlinearity f_i = kappa ((x_i - x_{i-1})^3 - (x_{i+1} - x_i)^3)
// with x_0 = x_{n+1} = 0, evaluated directly (no monomial expansion).
Eigen::VectorXd chain_force_direct(const Eigen::VectorXd& x, double kappa);

FirstOrderSystem to_first_order(const SecondOrderSystem& sys);

std::string model_to_json(const SecondOrderSystem& sys);
SecondOrderSystem model_from_json(const std::string& text);
void save_model(const SecondOrderSystem& sys, const std::filesystem::path& path);
SecondOrderSystem load_model(const std::filesystem::path& path);

} // namespace ssmc::mech
