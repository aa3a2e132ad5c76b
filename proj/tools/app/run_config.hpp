#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssmc/linred.hpp"
#include "ssmc/polynomial.hpp"

namespace ssmc::app {

// Either scale * I, per-block scales over (x, x'), an explicit diagonal, or a dense matrix.
struct WeightSpec {
    double scale = 0.0;
    std::optional<double> displacement_scale, velocity_scale;
    std::vector<double> diagonal;
    std::optional<Eigen::MatrixXd> matrix;

    Eigen::MatrixXd expand(int rows, int dofs, const std::string& name) const;
};

struct RunConfig {
    std::filesystem::path source;     // config file
    std::filesystem::path model_path; // resolved against the config directory
    int eig_count = 0;                // 0: min(10, n)
    std::vector<int> master_pairs{1};
    int ssm_order = 3;
    double res_tol = 0.05;
    double residual_min = 0.01, residual_max = 0.1;
    int residual_count = 10;

    linred::Metric metric = linred::Metric::mhsv;
    std::optional<double> threshold;
    int m_hat = 0; // 0: default
    std::vector<int> forced_pairs;

    WeightSpec Q, R, M;
    std::optional<double> epsilon;

    std::vector<cplx> p0;       // initial reduced coordinates, conjugate pairs
    std::vector<double> z0;     // or an explicit full state

    double t0 = 0.0, t1 = 10.0;
    std::vector<double> boundaries; // interior
    double design_step = 0.0;       // 0: nodes_per_segment
    std::size_t nodes_per_segment = 2000;
    double output_step = 0.0;       // 0: every design node

    std::vector<int> observe;  // 1-based DOFs for response.csv
    int metric_dof = 1;        // 1-based
    std::uint64_t seed = 0;

    // Optional checks that turn into exit code 4.
    std::optional<double> peak_ratio;     // controlled / uncontrolled peak on the window
    double peak_window_t0 = 0.0, peak_window_t1 = 0.0;
    std::optional<double> rms_fraction;   // last-segment RMS / reference amplitude
    std::optional<double> reference_amplitude;

    double threshold_or_default() const;
    std::vector<double> all_boundaries() const;
};

// Throws ConfigError with the offending key.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& source = {});
RunConfig load_run_config(const std::filesystem::path& path);

// "20,40.5" -> {20, 40.5}
std::vector<double> parse_boundaries(const std::string& text);
linred::Metric parse_metric(const std::string& text);
std::string metric_name(linred::Metric m);

} // namespace ssmc::app
