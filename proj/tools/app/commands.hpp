#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "ssmc/elqr.hpp"
#include "ssmc/mechmodel.hpp"
#include "ssmc/spectral.hpp"
#include "ssmc/ssm.hpp"

namespace ssmc::app {

struct CommandOptions {
    std::filesystem::path config;
    bool fresh = false;
    std::optional<std::string> metric;
    std::optional<double> threshold;
    std::optional<std::string> boundaries;
    bool no_validate = false;
    std::optional<std::filesystem::path> out;
};

// FNV-1a 64-bit, as 16 hex digits.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

// Config with command-line overrides applied.
RunConfig effective_config(const CommandOptions& opts);
std::filesystem::path output_dir(const CommandOptions& opts, const RunConfig& cfg);

// Everything derived from the model file.
struct Workspace {
    RunConfig cfg;
    std::filesystem::path out;
    std::string model_hash;
    mech::SecondOrderSystem model;
    mech::FirstOrderSystem fo;
    std::vector<spectral::EigenPair> pairs;

    int eig_count() const;
};
Workspace open_workspace(const CommandOptions& opts);

struct SelectionArtifact {
    std::string model_hash;
    std::string settings;
    std::vector<int> selection;
    double dcgain_sum = 0.0, mhsv_sum = 0.0;
};

std::string ssm_settings(const RunConfig& cfg, int eig_count);
std::string selection_settings(const RunConfig& cfg, int eig_count);

int cmd_eig(const CommandOptions& opts, std::ostream& log);
int cmd_ssm(const CommandOptions& opts, std::ostream& log);
int cmd_select(const CommandOptions& opts, std::ostream& log);
int cmd_control(const CommandOptions& opts, std::ostream& log);
int cmd_validate(const CommandOptions& opts, std::ostream& log);
// Writes chain_model.json and chain.json into the output directory.
int cmd_chain_demo(const CommandOptions& opts, std::ostream& log);

// Initial full state from initial.z0, or W(p0) on the SSM.
Eigen::VectorXd initial_state(const RunConfig& cfg, const ssm::SSMModel& ssm, int N);

// Columns of `sol` kept when printing every `step` time units (segment ends always kept).
std::vector<Eigen::Index> output_columns(const elqr::ControlSolution& sol, double step);

// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e);

} // namespace ssmc::app
