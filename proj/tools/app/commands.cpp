#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ssmc/errors.hpp"
#include "ssmc/linred.hpp"
#include "ssmc/ode.hpp"

namespace ssmc::app {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
}

int to_index0(int one_based, int size, const std::string& key) {
    if (one_based < 1 || one_based > size)
        throw ConfigError(key + ": index " + std::to_string(one_based) + " outside 1.." + std::to_string(size));
    return one_based - 1;
}

std::vector<spectral::EigenPair> pick_pairs(const Workspace& ws, const std::vector<int>& idx, const std::string& key) {
    std::vector<spectral::EigenPair> out;
    for (int i : idx) out.push_back(ws.pairs[static_cast<std::size_t>(to_index0(i, static_cast<int>(ws.pairs.size()), key))]);
    return out;
}

std::vector<double> amplitudes(const RunConfig& cfg) {
    std::vector<double> a;
    const double l0 = std::log(cfg.residual_min), l1 = std::log(cfg.residual_max);
    for (int i = 0; i < cfg.residual_count; ++i) a.push_back(std::exp(l0 + (l1 - l0) * i / (cfg.residual_count - 1)));
    return a;
}

ssm::SSMModel compute_ssm(const Workspace& ws) {
    const auto master = spectral::MasterSubspace::from_pairs(pick_pairs(ws, ws.cfg.master_pairs, "master_pairs"));
    ssm::SSMOptions so;
    so.res_tol = ws.cfg.res_tol;
    return ssm::compute_autonomous_ssm(ws.fo, master, ws.cfg.ssm_order, so);
}

void persist_ssm(const Workspace& ws, const ssm::SSMModel& s) {
    json j = json::parse(ssm::ssm_to_json(s, ws.model_hash));
    j["settings"] = ssm_settings(ws.cfg, ws.eig_count());
    open_out(ws.out / "ssm.json") << j.dump(1) << '\n';
}

// Loads ssm.json, refusing files built from another model or other settings.
ssm::SSMModel load_ssm(const Workspace& ws) {
    const fs::path p = ws.out / "ssm.json";
    if (!fs::exists(p)) throw ConfigError(p.string() + " is missing; run `ssm` first or pass --fresh");
    const std::string text = read_file(p);
    std::string hash;
    ssm::SSMModel s = ssm::ssm_from_json(text, &hash);
    const json j = json::parse(text);
    if (hash != ws.model_hash)
        throw ConfigError(p.string() + " was computed for a different model file; rerun `ssm` or pass --fresh");
    if (j.value("settings", std::string{}) != ssm_settings(ws.cfg, ws.eig_count()))
        throw ConfigError(p.string() + " was computed with other SSM settings; rerun `ssm` or pass --fresh");
    return s;
}

struct Ranked {
    std::vector<linred::ModalRanking> rankings;
    SelectionArtifact artifact;
};

int m_hat_of(const Workspace& ws) {
    return ws.cfg.m_hat > 0 ? ws.cfg.m_hat : std::min(linred::default_m_hat(ws.fo.n), ws.eig_count());
}

Ranked compute_selection(const Workspace& ws) {
    const Eigen::MatrixXd C = linred::collocated_observation(ws.fo);
    const int m_hat = m_hat_of(ws);
    if (m_hat > static_cast<int>(ws.pairs.size()))
        throw ConfigError("selection.m_hat: only " + std::to_string(ws.pairs.size()) + " pairs computed (raise eig_count)");
    Ranked r;
    r.rankings = linred::rank_modes(ws.pairs, ws.fo.Bext, C, m_hat, ws.cfg.forced_pairs);
    r.artifact.selection = linred::select_basis(r.rankings, ws.cfg.metric, ws.cfg.threshold_or_default(), ws.cfg.forced_pairs);
    r.artifact.model_hash = ws.model_hash;
    r.artifact.settings = selection_settings(ws.cfg, ws.eig_count());
    for (int i : r.artifact.selection) {
        const auto& rk = r.rankings[static_cast<std::size_t>(i - 1)];
        r.artifact.dcgain_sum += rk.normalized_dcgain;
        r.artifact.mhsv_sum += rk.normalized_mhsv;
    }
    return r;
}

void persist_selection(const Workspace& ws, const Ranked& r) {
    json j;
    j["model_hash"] = r.artifact.model_hash;
    j["settings"] = r.artifact.settings;
    j["selection"] = r.artifact.selection;
    j["normalized_dcgain_sum"] = r.artifact.dcgain_sum;
    j["normalized_mhsv_sum"] = r.artifact.mhsv_sum;
    open_out(ws.out / "selection.json") << j.dump(1) << '\n';
    auto csv = open_out(ws.out / "ranking.csv");
    linred::write_ranking_csv(csv, r.rankings, r.artifact.selection);
}

SelectionArtifact load_selection(const Workspace& ws) {
    const fs::path p = ws.out / "selection.json";
    if (!fs::exists(p)) throw ConfigError(p.string() + " is missing; run `select` first or pass --fresh");
    json j;
    try {
        j = json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    SelectionArtifact a;
    a.model_hash = j.value("model_hash", std::string{});
    a.settings = j.value("settings", std::string{});
    if (a.model_hash != ws.model_hash)
        throw ConfigError(p.string() + " was computed for a different model file; rerun `select` or pass --fresh");
    if (a.settings != selection_settings(ws.cfg, ws.eig_count()))
        throw ConfigError(p.string() + " was computed with other selection settings; rerun `select` or pass --fresh");
    a.selection = j.at("selection").get<std::vector<int>>();
    a.dcgain_sum = j.value("normalized_dcgain_sum", 0.0);
    a.mhsv_sum = j.value("normalized_mhsv_sum", 0.0);
    return a;
}

elqr::ControlSolution take_columns(const elqr::ControlSolution& sol, const std::vector<Eigen::Index>& cols) {
    elqr::ControlSolution out = sol;
    const auto n = static_cast<Eigen::Index>(cols.size());
    out.grid.resize(cols.size());
    out.u.resize(sol.u.rows(), n);
    out.q.resize(sol.q.rows(), n);
    out.z_pred.resize(sol.z_pred.rows(), n);
    if (sol.z_full) out.z_full = Eigen::MatrixXd(sol.z_full->rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index c = cols[static_cast<std::size_t>(j)];
        out.grid[static_cast<std::size_t>(j)] = sol.grid[static_cast<std::size_t>(c)];
        out.u.col(j) = sol.u.col(c);
        out.q.col(j) = sol.q.col(c);
        out.z_pred.col(j) = sol.z_pred.col(c);
        if (sol.z_full) out.z_full->col(j) = sol.z_full->col(c);
    }
    return out;
}

std::vector<int> observed_dofs(const RunConfig& cfg, int n) {
    std::vector<int> d;
    for (int k : cfg.observe.empty() ? std::vector<int>{cfg.metric_dof} : cfg.observe) d.push_back(to_index0(k, n, "observe"));
    return d;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    }
};

Table read_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError(p.string() + " is missing; run `control` first");
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(p.string() + " is empty");
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(p.string() + ": bad number '" + cell + "'");
            }
        }
        if (row.size() != t.header.size()) throw ConfigError(p.string() + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) throw ConfigError(p.string() + " has no data rows");
    return t;
}

} // namespace

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash(const fs::path& path) { return content_hash(read_file(path)); }

RunConfig effective_config(const CommandOptions& opts) {
    if (opts.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_run_config(opts.config);
    if (opts.metric) cfg.metric = parse_metric(*opts.metric);
    if (opts.threshold) {
        if (!(*opts.threshold >= 0.0 && *opts.threshold <= 1.0)) throw ConfigError("--threshold must lie in [0, 1]");
        cfg.threshold = *opts.threshold;
    }
    if (opts.boundaries) {
        cfg.boundaries = parse_boundaries(*opts.boundaries);
        double prev = cfg.t0;
        for (double b : cfg.boundaries) {
            if (!(b > prev) || !(b < cfg.t1)) throw ConfigError("--boundaries must be strictly increasing inside (t0, t1)");
            prev = b;
        }
    }
    return cfg;
}

fs::path output_dir(const CommandOptions& opts, const RunConfig& cfg) {
    fs::path out = opts.out ? *opts.out : cfg.source.parent_path() / "out";
    if (out.empty()) out = "out";
    fs::create_directories(out);
    return out;
}

int Workspace::eig_count() const {
    int c = cfg.eig_count > 0 ? cfg.eig_count : std::min(10, fo.n);
    c = std::max(c, cfg.m_hat);
    for (int p : cfg.master_pairs) c = std::max(c, p);
    for (int p : cfg.forced_pairs) c = std::max(c, p);
    return c;
}

Workspace open_workspace(const CommandOptions& opts) {
    Workspace ws;
    ws.cfg = effective_config(opts);
    ws.out = output_dir(opts, ws.cfg);
    ws.model_hash = file_hash(ws.cfg.model_path);
    ws.model = mech::load_model(ws.cfg.model_path);
    if (ws.cfg.epsilon) ws.model.epsilon = *ws.cfg.epsilon;
    ws.fo = mech::to_first_order(ws.model);
    ws.pairs = spectral::solve_modes(ws.fo, ws.eig_count(), spectral::Ordering::frequency_ascending);
    return ws;
}

std::string ssm_settings(const RunConfig& cfg, int eig_count) {
    json j;
    j["master_pairs"] = cfg.master_pairs;
    j["ssm_order"] = cfg.ssm_order;
    j["res_tol"] = cfg.res_tol;
    j["eig_count"] = eig_count;
    j["epsilon"] = cfg.epsilon ? json(*cfg.epsilon) : json();
    return j.dump();
}

std::string selection_settings(const RunConfig& cfg, int eig_count) {
    json j;
    j["metric"] = metric_name(cfg.metric);
    j["threshold"] = cfg.threshold_or_default();
    j["m_hat"] = cfg.m_hat;
    j["forced_pairs"] = cfg.forced_pairs;
    j["eig_count"] = eig_count;
    j["epsilon"] = cfg.epsilon ? json(*cfg.epsilon) : json();
    return j.dump();
}

int cmd_eig(const CommandOptions& opts, std::ostream& log) {
    const Workspace ws = open_workspace(opts);
    auto csv = open_out(ws.out / "spectrum.csv");
    spectral::write_spectrum_csv(csv, ws.pairs);
    for (int p : ws.cfg.master_pairs) {
        const auto& e = ws.pairs[static_cast<std::size_t>(to_index0(p, static_cast<int>(ws.pairs.size()), "master_pairs"))];
        if (e.is_real())
            log << "master pair " << p << ": " << g17(e.lambda.real()) << '\n';
        else
            log << "master pair " << p << ": " << g17(e.lambda.real()) << " +/- " << g17(std::abs(e.lambda.imag()))
                << "i\n";
    }
    log << "wrote " << (ws.out / "spectrum.csv").string() << '\n';
    return 0;
}

int cmd_ssm(const CommandOptions& opts, std::ostream& log) {
    const Workspace ws = open_workspace(opts);
    const ssm::SSMModel s = compute_ssm(ws);
    persist_ssm(ws, s);
    const auto table = ssm::invariance_residual(ws.fo, s, amplitudes(ws.cfg));
    auto csv = open_out(ws.out / "residual.csv");
    csv << "amplitude,residual\n";
    for (const auto& [a, r] : table) csv << g17(a) << ',' << g17(r) << '\n';
    log << "ssm order " << s.order << ", " << s.set.size() << " coefficients, " << s.resonances.entries.size()
        << " resonant terms\n";
    log << "residual slope = " << g17(ssm::loglog_slope(table)) << '\n';
    log << "wrote " << (ws.out / "ssm.json").string() << '\n';
    return 0;
}

int cmd_select(const CommandOptions& opts, std::ostream& log) {
    const Workspace ws = open_workspace(opts);
    const Ranked r = compute_selection(ws);
    persist_selection(ws, r);
    log << "metric = " << metric_name(ws.cfg.metric) << ", threshold = " << g17(ws.cfg.threshold_or_default()) << '\n';
    log << "selection =";
    for (int i : r.artifact.selection) log << ' ' << i;
    log << '\n';
    log << "normalized dcgain sum = " << g17(r.artifact.dcgain_sum) << '\n';
    log << "normalized mhsv sum = " << g17(r.artifact.mhsv_sum) << '\n';
    return 0;
}

Eigen::VectorXd initial_state(const RunConfig& cfg, const ssm::SSMModel& s, int N) {
    if (!cfg.z0.empty()) {
        if (static_cast<int>(cfg.z0.size()) != N)
            throw ConfigError("initial.z0: expected " + std::to_string(N) + " entries");
        return Eigen::Map<const Eigen::VectorXd>(cfg.z0.data(), N);
    }
    if (cfg.p0.empty()) return Eigen::VectorXd::Zero(N);
    if (static_cast<int>(cfg.p0.size()) != s.dim())
        throw ConfigError("initial.p0: expected " + std::to_string(s.dim()) + " entries");
    Eigen::VectorXcd p(s.dim());
    for (int i = 0; i < s.dim(); ++i) p(i) = cfg.p0[static_cast<std::size_t>(i)];
    try {
        ssm::require_conjugate_symmetric(p);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("initial.p0: ") + e.what());
    }
    return ssm::eval_parameterization(s, p);
}

std::vector<Eigen::Index> output_columns(const elqr::ControlSolution& sol, double step) {
    std::vector<Eigen::Index> cols;
    const auto n = static_cast<Eigen::Index>(sol.grid.size());
    if (step <= 0.0) {
        for (Eigen::Index k = 0; k < n; ++k) cols.push_back(k);
        return cols;
    }
    double next = sol.grid.front();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double t = sol.grid[static_cast<std::size_t>(k)];
        const bool seg_edge = k == 0 || k + 1 == n || sol.grid[static_cast<std::size_t>(k - 1)] == t ||
                              sol.grid[static_cast<std::size_t>(k + 1)] == t;
        if (seg_edge || t >= next - 1e-12 * std::max(1.0, std::abs(t))) {
            cols.push_back(k);
            while (next <= t + 1e-12 * std::max(1.0, std::abs(t))) next += step;
        }
    }
    return cols;
}

int cmd_control(const CommandOptions& opts, std::ostream& log) {
    const Workspace ws = open_workspace(opts);
    const RunConfig& cfg = ws.cfg;

    ssm::SSMModel s;
    SelectionArtifact sel;
    if (opts.fresh) {
        s = compute_ssm(ws);
        persist_ssm(ws, s);
        const Ranked r = compute_selection(ws);
        persist_selection(ws, r);
        sel = r.artifact;
    } else {
        s = load_ssm(ws);
        sel = load_selection(ws);
    }
    for (int i : sel.selection) to_index0(i, static_cast<int>(ws.pairs.size()), "selection");

    const Eigen::MatrixXd C = linred::collocated_observation(ws.fo);
    const auto rm = linred::realify(linred::build_reduced_linear(ws.pairs, sel.selection, ws.fo.Bext, ws.fo.Fext, C));
    const elqr::LQWeights weights(cfg.Q.expand(ws.fo.N, ws.fo.n, "weights.Q"),
                                  cfg.R.expand(ws.fo.inputs(), -1, "weights.R"),
                                  cfg.M.expand(ws.fo.N, ws.fo.n, "weights.M"));
    const Eigen::VectorXd z0 = initial_state(cfg, s, ws.fo.N);
    const std::vector<double> bounds = cfg.all_boundaries();

    elqr::RecedingOptions ro;
    ro.validate = !opts.no_validate;
    ro.metric_dof = to_index0(cfg.metric_dof, ws.fo.n, "metric_dof");
    ro.nodes_per_segment = cfg.nodes_per_segment;
    if (cfg.design_step > 0.0) {
        double longest = 0.0;
        for (std::size_t i = 1; i < bounds.size(); ++i) longest = std::max(longest, bounds[i] - bounds[i - 1]);
        ro.nodes_per_segment = static_cast<std::size_t>(std::ceil(longest / cfg.design_step - 1e-9)) + 1;
    }
    const std::vector<int> dofs = observed_dofs(cfg, ws.fo.n);

    const elqr::ControlSolution sol = elqr::receding_horizon(ws.fo, s, rm, weights, z0, bounds, ro);
    const elqr::ControlSolution shown = take_columns(sol, output_columns(sol, cfg.output_step));
    {
        auto u = open_out(ws.out / "u.csv");
        elqr::write_control_csv(u, shown);
        auto r = open_out(ws.out / "response.csv");
        elqr::write_response_csv(r, shown, dofs);
    }

    std::vector<std::string> failures;
    const double zscale = std::max(1.0, z0.norm());
    for (std::size_t i = 0; i < sol.segments.size(); ++i) {
        const auto& seg = sol.segments[i];
        if (!(seg.riccati_asymmetry <= 1e-10))
            failures.push_back("segment " + std::to_string(i + 1) + ": Riccati asymmetry " + g17(seg.riccati_asymmetry));
        if (ro.validate && !(seg.state_jump <= 1e-12 * zscale))
            failures.push_back("segment " + std::to_string(i + 1) + ": state jump " + g17(seg.state_jump));
    }
    if (!sol.u.allFinite() || !sol.z_pred.allFinite() || (sol.z_full && !sol.z_full->allFinite()))
        failures.push_back("non-finite control or response samples");

    std::ostringstream extra;
    extra << "model_hash = " << ws.model_hash << '\n';
    extra << "seed = " << cfg.seed << '\n';
    extra << "selection =";
    for (int i : sel.selection) extra << ' ' << i;
    extra << '\n';
    extra << "metric_dof = " << cfg.metric_dof << '\n';

    const int obs = ro.metric_dof;
    if (cfg.peak_ratio) {
        if (!sol.z_full) throw ConfigError("acceptance.peak_ratio needs validation (drop --no-validate)");
        const double w0 = cfg.peak_window_t1 > cfg.peak_window_t0 ? cfg.peak_window_t0 : cfg.t0;
        const double w1 = cfg.peak_window_t1 > cfg.peak_window_t0 ? cfg.peak_window_t1 : cfg.t1;
        const std::size_t nodes = (bounds.size() - 1) * ro.nodes_per_segment;
        const auto ug = ode::uniform_grid(cfg.t0, cfg.t1, nodes);
        const auto unc = elqr::validate_full(ws.fo, ug, Eigen::MatrixXd::Zero(ws.fo.inputs(), static_cast<Eigen::Index>(nodes)), z0);
        double pu = 0.0, pc = 0.0;
        for (std::size_t k = 0; k < unc.times.size(); ++k)
            if (unc.times[k] >= w0 && unc.times[k] <= w1) pu = std::max(pu, std::abs(unc.z(obs, static_cast<Eigen::Index>(k))));
        for (std::size_t k = 0; k < sol.grid.size(); ++k)
            if (sol.grid[k] >= w0 && sol.grid[k] <= w1)
                pc = std::max(pc, std::abs((*sol.z_full)(obs, static_cast<Eigen::Index>(k))));
        const double ratio = pu > 0.0 ? pc / pu : (pc > 0.0 ? INFINITY : 0.0);
        extra << "uncontrolled_peak = " << g17(pu) << '\n';
        extra << "controlled_peak = " << g17(pc) << '\n';
        extra << "peak_ratio = " << g17(ratio) << '\n';
        if (!(ratio <= *cfg.peak_ratio)) failures.push_back("peak ratio " + g17(ratio) + " > " + g17(*cfg.peak_ratio));
    }
    if (cfg.rms_fraction) {
        if (!sol.z_full) throw ConfigError("acceptance.rms_fraction needs validation (drop --no-validate)");
        const double ref = cfg.reference_amplitude.value_or(std::abs(z0(obs)));
        const double frac = sol.segments.back().metrics.rms_prediction_error / ref;
        extra << "last_segment_rms_fraction = " << g17(frac) << '\n';
        if (!(frac <= *cfg.rms_fraction))
            failures.push_back("last-segment RMS fraction " + g17(frac) + " > " + g17(*cfg.rms_fraction));
    }
    extra << "invariants = " << (failures.empty() ? "ok" : "failed") << '\n';
    for (const auto& f : failures) extra << "failure: " << f << '\n';

    {
        auto sum = open_out(ws.out / "summary.txt");
        elqr::write_summary(sum, sol);
        sum << extra.str();
    }
    elqr::write_summary(log, sol);
    log << extra.str();
    if (!failures.empty()) throw InvariantError(failures.front());
    return 0;
}

int cmd_validate(const CommandOptions& opts, std::ostream& log) {
    const Workspace ws = open_workspace(opts);
    const RunConfig& cfg = ws.cfg;
    const ssm::SSMModel s = load_ssm(ws);
    const Eigen::VectorXd z0 = initial_state(cfg, s, ws.fo.N);
    const Table u = read_csv(ws.out / "u.csv");
    const Table resp = read_csv(ws.out / "response.csv");
    if (static_cast<int>(u.header.size()) != ws.fo.inputs() + 1)
        throw ConfigError("u.csv: expected " + std::to_string(ws.fo.inputs()) + " input columns");
    if (resp.rows.size() != u.rows.size()) throw ConfigError("u.csv and response.csv have different lengths");
    const std::vector<int> dofs = observed_dofs(cfg, ws.fo.n);

    // Segments restart wherever a time value repeats.
    const std::size_t T = u.rows.size();
    Eigen::MatrixXd full(ws.fo.N, static_cast<Eigen::Index>(T));
    Eigen::VectorXd z = z0;
    std::size_t start = 0;
    while (start < T) {
        std::size_t end = start + 1;
        while (end < T && u.rows[end][0] > u.rows[end - 1][0]) ++end;
        std::vector<double> times;
        Eigen::MatrixXd us(ws.fo.inputs(), static_cast<Eigen::Index>(end - start));
        for (std::size_t k = start; k < end; ++k) {
            times.push_back(u.rows[k][0]);
            for (int j = 0; j < ws.fo.inputs(); ++j) us(j, static_cast<Eigen::Index>(k - start)) = u.rows[k][static_cast<std::size_t>(j + 1)];
        }
        if (times.size() < 2) throw ConfigError("u.csv: segment with a single sample at t = " + g17(times.front()));
        const auto fr = elqr::validate_full(ws.fo, times, us, z);
        full.middleCols(static_cast<Eigen::Index>(start), fr.z.cols()) = fr.z;
        z = fr.z.col(fr.z.cols() - 1);
        start = end;
    }

    auto csv = open_out(ws.out / "validation.csv");
    csv << "t";
    for (int d : dofs) csv << ",full_x" << d + 1;
    csv << '\n';
    for (std::size_t k = 0; k < T; ++k) {
        csv << g17(u.rows[k][0]);
        for (int d : dofs) csv << ',' << g17(full(d, static_cast<Eigen::Index>(k)));
        csv << '\n';
    }
    for (int d : dofs) {
        const int pc = resp.column("pred_x" + std::to_string(d + 1));
        if (pc < 0) continue;
        double sq = 0.0, peak = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
            const double e = full(d, static_cast<Eigen::Index>(k)) - resp.rows[k][static_cast<std::size_t>(pc)];
            sq += e * e;
            peak = std::max(peak, std::abs(full(d, static_cast<Eigen::Index>(k))));
        }
        log << "x" << d + 1 << ": rms(full - pred) = " << g17(std::sqrt(sq / static_cast<double>(T)))
            << ", peak |full| = " << g17(peak) << '\n';
    }
    log << "wrote " << (ws.out / "validation.csv").string() << '\n';
    return 0;
}

int cmd_chain_demo(const CommandOptions& opts, std::ostream& log) {
    const fs::path out = opts.out ? *opts.out : fs::path("chain-demo");
    fs::create_directories(out);
    mech::ChainParams cp;
    const auto base = mech::build_oscillator_chain(cp);
    const auto sys = mech::build_oscillator_chain(cp, mech::benchmark_chain_forcing(base.D));
    mech::save_model(sys, out / "chain_model.json");

    json c;
    c["model"] = "chain_model.json";
    c["master_pairs"] = {1};
    c["ssm_order"] = 3;
    c["selection"] = {{"metric", "mhsv"}, {"m_hat", 10}};
    c["weights"] = {{"Q", {{"displacement_scale", 1e5}, {"velocity_scale", 0.0}}}, {"R", 0.05}, {"M", 0.0}};
    c["initial"] = {{"p0", {2.5, 2.5}}};
    c["horizon"] = {{"t0", 0.0}, {"t1", 100.0}, {"boundaries", {20.0}}};
    c["grids"] = {{"nodes_per_segment", 2000}};
    c["observe"] = {1, 5};
    c["metric_dof"] = 5;
    c["seed"] = 0;
    c["acceptance"] = {{"peak_ratio", 0.1}, {"peak_window", {50.0, 100.0}}, {"rms_fraction", 0.05},
                       {"reference_amplitude", 2.0217}};
    open_out(out / "chain.json") << c.dump(2) << '\n';
    log << "wrote " << (out / "chain_model.json").string() << " and " << (out / "chain.json").string() << '\n';
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InvariantError*>(&e)) return 4;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ModelError*>(&e) ||
        dynamic_cast<const PreconditionError*>(&e))
        return 2;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
    return 3;
}

} // namespace ssmc::app
