#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ssmc/errors.hpp"

namespace ssmc::app {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw ConfigError("config error at '" + key + "': " + why);
}

double number(const json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "expected a number");
    return j.get<double>();
}

int integer(const json& j, const std::string& key) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    return j.get<int>();
}

std::vector<int> int_list(const json& j, const std::string& key) {
    if (!j.is_array()) bad(key, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(integer(j[i], key + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<double> number_list(const json& j, const std::string& key) {
    if (!j.is_array()) bad(key, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], key + "[" + std::to_string(i) + "]"));
    return out;
}

Eigen::MatrixXd dense_matrix(const json& j, const std::string& key) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) bad(key, "expected an array of rows");
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto row = number_list(j[r], key + "[" + std::to_string(r) + "]");
        if (row.size() != cols) bad(key, "rows of unequal length");
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    return m;
}

WeightSpec weight_spec(const json& j, const std::string& key, const std::filesystem::path& dir) {
    WeightSpec w;
    if (j.is_number()) {
        w.scale = j.get<double>();
        return w;
    }
    if (!j.is_object()) bad(key, "expected a number or an object");
    for (const auto& [k, v] : j.items()) {
        const std::string path = key + "." + k;
        if (k == "scale")
            w.scale = number(v, path);
        else if (k == "displacement_scale")
            w.displacement_scale = number(v, path);
        else if (k == "velocity_scale")
            w.velocity_scale = number(v, path);
        else if (k == "diagonal")
            w.diagonal = number_list(v, path);
        else if (k == "matrix")
            w.matrix = dense_matrix(v, path);
        else if (k == "file") {
            if (!v.is_string()) bad(path, "expected a path");
            std::ifstream in(dir / v.get<std::string>());
            if (!in) bad(path, "cannot open " + (dir / v.get<std::string>()).string());
            json m;
            try {
                in >> m;
            } catch (const json::parse_error& e) {
                bad(path, std::string("not valid JSON: ") + e.what());
            }
            w.matrix = dense_matrix(m, path);
        } else
            bad(path, "unknown key");
    }
    return w;
}

} // namespace

Eigen::MatrixXd WeightSpec::expand(int rows, int dofs, const std::string& name) const {
    if (matrix) {
        if (matrix->rows() != rows || matrix->cols() != rows)
            bad(name + ".matrix", "expected " + std::to_string(rows) + "x" + std::to_string(rows));
        return *matrix;
    }
    if (!diagonal.empty()) {
        if (static_cast<int>(diagonal.size()) != rows) bad(name + ".diagonal", "expected " + std::to_string(rows) + " entries");
        return Eigen::Map<const Eigen::VectorXd>(diagonal.data(), rows).asDiagonal();
    }
    if (displacement_scale || velocity_scale) {
        if (rows != 2 * dofs) bad(name, "displacement/velocity scales apply to state-sized weights only");
        Eigen::VectorXd d(rows);
        d.head(dofs).setConstant(displacement_scale.value_or(0.0));
        d.tail(dofs).setConstant(velocity_scale.value_or(0.0));
        return d.asDiagonal();
    }
    return scale * Eigen::MatrixXd::Identity(rows, rows);
}

double RunConfig::threshold_or_default() const { return threshold.value_or(linred::default_threshold(metric)); }

std::vector<double> RunConfig::all_boundaries() const {
    std::vector<double> b{t0};
    b.insert(b.end(), boundaries.begin(), boundaries.end());
    b.push_back(t1);
    return b;
}

linred::Metric parse_metric(const std::string& text) {
    std::string t = text;
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "dcgain") return linred::Metric::dcgain;
    if (t == "mhsv") return linred::Metric::mhsv;
    throw ConfigError("unknown metric '" + text + "' (expected dcgain or mhsv)");
}

std::string metric_name(linred::Metric m) { return m == linred::Metric::dcgain ? "dcgain" : "mhsv"; }

std::vector<double> parse_boundaries(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--boundaries: '" + item + "' is not a number");
        }
    }
    return out;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& source) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) bad("", "top level must be an object");
    RunConfig c;
    c.source = source;
    const auto dir = source.empty() ? std::filesystem::path(".") : source.parent_path();

    for (const auto& [k, v] : j.items()) {
        if (k == "model") {
            if (!v.is_string()) bad(k, "expected a path");
            c.model_path = dir / v.get<std::string>();
        } else if (k == "eig_count") {
            c.eig_count = integer(v, k);
        } else if (k == "master_pairs") {
            c.master_pairs = int_list(v, k);
        } else if (k == "ssm_order") {
            c.ssm_order = integer(v, k);
        } else if (k == "res_tol") {
            c.res_tol = number(v, k);
        } else if (k == "residual") {
            for (const auto& [rk, rv] : v.items()) {
                if (rk == "min") c.residual_min = number(rv, "residual.min");
                else if (rk == "max") c.residual_max = number(rv, "residual.max");
                else if (rk == "count") c.residual_count = integer(rv, "residual.count");
                else bad("residual." + rk, "unknown key");
            }
        } else if (k == "selection") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [sk, sv] : v.items()) {
                const std::string p = "selection." + sk;
                if (sk == "metric") {
                    if (!sv.is_string()) bad(p, "expected \"dcgain\" or \"mhsv\"");
                    try {
                        c.metric = parse_metric(sv.get<std::string>());
                    } catch (const ConfigError& e) {
                        bad(p, e.what());
                    }
                } else if (sk == "threshold") {
                    c.threshold = number(sv, p);
                } else if (sk == "m_hat") {
                    c.m_hat = integer(sv, p);
                } else if (sk == "forced_pairs") {
                    c.forced_pairs = int_list(sv, p);
                } else {
                    bad(p, "unknown key");
                }
            }
        } else if (k == "weights") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [wk, wv] : v.items()) {
                if (wk == "Q") c.Q = weight_spec(wv, "weights.Q", dir);
                else if (wk == "R") c.R = weight_spec(wv, "weights.R", dir);
                else if (wk == "M") c.M = weight_spec(wv, "weights.M", dir);
                else bad("weights." + wk, "unknown key");
            }
        } else if (k == "epsilon") {
            c.epsilon = number(v, k);
        } else if (k == "initial") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [ik, iv] : v.items()) {
                const std::string p = "initial." + ik;
                if (ik == "p0") {
                    if (!iv.is_array()) bad(p, "expected an array");
                    for (std::size_t i = 0; i < iv.size(); ++i) {
                        const std::string ep = p + "[" + std::to_string(i) + "]";
                        if (iv[i].is_number()) {
                            c.p0.emplace_back(iv[i].get<double>(), 0.0);
                        } else {
                            const auto re_im = number_list(iv[i], ep);
                            if (re_im.size() != 2) bad(ep, "expected a number or [re, im]");
                            c.p0.emplace_back(re_im[0], re_im[1]);
                        }
                    }
                } else if (ik == "z0") {
                    c.z0 = number_list(iv, p);
                } else {
                    bad(p, "unknown key");
                }
            }
        } else if (k == "horizon") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [hk, hv] : v.items()) {
                const std::string p = "horizon." + hk;
                if (hk == "t0") c.t0 = number(hv, p);
                else if (hk == "t1") c.t1 = number(hv, p);
                else if (hk == "boundaries") c.boundaries = number_list(hv, p);
                else bad(p, "unknown key");
            }
        } else if (k == "grids") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [gk, gv] : v.items()) {
                const std::string p = "grids." + gk;
                if (gk == "design_step") c.design_step = number(gv, p);
                else if (gk == "nodes_per_segment") c.nodes_per_segment = static_cast<std::size_t>(integer(gv, p));
                else if (gk == "output_step") c.output_step = number(gv, p);
                else bad(p, "unknown key");
            }
        } else if (k == "observe") {
            c.observe = int_list(v, k);
        } else if (k == "metric_dof") {
            c.metric_dof = integer(v, k);
        } else if (k == "seed") {
            if (!v.is_number_unsigned()) bad(k, "expected a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (k == "acceptance") {
            if (!v.is_object()) bad(k, "expected an object");
            for (const auto& [ak, av] : v.items()) {
                const std::string p = "acceptance." + ak;
                if (ak == "peak_ratio") {
                    c.peak_ratio = number(av, p);
                } else if (ak == "peak_window") {
                    const auto w = number_list(av, p);
                    if (w.size() != 2 || !(w[1] > w[0])) bad(p, "expected [t_start, t_end] with t_end > t_start");
                    c.peak_window_t0 = w[0];
                    c.peak_window_t1 = w[1];
                } else if (ak == "rms_fraction") {
                    c.rms_fraction = number(av, p);
                } else if (ak == "reference_amplitude") {
                    c.reference_amplitude = number(av, p);
                } else {
                    bad(p, "unknown key");
                }
            }
        } else {
            bad(k, "unknown key");
        }
    }

    if (c.model_path.empty()) bad("model", "required");
    if (c.ssm_order < 1) bad("ssm_order", "must be at least 1");
    if (c.master_pairs.empty()) bad("master_pairs", "must list at least one pair");
    for (int p : c.master_pairs)
        if (p < 1) bad("master_pairs", "pair indices are 1-based");
    if (!(c.res_tol >= 0.0)) bad("res_tol", "must be non-negative");
    if (!(c.residual_min > 0.0) || !(c.residual_max > c.residual_min) || c.residual_count < 2)
        bad("residual", "need 0 < min < max and count >= 2");
    if (c.threshold && !(*c.threshold >= 0.0 && *c.threshold <= 1.0)) bad("selection.threshold", "must lie in [0, 1]");
    if (c.m_hat < 0) bad("selection.m_hat", "must be positive");
    if (!(c.t1 > c.t0)) bad("horizon", "need t1 > t0");
    double prev = c.t0;
    for (double b : c.boundaries) {
        if (!(b > prev) || !(b < c.t1)) bad("horizon.boundaries", "must be strictly increasing inside (t0, t1)");
        prev = b;
    }
    if (c.design_step < 0.0) bad("grids.design_step", "must be positive");
    if (c.output_step < 0.0) bad("grids.output_step", "must be positive");
    if (c.nodes_per_segment < 2) bad("grids.nodes_per_segment", "must be at least 2");
    if (c.metric_dof < 1) bad("metric_dof", "DOFs are 1-based");
    for (int d : c.observe)
        if (d < 1) bad("observe", "DOFs are 1-based");
    if (!c.p0.empty() && !c.z0.empty()) bad("initial", "give either p0 or z0, not both");
    if (c.epsilon && !(*c.epsilon > 0.0)) bad("epsilon", "must be positive");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path);
}

} // namespace ssmc::app
