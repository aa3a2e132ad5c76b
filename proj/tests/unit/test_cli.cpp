#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unistd.h>

#include "app/commands.hpp"
#include "doctest.h"
#include "json.hpp"
#include "ssmc/errors.hpp"

using namespace ssmc;
using namespace ssmc::app;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ssmc_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

json chain_config(const fs::path& dir) {
    CommandOptions o;
    o.out = dir;
    std::ostringstream log;
    cmd_chain_demo(o, log);
    return json::parse(slurp(dir / "chain.json"));
}

// Short chain run that keeps the tests fast.
fs::path short_chain(const fs::path& dir, const std::function<void(json&)>& edit = {}) {
    json c = chain_config(dir);
    c["horizon"] = {{"t0", 0.0}, {"t1", 10.0}, {"boundaries", {4.0}}};
    c["grids"] = {{"nodes_per_segment", 201}};
    c.erase("acceptance");
    if (edit) edit(c);
    std::ofstream(dir / "short.json") << c.dump(2);
    return dir / "short.json";
}

CommandOptions opts_for(const fs::path& config) {
    CommandOptions o;
    o.config = config;
    return o;
}

const char* one_dof_model = R"({
  "n": 1, "epsilon": 1.0,
  "M": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
  "Cd": {"rows": 1, "cols": 1, "triplets": []},
  "K": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
  "D": {"rows": 1, "cols": 1, "triplets": [[0, 0, 1.0]]},
  "forcing": {"channels": []},
  "nonlinearity": {"terms": []}
})";

} // namespace

TEST_CASE("run config parsing reports the offending key") {
    auto key_of = [](const std::string& text) {
        try {
            parse_run_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(key_of(R"({"master_pairs": [1]})").find("'model'") != std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "ssm_order": 0})").find("'ssm_order'") != std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "selection": {"metric": "hsv"}})").find("'selection.metric'") !=
          std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "horizon": {"t0": 0, "t1": 10, "boundaries": [12]}})")
              .find("'horizon.boundaries'") != std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "horizon": {"t0": 0, "t1": 10, "boundaries": [5, 3]}})")
              .find("'horizon.boundaries'") != std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "weights": {"Q": {"scael": 1}}})").find("'weights.Q.scael'") !=
          std::string::npos);
    CHECK(key_of(R"({"model": "m.json", "typo": 1})").find("'typo'") != std::string::npos);
    CHECK(key_of("{not json").find("not valid JSON") != std::string::npos);

    const RunConfig c = parse_run_config(
        R"({"model": "m.json", "master_pairs": [1, 2], "ssm_order": 5, "selection": {"metric": "DCgain", "threshold": 0.8},
            "initial": {"p0": [[1, 2], [1, -2], 3, 3]}, "horizon": {"t0": 1, "t1": 3, "boundaries": [2]}})",
        "dir/cfg.json");
    CHECK(c.model_path == fs::path("dir/m.json"));
    CHECK(c.metric == linred::Metric::dcgain);
    CHECK(c.threshold_or_default() == 0.8);
    CHECK(c.p0.size() == 4);
    CHECK(c.p0[1] == cplx(1.0, -2.0));
    CHECK(c.all_boundaries() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("weight shorthands expand to state-sized matrices") {
    WeightSpec w;
    w.displacement_scale = 3.0;
    const Eigen::MatrixXd Q = w.expand(4, 2, "Q");
    CHECK(Q.diagonal().isApprox(Eigen::Vector4d(3, 3, 0, 0)));
    CHECK((Q - Eigen::MatrixXd(Q.diagonal().asDiagonal())).norm() == 0.0);
    WeightSpec s;
    s.scale = 0.05;
    CHECK(s.expand(2, -1, "R").isApprox(0.05 * Eigen::Matrix2d::Identity()));
    CHECK_THROWS_AS(w.expand(3, 2, "Q"), ConfigError);
    WeightSpec d;
    d.diagonal = {1, 2};
    CHECK_THROWS_AS(d.expand(3, 2, "Q"), ConfigError);
}

TEST_CASE("boundary and metric flags") {
    CHECK(parse_boundaries("20,40.5") == std::vector<double>{20.0, 40.5});
    CHECK(parse_boundaries("").empty());
    CHECK_THROWS_AS(parse_boundaries("20,x"), ConfigError);
    CHECK(parse_metric("MHSV") == linred::Metric::mhsv);
    CHECK_THROWS_AS(parse_metric("hankel"), ConfigError);
}

TEST_CASE("content hash is FNV-1a") {
    CHECK(content_hash("") == "cbf29ce484222325");
    CHECK(content_hash("a") == "af63dc4c8601ec8c");
    CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(ModelError("x")) == 2);
    CHECK(exit_code_for(PreconditionError("x")) == 2);
    CHECK(exit_code_for(NumericalError("x")) == 3);
    CHECK(exit_code_for(InvariantError("x")) == 4);
}

TEST_CASE("eig on the chain and on a single undamped oscillator") {
    TempDir tmp("eig");
    chain_config(tmp.path);
    std::ostringstream log;
    CHECK(cmd_eig(opts_for(tmp.path / "chain.json"), log) == 0);
    const std::string first = log.str().substr(0, log.str().find('\n'));
    CHECK(first.find("master pair 1: -0.00405") != std::string::npos);
    CHECK(first.find("0.28460") != std::string::npos);
    const std::string csv1 = slurp(tmp.path / "out" / "spectrum.csv");
    std::ostringstream log2;
    cmd_eig(opts_for(tmp.path / "chain.json"), log2);
    CHECK(slurp(tmp.path / "out" / "spectrum.csv") == csv1);

    std::ofstream(tmp.path / "osc.json") << one_dof_model;
    std::ofstream(tmp.path / "osc_cfg.json") << R"({"model": "osc.json"})";
    std::ostringstream log3;
    cmd_eig(opts_for(tmp.path / "osc_cfg.json"), log3);
    CHECK(log3.str().find("master pair 1: 0 +/- 1i") != std::string::npos);
}

TEST_CASE("ssm and select persist hashed artifacts") {
    TempDir tmp("stage");
    const fs::path cfg = short_chain(tmp.path);
    std::ostringstream log;
    cmd_ssm(opts_for(cfg), log);
    cmd_select(opts_for(cfg), log);
    const json s = json::parse(slurp(tmp.path / "out" / "ssm.json"));
    const json sel = json::parse(slurp(tmp.path / "out" / "selection.json"));
    const std::string hash = file_hash(tmp.path / "chain_model.json");
    CHECK(s["model_hash"] == hash);
    CHECK(sel["model_hash"] == hash);
    CHECK(sel["selection"] == json({1, 2, 3, 4, 5}));
    CHECK(sel["normalized_dcgain_sum"].get<double>() == doctest::Approx(0.907).epsilon(0.006));
    CHECK(sel["normalized_mhsv_sum"].get<double>() == doctest::Approx(0.978).epsilon(0.006));
    CHECK(log.str().find("residual slope") != std::string::npos);

    // Reruns give identical files.
    const std::string ssm1 = slurp(tmp.path / "out" / "ssm.json");
    cmd_ssm(opts_for(cfg), log);
    CHECK(slurp(tmp.path / "out" / "ssm.json") == ssm1);

    // Selection sizes grow with the threshold.
    std::size_t prev = 0;
    for (double th : {0.5, 0.7, 0.9, 0.95, 0.99}) {
        CommandOptions o = opts_for(cfg);
        o.threshold = th;
        o.out = tmp.path / "sweep";
        cmd_select(o, log);
        const auto n = json::parse(slurp(tmp.path / "sweep" / "selection.json"))["selection"].size();
        CHECK(n >= prev);
        prev = n;
    }
}

TEST_CASE("control refuses missing or stale artifacts") {
    TempDir tmp("stale");
    const fs::path cfg = short_chain(tmp.path);
    std::ostringstream log;
    CommandOptions o = opts_for(cfg);
    o.no_validate = true;
    CHECK_THROWS_AS(cmd_control(o, log), ConfigError);
    cmd_ssm(o, log);
    CHECK_THROWS_AS(cmd_control(o, log), ConfigError);
    cmd_select(o, log);
    CHECK(cmd_control(o, log) == 0);

    CommandOptions other = o;
    other.metric = "dcgain";
    other.threshold = 0.5;
    CHECK_THROWS_AS(cmd_control(other, log), ConfigError);

    // Touching the model invalidates both artifacts.
    {
        std::ofstream(tmp.path / "chain_model.json", std::ios::app) << "\n";
    }
    CHECK_THROWS_AS(cmd_control(o, log), ConfigError);
    o.fresh = true;
    CHECK(cmd_control(o, log) == 0);
    o.fresh = false;
    CHECK(cmd_control(o, log) == 0);
}

TEST_CASE("control outputs are deterministic and replay through validate") {
    TempDir tmp("ctrl");
    const fs::path cfg = short_chain(tmp.path);
    std::ostringstream log;
    CommandOptions o = opts_for(cfg);
    o.fresh = true;
    CHECK(cmd_control(o, log) == 0);
    const std::string u1 = slurp(tmp.path / "out" / "u.csv"), r1 = slurp(tmp.path / "out" / "response.csv");
    CHECK(cmd_control(o, log) == 0);
    CHECK(slurp(tmp.path / "out" / "u.csv") == u1);
    CHECK(slurp(tmp.path / "out" / "response.csv") == r1);
    CHECK(r1.substr(0, r1.find('\n')) == "t,pred_x1,pred_x5,full_x1,full_x5");

    const std::string summary = slurp(tmp.path / "out" / "summary.txt");
    CHECK(summary.find("invariants = ok") != std::string::npos);
    CHECK(summary.find("segment 2:") != std::string::npos);

    // validate replays u.csv and matches the full columns written by control.
    std::ostringstream vlog;
    CHECK(cmd_validate(opts_for(cfg), vlog) == 0);
    std::ifstream vr(tmp.path / "out" / "validation.csv"), rr(tmp.path / "out" / "response.csv");
    std::string vl, rl;
    std::getline(vr, vl);
    std::getline(rr, rl);
    double worst = 0.0;
    while (std::getline(vr, vl) && std::getline(rr, rl)) {
        std::vector<double> v, r;
        std::stringstream vs(vl), rs(rl);
        for (std::string c; std::getline(vs, c, ',');) v.push_back(std::stod(c));
        for (std::string c; std::getline(rs, c, ',');) r.push_back(std::stod(c));
        worst = std::max({worst, std::abs(v[1] - r[3]), std::abs(v[2] - r[4])});
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("zero state weights leave the actuators idle") {
    TempDir tmp("zero");
    const fs::path cfg = short_chain(tmp.path, [](json& c) {
        c["weights"] = {{"Q", 0.0}, {"R", 1.0}, {"M", 0.0}};
    });
    std::ostringstream log;
    CommandOptions o = opts_for(cfg);
    o.fresh = true;
    o.no_validate = true;
    cmd_control(o, log);
    std::ifstream u(tmp.path / "out" / "u.csv");
    std::string line;
    std::getline(u, line);
    double peak = 0.0;
    while (std::getline(u, line)) {
        std::stringstream s(line);
        std::string c;
        std::getline(s, c, ',');
        while (std::getline(s, c, ',')) peak = std::max(peak, std::abs(std::stod(c)));
    }
    CHECK(peak == 0.0);
}

TEST_CASE("acceptance thresholds turn into invariant failures") {
    TempDir tmp("accept");
    const fs::path cfg = short_chain(tmp.path, [](json& c) {
        c["acceptance"] = {{"peak_ratio", 1e-12}, {"peak_window", {5.0, 10.0}}};
    });
    std::ostringstream log;
    CommandOptions o = opts_for(cfg);
    o.fresh = true;
    try {
        cmd_control(o, log);
        FAIL("expected an invariant failure");
    } catch (const InvariantError& e) {
        CHECK(exit_code_for(e) == 4);
    }
    CHECK(slurp(tmp.path / "out" / "summary.txt").find("invariants = failed") != std::string::npos);
}

TEST_CASE("output decimation keeps segment edges") {
    elqr::ControlSolution sol;
    sol.grid = {0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.25, 1.5};
    const auto cols = output_columns(sol, 0.5);
    CHECK(cols == std::vector<Eigen::Index>{0, 2, 4, 5, 7});
    CHECK(output_columns(sol, 0.0).size() == sol.grid.size());
}

TEST_CASE("short chain run matches the stored golden files") {
    TempDir tmp("golden");
    const fs::path cfg = short_chain(tmp.path, [](json& c) {
        c["grids"] = {{"nodes_per_segment", 201}, {"output_step", 0.5}};
    });
    std::ostringstream log;
    CommandOptions o = opts_for(cfg);
    o.fresh = true;
    cmd_control(o, log);
    for (const char* name : {"u", "response"}) {
        std::ifstream got(tmp.path / "out" / (std::string(name) + ".csv"));
        std::ifstream want(fs::path(SSMC_GOLDEN_DIR) / ("short_chain_" + std::string(name) + ".csv"));
        REQUIRE(want.good());
        std::string g, w;
        std::getline(got, g);
        std::getline(want, w);
        CHECK(g == w);
        int rows = 0;
        while (std::getline(want, w)) {
            REQUIRE(std::getline(got, g));
            std::stringstream gs(g), ws(w);
            for (std::string a, b; std::getline(ws, b, ',');) {
                REQUIRE(std::getline(gs, a, ','));
                const double x = std::stod(a), y = std::stod(b);
                CHECK(std::abs(x - y) <= 1e-7 * std::max(1.0, std::abs(y)));
            }
            ++rows;
        }
        CHECK(!std::getline(got, g));
        CHECK(rows == 22);
    }
}

TEST_CASE("schema lists the keys written to model files") {
    std::ifstream in(fs::path(SSMC_SCHEMA_DIR) / "model.schema.json");
    REQUIRE(in.good());
    const json schema = json::parse(in);
    mech::ChainParams cp;
    const auto base = mech::build_oscillator_chain(cp);
    const json model = json::parse(mech::model_to_json(mech::build_oscillator_chain(cp, mech::benchmark_chain_forcing(base.D))));
    std::set<std::string> required, written, declared;
    for (const auto& k : schema["required"]) required.insert(k.get<std::string>());
    for (const auto& [k, v] : model.items()) written.insert(k);
    for (const auto& [k, v] : schema["properties"].items()) declared.insert(k);
    CHECK(required == written);
    CHECK(declared == written);
    for (const auto& [k, v] : model["forcing"]["channels"][0].items())
        CHECK(schema["$defs"]["channel"]["properties"].contains(k));
    for (const auto& [k, v] : model["nonlinearity"]["terms"][0].items())
        CHECK(schema["$defs"]["term"]["properties"].contains(k));
}
