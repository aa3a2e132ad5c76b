#include "ssmc/mechmodel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "ssmc/errors.hpp"

namespace ssmc::mech {

using json = nlohmann::json;

double ForcingChannel::scalar(double t) const {
    const double arg = angular_frequency * t + phase;
    return amplitude * (waveform == Waveform::sine ? std::sin(arg) : std::cos(arg));
}

Eigen::VectorXd ForcingSignal::eval(double t) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    for (const auto& ch : channels) out += ch.scalar(t) * ch.distribution;
    return out;
}

ForcingSignal ForcingSignal::padded(int new_dim) const {
    if (new_dim < dim) throw PreconditionError("ForcingSignal::padded: cannot shrink");
    ForcingSignal out{new_dim, channels};
    for (auto& ch : out.channels) {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(new_dim);
        d.head(ch.distribution.size()) = ch.distribution;
        ch.distribution = std::move(d);
    }
    return out;
}

void ForcingSignal::validate() const {
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i].distribution.size() != dim) {
            std::ostringstream msg;
            msg << "forcing.channels[" << i << "].distribution has length " << channels[i].distribution.size()
                << ", expected " << dim;
            throw ModelError(msg.str());
        }
    }
}

namespace {

void require_shape(const SparseMatrix& m, int rows, int cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        std::ostringstream msg;
        msg << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
        throw ModelError(msg.str());
    }
}

bool is_symmetric(const SparseMatrix& m) {
    const SparseMatrix diff = SparseMatrix(m.transpose()) - m;
    double scale = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(diff, k); it; ++it)
            if (std::abs(it.value()) > 1e-12 * scale) return false;
    return true;
}

} // namespace

void SecondOrderSystem::validate() const {
    if (n <= 0) throw ModelError("n must be positive");
    require_shape(M, n, n, "M");
    require_shape(Cd, n, n, "Cd");
    require_shape(K, n, n, "K");
    if (D.rows() != n) throw ModelError("D must have n rows");
    if (!std::isfinite(epsilon) || epsilon < 0.0) throw ModelError("epsilon must be finite and nonnegative");
    if (f.dim_in() != 2 * n || f.dim_out() != n) {
        std::ostringstream msg;
        msg << "nonlinearity maps R^" << f.dim_in() << " -> R^" << f.dim_out() << ", expected R^" << 2 * n
            << " -> R^" << n;
        throw ModelError(msg.str());
    }
    if (E.dim != n && !(E.empty() && E.dim == 0)) throw ModelError("forcing dimension must equal n");
    E.validate();
    if (!is_symmetric(M)) throw ModelError("M must be symmetric");
    Eigen::SimplicialLLT<SparseMatrix> llt(M);
    if (llt.info() != Eigen::Success) throw ModelError("M must be positive definite (singular M makes B singular)");
    if (D.cols() > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
        if (qr.rank() != D.cols()) throw ModelError("D must have full column rank");
    }
}

Eigen::VectorXd FirstOrderSystem::rhs(const Eigen::VectorXd& z, double t, const Eigen::VectorXd& u) const {
    Eigen::VectorXd r = A * z;
    if (!F.empty()) r += F.eval(z);
    if (!Fext.empty()) r += epsilon * Fext.eval(t);
    if (u.size() > 0) r += epsilon * (Bext * u);
    return r;
}

SecondOrderSystem build_oscillator_chain(const ChainParams& p, ForcingSignal forcing) {
    if (p.n_masses < 2) throw PreconditionError("oscillator chain needs at least two masses");
    if (!(p.m > 0.0) || !(p.k > 0.0)) throw PreconditionError("oscillator chain needs m > 0 and k > 0");
    if (p.c < 0.0 || p.kappa < 0.0) throw PreconditionError("oscillator chain needs c >= 0 and kappa >= 0");
    const int n = p.n_masses;
    for (int idx : p.actuator_indices) {
        if (idx < 1 || idx > n) {
            std::ostringstream msg;
            msg << "actuator index " << idx << " outside [1, " << n << "]";
            throw PreconditionError(msg.str());
        }
    }

    std::vector<Eigen::Triplet<double>> t_trip;
    for (int i = 0; i < n; ++i) {
        t_trip.emplace_back(i, i, 2.0);
        if (i + 1 < n) {
            t_trip.emplace_back(i, i + 1, -1.0);
            t_trip.emplace_back(i + 1, i, -1.0);
        }
    }
    SparseMatrix T(n, n);
    T.setFromTriplets(t_trip.begin(), t_trip.end());
    SparseMatrix I(n, n);
    I.setIdentity();

    SecondOrderSystem sys;
    sys.n = n;
    sys.M = p.m * I;
    sys.K = p.k * T;
    sys.Cd = p.c * T;
    sys.epsilon = p.epsilon;
    sys.D = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(p.actuator_indices.size()));
    for (std::size_t j = 0; j < p.actuator_indices.size(); ++j) sys.D(p.actuator_indices[j] - 1, static_cast<Eigen::Index>(j)) = 1.0;

    // Spring s (s = 0..n) joins mass s-1 and mass s (walls at -1 and n); its
    // elongation is x_s - x_{s-1}. Mass i feels kappa (e_i^3 - e_{i+1}^3).
    // (a - b)^3 = a^3 - 3a^2 b + 3 a b^2 - b^3 with a = x_s, b = x_{s-1}.
    std::vector<PolyTerm> terms;
    if (p.kappa != 0.0) {
        auto add_cube = [&](int out, double sign, int a, int b) {
            // sign * kappa * (x_a - x_b)^3, either index may be -1 (wall).
            if (a >= 0) terms.push_back({out, sign * p.kappa, {{a, 3}}});
            if (b >= 0) terms.push_back({out, -sign * p.kappa, {{b, 3}}});
            if (a >= 0 && b >= 0) {
                terms.push_back({out, -3.0 * sign * p.kappa, {{a, 2}, {b, 1}}});
                terms.push_back({out, 3.0 * sign * p.kappa, {{a, 1}, {b, 2}}});
            }
        };
        for (int i = 0; i < n; ++i) {
            add_cube(i, 1.0, i, i - 1);                    // e_i = x_i - x_{i-1}
            add_cube(i, -1.0, i + 1 < n ? i + 1 : -1, i);  // e_{i+1} = x_{i+1} - x_i
        }
    }
    sys.f = PolynomialMap(2 * n, n, std::move(terms));

    if (forcing.empty() && forcing.dim == 0) forcing.dim = n;
    sys.E = std::move(forcing);
    sys.validate();
    return sys;
}

ForcingSignal benchmark_chain_forcing(const Eigen::MatrixXd& D) {
    if (D.cols() != 2) throw PreconditionError("benchmark chain forcing needs exactly two actuator columns");
    ForcingSignal f;
    f.dim = static_cast<int>(D.rows());
    f.channels.push_back({D.col(0), 1.0, 0.1 * std::sqrt(2.0), 0.0, Waveform::sine});
    f.channels.push_back({D.col(1), 1.0, 0.1 * std::sqrt(3.0), 0.0, Waveform::cosine});
    return f;
}

Eigen::VectorXd chain_force_direct(const Eigen::VectorXd& x, double kappa) {
    const auto n = x.size();
    Eigen::VectorXd f(n);
    auto at = [&](Eigen::Index i) { return (i < 0 || i >= n) ? 0.0 : x(i); };
    for (Eigen::Index i = 0; i < n; ++i) {
        const double left = at(i) - at(i - 1);
        const double right = at(i + 1) - at(i);
        f(i) = kappa * (left * left * left - right * right * right);
    }
    return f;
}

FirstOrderSystem to_first_order(const SecondOrderSystem& sys) {
    sys.validate();
    const int n = sys.n;
    const int N = 2 * n;

    std::vector<Eigen::Triplet<double>> a_trip, b_trip;
    auto append = [](std::vector<Eigen::Triplet<double>>& out, const SparseMatrix& m, int r0, int c0, double s) {
        for (int k = 0; k < m.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(m, k); it; ++it)
                out.emplace_back(static_cast<int>(it.row()) + r0, static_cast<int>(it.col()) + c0, s * it.value());
    };
    append(a_trip, sys.K, 0, 0, -1.0);
    append(a_trip, sys.M, n, n, 1.0);
    append(b_trip, sys.Cd, 0, 0, 1.0);
    append(b_trip, sys.M, 0, n, 1.0);
    append(b_trip, sys.M, n, 0, 1.0);

    FirstOrderSystem fo;
    fo.n = n;
    fo.N = N;
    fo.A.resize(N, N);
    fo.A.setFromTriplets(a_trip.begin(), a_trip.end());
    fo.B.resize(N, N);
    fo.B.setFromTriplets(b_trip.begin(), b_trip.end());
    fo.mass = sys.M;
    fo.F = sys.f.embedded(N, N, 0, -1.0);
    fo.Fext = sys.E.empty() ? ForcingSignal{N, {}} : sys.E.padded(N);
    fo.Bext = Eigen::MatrixXd::Zero(N, sys.D.cols());
    fo.Bext.topRows(n) = sys.D;
    fo.epsilon = sys.epsilon;
    return fo;
}

// ---------------------------------------------------------------------------
// Model file

namespace {

json matrix_to_json(const SparseMatrix& m) {
    json trip = json::array();
    SparseMatrix rm = m;
    rm.makeCompressed();
    std::vector<std::array<double, 3>> entries;
    for (int k = 0; k < rm.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(rm, k); it; ++it)
            if (it.value() != 0.0) entries.push_back({static_cast<double>(it.row()), static_cast<double>(it.col()), it.value()});
    std::sort(entries.begin(), entries.end());
    for (const auto& e : entries) trip.push_back(json::array({static_cast<long>(e[0]), static_cast<long>(e[1]), e[2]}));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", std::move(trip)}};
}

json dense_to_json(const Eigen::MatrixXd& m) {
    SparseMatrix s = m.sparseView(0.0, 0.0);
    return matrix_to_json(s);
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw ModelError("model schema violation at '" + path + "': " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path.empty() ? key : path + "." + key, "missing required field \"" + key + "\"");
    return *it;
}

double require_number(const json& obj, const std::string& key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_number()) schema_error(path.empty() ? key : path + "." + key, "expected a number");
    return v.get<double>();
}

long require_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) schema_error(path, "expected an integer");
    return v.get<long>();
}

SparseMatrix matrix_from_json(const json& j, const std::string& path, long rows, long cols) {
    const long r = require_int(require(j, "rows", path), path + ".rows");
    const long c = require_int(require(j, "cols", path), path + ".cols");
    if (rows >= 0 && r != rows) schema_error(path + ".rows", "expected " + std::to_string(rows));
    if (cols >= 0 && c != cols) schema_error(path + ".cols", "expected " + std::to_string(cols));
    const auto& trip = require(j, "triplets", path);
    if (!trip.is_array()) schema_error(path + ".triplets", "expected an array");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(trip.size());
    for (std::size_t i = 0; i < trip.size(); ++i) {
        const std::string ep = path + ".triplets[" + std::to_string(i) + "]";
        const auto& e = trip[i];
        if (!e.is_array() || e.size() != 3) schema_error(ep, "expected [row, col, value]");
        const long ri = require_int(e[0], ep + "[0]");
        const long ci = require_int(e[1], ep + "[1]");
        if (!e[2].is_number()) schema_error(ep + "[2]", "expected a number");
        if (ri < 0 || ri >= r) schema_error(ep + "[0]", "row index out of range");
        if (ci < 0 || ci >= c) schema_error(ep + "[1]", "column index out of range");
        t.emplace_back(static_cast<int>(ri), static_cast<int>(ci), e[2].get<double>());
    }
    SparseMatrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

} // namespace

std::string model_to_json(const SecondOrderSystem& sys) {
    json j;
    j["n"] = sys.n;
    j["epsilon"] = sys.epsilon;
    j["M"] = matrix_to_json(sys.M);
    j["Cd"] = matrix_to_json(sys.Cd);
    j["K"] = matrix_to_json(sys.K);
    j["D"] = dense_to_json(sys.D);

    json channels = json::array();
    for (const auto& ch : sys.E.channels) {
        json dist = json::array();
        for (Eigen::Index i = 0; i < ch.distribution.size(); ++i)
            if (ch.distribution(i) != 0.0) dist.push_back(json::array({i, ch.distribution(i)}));
        channels.push_back({{"distribution", std::move(dist)},
                            {"amplitude", ch.amplitude},
                            {"angular_frequency", ch.angular_frequency},
                            {"phase", ch.phase},
                            {"waveform", ch.waveform == Waveform::sine ? "sine" : "cosine"}});
    }
    j["forcing"] = {{"channels", std::move(channels)}};

    json terms = json::array();
    for (const auto& t : sys.f.terms()) {
        json exps = json::array();
        for (const auto& vp : t.exps) exps.push_back(json::array({vp.var, vp.power}));
        terms.push_back({{"out", t.out}, {"coeff", t.coeff}, {"exps", std::move(exps)}});
    }
    j["nonlinearity"] = {{"terms", std::move(terms)}};
    return j.dump(2);
}

SecondOrderSystem model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error("", "top level must be an object");

    SecondOrderSystem sys;
    const long n = require_int(require(j, "n", ""), "n");
    if (n <= 0) schema_error("n", "must be positive");
    sys.n = static_cast<int>(n);
    sys.epsilon = require_number(j, "epsilon", "");
    sys.M = matrix_from_json(require(j, "M", ""), "M", n, n);
    sys.Cd = matrix_from_json(require(j, "Cd", ""), "Cd", n, n);
    sys.K = matrix_from_json(require(j, "K", ""), "K", n, n);
    sys.D = Eigen::MatrixXd(matrix_from_json(require(j, "D", ""), "D", n, -1));

    const auto& forcing = require(j, "forcing", "");
    const auto& channels = require(forcing, "channels", "forcing");
    if (!channels.is_array()) schema_error("forcing.channels", "expected an array");
    sys.E.dim = sys.n;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const std::string cp = "forcing.channels[" + std::to_string(i) + "]";
        const auto& c = channels[i];
        ForcingChannel ch;
        ch.distribution = Eigen::VectorXd::Zero(n);
        const auto& dist = require(c, "distribution", cp);
        if (!dist.is_array()) schema_error(cp + ".distribution", "expected an array of [index, value]");
        for (std::size_t k = 0; k < dist.size(); ++k) {
            const std::string dp = cp + ".distribution[" + std::to_string(k) + "]";
            if (!dist[k].is_array() || dist[k].size() != 2 || !dist[k][1].is_number())
                schema_error(dp, "expected [index, value]");
            const long idx = require_int(dist[k][0], dp + "[0]");
            if (idx < 0 || idx >= n) schema_error(dp + "[0]", "index out of range");
            ch.distribution(idx) += dist[k][1].get<double>();
        }
        ch.amplitude = require_number(c, "amplitude", cp);
        ch.angular_frequency = require_number(c, "angular_frequency", cp);
        ch.phase = require_number(c, "phase", cp);
        const auto& wf = require(c, "waveform", cp);
        if (wf == "sine")
            ch.waveform = Waveform::sine;
        else if (wf == "cosine")
            ch.waveform = Waveform::cosine;
        else
            schema_error(cp + ".waveform", "expected \"sine\" or \"cosine\"");
        sys.E.channels.push_back(std::move(ch));
    }

    const auto& nl = require(j, "nonlinearity", "");
    const auto& terms = require(nl, "terms", "nonlinearity");
    if (!terms.is_array()) schema_error("nonlinearity.terms", "expected an array");
    std::vector<PolyTerm> pts;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const std::string tp = "nonlinearity.terms[" + std::to_string(i) + "]";
        const auto& t = terms[i];
        PolyTerm pt;
        pt.out = static_cast<int>(require_int(require(t, "out", tp), tp + ".out"));
        pt.coeff = require_number(t, "coeff", tp);
        const auto& exps = require(t, "exps", tp);
        if (!exps.is_array()) schema_error(tp + ".exps", "expected an array of [var, power]");
        for (std::size_t k = 0; k < exps.size(); ++k) {
            const std::string ep = tp + ".exps[" + std::to_string(k) + "]";
            if (!exps[k].is_array() || exps[k].size() != 2) schema_error(ep, "expected [var, power]");
            pt.exps.push_back({static_cast<int>(require_int(exps[k][0], ep + "[0]")),
                               static_cast<int>(require_int(exps[k][1], ep + "[1]"))});
        }
        pts.push_back(std::move(pt));
    }
    try {
        sys.f = PolynomialMap(2 * sys.n, sys.n, std::move(pts));
    } catch (const ModelError& e) {
        throw ModelError(std::string("model schema violation at 'nonlinearity.terms': ") + e.what());
    }
    sys.validate();
    return sys;
}

void save_model(const SecondOrderSystem& sys, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot open " + path.string() + " for writing");
    out << model_to_json(sys) << '\n';
}

SecondOrderSystem load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

} // namespace ssmc::mech
