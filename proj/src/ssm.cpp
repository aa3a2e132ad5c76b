#include "ssmc/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#include <Eigen/SparseLU>

#include "json.hpp"
#include "ssmc/errors.hpp"
#include "ssmc/kernels.hpp"
#include "ssmc/ode.hpp"

namespace ssmc::ssm {

using json = nlohmann::json;

namespace {

using SparseC = Eigen::SparseMatrix<cplx>;

struct DegreeContext {
    const mech::FirstOrderSystem& fo;
    const SSMModel& s;
    const SSMOptions& opts;
    const Eigen::MatrixXcd& Fk;   // composition F(W) truncated at this degree
    const Eigen::MatrixXcd* Ad;   // dense A (nullptr on the sparse path)
    const Eigen::MatrixXcd* Bd;
    const SparseC& Ac;
    const SparseC& Bc;
    const Eigen::MatrixXcd& BV;    // B V_E
    const Eigen::MatrixXcd& UsB;   // U_E^* B
};

// Sum over i and lower-order pairs (a, c) with a - e_i + c = k of a_i W_a R_i[c],
// excluding the |a| = 1 and |c| = 1 contributions.
Eigen::VectorXcd cross_terms(const SSMModel& s, int idx) {
    const auto& set = s.set;
    const auto& k = set.at(idx);
    const int kappa = set.order_of(idx);
    const int d = s.dim();
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(s.N());
    MultiIndex a(static_cast<std::size_t>(d));
    for (int c = set.order_begin(2); c < set.order_end(kappa - 1); ++c) {
        const auto& cv = set.at(c);
        for (int i = 0; i < d; ++i) {
            const cplx r = s.R(i, c);
            if (r == cplx(0.0)) continue;
            bool ok = true;
            for (int v = 0; v < d && ok; ++v) {
                a[static_cast<std::size_t>(v)] = k[static_cast<std::size_t>(v)] - cv[static_cast<std::size_t>(v)] + (v == i ? 1 : 0);
                ok = a[static_cast<std::size_t>(v)] >= 0;
            }
            if (!ok || a[static_cast<std::size_t>(i)] == 0) continue;
            const int ai = set.index_of(a);
            if (ai < 0 || set.order_of(ai) < 2) continue;
            acc += static_cast<double>(a[static_cast<std::size_t>(i)]) * r * s.W.col(ai);
        }
    }
    return acc;
}

struct CoefficientSolution {
    Eigen::VectorXcd w;
    Eigen::VectorXcd r; // one entry per resonant target
};

CoefficientSolution solve_coefficient(const DegreeContext& ctx, int idx, const std::vector<int>& targets) {
    const auto& s = ctx.s;
    const auto& k = s.set.at(idx);
    const int N = s.N();
    const int nr = static_cast<int>(targets.size());
    cplx kl = 0.0;
    for (int i = 0; i < s.dim(); ++i) kl += static_cast<double>(k[static_cast<std::size_t>(i)]) * s.master.lambda(i);

    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N + nr);
    rhs.head(N) = ctx.Bc * cross_terms(s, idx) - ctx.Fk.col(idx);

    Eigen::VectorXcd sol;
    if (ctx.Ad) {
        Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(N + nr, N + nr);
        big.topLeftCorner(N, N) = *ctx.Ad - kl * (*ctx.Bd);
        for (int c = 0; c < nr; ++c) {
            big.col(N + c).head(N) = -ctx.BV.col(targets[static_cast<std::size_t>(c)]);
            big.row(N + c).head(N) = ctx.UsB.row(targets[static_cast<std::size_t>(c)]);
        }
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(big);
        const double rc = lu.rcond();
        if (!(rc > ctx.opts.min_rcond)) {
            std::ostringstream msg;
            msg << "SSM coefficient system for multi-index (";
            for (std::size_t v = 0; v < k.size(); ++v) msg << (v ? "," : "") << k[v];
            msg << ") is near-singular (rcond " << rc << "); resonance tolerance "
                << s.res_tol << " may be too tight or an outer resonance is present";
            throw NumericalError(msg.str());
        }
        sol = lu.solve(rhs);
    } else {
        std::vector<Eigen::Triplet<cplx>> trip;
        SparseC shifted = ctx.Ac - kl * ctx.Bc;
        for (int col = 0; col < shifted.outerSize(); ++col)
            for (SparseC::InnerIterator it(shifted, col); it; ++it) trip.emplace_back(static_cast<int>(it.row()), col, it.value());
        for (int c = 0; c < nr; ++c) {
            const int j = targets[static_cast<std::size_t>(c)];
            for (int r = 0; r < N; ++r) {
                if (ctx.BV(r, j) != cplx(0.0)) trip.emplace_back(r, N + c, -ctx.BV(r, j));
                if (ctx.UsB(j, r) != cplx(0.0)) trip.emplace_back(N + c, r, ctx.UsB(j, r));
            }
        }
        SparseC big(N + nr, N + nr);
        big.setFromTriplets(trip.begin(), trip.end());
        big.makeCompressed();
        Eigen::SparseLU<SparseC> lu;
        lu.compute(big);
        if (lu.info() != Eigen::Success) throw NumericalError("SSM coefficient system: sparse factorization failed");
        sol = lu.solve(rhs);
        const double res = (big * sol - rhs).norm();
        if (!std::isfinite(res) || res > 1e-8 * std::max(1.0, rhs.norm()))
            throw NumericalError("SSM coefficient system: sparse solve is inaccurate (near-singular system)");
    }
    return {sol.head(N), sol.tail(nr)};
}

void solve_degree(SSMModel& s, const DegreeContext& ctx, int kappa) {
    std::vector<int> reps;
    for (int idx = s.set.order_begin(kappa); idx < s.set.order_end(kappa); ++idx)
        if (s.set.conjugate_index(idx) >= idx) reps.push_back(idx);

    std::vector<CoefficientSolution> sols(reps.size());
    std::vector<std::vector<int>> targets(reps.size());
    std::vector<std::exception_ptr> errors(reps.size());
    const auto count = static_cast<long>(reps.size());

#pragma omp parallel for schedule(dynamic) if (ctx.opts.parallel && count > 1)
    for (long r = 0; r < count; ++r) {
        try {
            const auto ur = static_cast<std::size_t>(r);
            targets[ur] = s.resonances.targets_for(s.set.at(reps[ur]));
            sols[ur] = solve_coefficient(ctx, reps[ur], targets[ur]);
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t r = 0; r < reps.size(); ++r) {
        const int idx = reps[r];
        const int cidx = s.set.conjugate_index(idx);
        s.W.col(idx) = sols[r].w;
        for (std::size_t c = 0; c < targets[r].size(); ++c) s.R(targets[r][c], idx) = sols[r].r(static_cast<Eigen::Index>(c));
        if (cidx == idx) {
            s.W.col(idx) = s.W.col(idx).real().cast<cplx>();
            for (int j = 0; j < s.dim(); j += 2) {
                const cplx avg = 0.5 * (s.R(j, idx) + std::conj(s.R(j + 1, idx)));
                s.R(j, idx) = avg;
                s.R(j + 1, idx) = std::conj(avg);
            }
        } else {
            s.W.col(cidx) = s.W.col(idx).conjugate();
            for (int j = 0; j < s.dim(); ++j) s.R(j ^ 1, cidx) = std::conj(s.R(j, idx));
        }
    }
}

void put_complex_vector(json& arr, const Eigen::VectorXcd& v) {
    arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back({v(i).real(), v(i).imag()});
}

Eigen::VectorXcd get_complex_vector(const json& arr, Eigen::Index expected, const std::string& path) {
    if (!arr.is_array() || (expected >= 0 && static_cast<Eigen::Index>(arr.size()) != expected))
        throw ModelError("SSM file: '" + path + "' has the wrong length");
    Eigen::VectorXcd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& e = arr[i];
        if (!e.is_array() || e.size() != 2) throw ModelError("SSM file: '" + path + "' entries must be [re, im]");
        v(static_cast<Eigen::Index>(i)) = cplx(e[0].get<double>(), e[1].get<double>());
    }
    return v;
}

} // namespace

SSMModel compute_autonomous_ssm(const mech::FirstOrderSystem& fo, const spectral::MasterSubspace& master, int order,
                                const SSMOptions& opts) {
    if (order < 1) throw PreconditionError("SSM order must be at least 1");
    if (master.V.rows() != fo.N) throw PreconditionError("master subspace dimension does not match the system");
    if (fo.F.dim_in() != fo.N && !fo.F.empty()) throw PreconditionError("nonlinearity dimension mismatch");

    SSMModel s;
    s.order = order;
    s.master = master;
    s.set = MultiIndexSet(master.dim(), order);
    s.res_tol = opts.res_tol;
    s.W = Eigen::MatrixXcd::Zero(fo.N, s.set.size());
    s.R = Eigen::MatrixXcd::Zero(master.dim(), s.set.size());
    for (int j = 0; j < master.dim(); ++j) {
        s.W.col(s.set.unit_index(j)) = master.V.col(j);
        s.R(j, s.set.unit_index(j)) = master.lambda(j);
    }
    s.resonances = spectral::detect_inner_resonances(master.lambda, order, opts.res_tol);
    if (order == 1) return s;

    const SparseC Ac = fo.A.cast<cplx>();
    const SparseC Bc = fo.B.cast<cplx>();
    const Eigen::MatrixXcd BV = Bc * master.V;
    const Eigen::MatrixXcd UsB = (Bc.adjoint() * master.U).adjoint();
    Eigen::MatrixXcd Ad, Bd;
    const bool dense = fo.N <= opts.dense_threshold;
    if (dense) {
        Ad = Eigen::MatrixXcd(Ac);
        Bd = Eigen::MatrixXcd(Bc);
    }

    for (int kappa = 2; kappa <= order; ++kappa) {
        const Eigen::MatrixXcd Fk = fo.F.empty() ? Eigen::MatrixXcd::Zero(fo.N, s.set.size())
                                                 : compose(fo.F, s.W, s.set, kappa);
        const DegreeContext ctx{fo, s, opts, Fk, dense ? &Ad : nullptr, dense ? &Bd : nullptr, Ac, Bc, BV, UsB};
        solve_degree(s, ctx, kappa);
    }
    return s;
}

void require_conjugate_symmetric(const Eigen::VectorXcd& p) {
    if (p.size() % 2 != 0) throw PreconditionError("reduced coordinates must come in conjugate pairs");
    for (Eigen::Index i = 0; i < p.size(); i += 2) {
        if (std::abs(p(i + 1) - std::conj(p(i))) > 1e-12 * std::max(1.0, std::abs(p(i)))) {
            std::ostringstream msg;
            msg << "reduced coordinates " << i + 1 << " and " << i + 2 << " are not complex conjugates";
            throw PreconditionError(msg.str());
        }
    }
}

Eigen::VectorXcd eval_parameterization_complex(const SSMModel& ssm, const Eigen::VectorXcd& p) {
    return ssm.W * ssm.set.monomials(p);
}

Eigen::VectorXd eval_parameterization(const SSMModel& ssm, const Eigen::VectorXcd& p) {
    require_conjugate_symmetric(p);
    const Eigen::VectorXcd z = eval_parameterization_complex(ssm, p);
    const Eigen::VectorXd re = z.real();
    if (z.imag().norm() > 1e-9 * re.norm()) throw NumericalError("SSM parameterization produced a complex state");
    return re;
}

Eigen::MatrixXd eval_parameterization_batch(const SSMModel& ssm, const Eigen::MatrixXcd& P) {
    for (Eigen::Index j = 0; j < P.cols(); ++j) require_conjugate_symmetric(P.col(j));
    const Eigen::MatrixXcd Z = kernels::eval_expansion_omp(ssm.W, ssm.set, P);
    const Eigen::MatrixXd re = Z.real();
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
        if (Z.col(j).imag().norm() > 1e-9 * re.col(j).norm())
            throw NumericalError("SSM parameterization produced a complex state");
    return re;
}

Eigen::VectorXcd eval_reduced_field(const SSMModel& ssm, const Eigen::VectorXcd& p) {
    return ssm.R * ssm.set.monomials(p);
}

Eigen::VectorXcd eval_tangent_flow(const SSMModel& ssm, const Eigen::VectorXcd& p) {
    const Eigen::VectorXcd mono = ssm.set.monomials(p);
    const Eigen::VectorXcd r = ssm.R * mono;
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(ssm.N());
    for (int idx = 1; idx < ssm.set.size(); ++idx) {
        MultiIndex k = ssm.set.at(idx);
        cplx g = 0.0;
        for (int i = 0; i < ssm.dim(); ++i) {
            const int ki = k[static_cast<std::size_t>(i)];
            if (ki == 0) continue;
            k[static_cast<std::size_t>(i)] -= 1;
            g += static_cast<double>(ki) * mono(ssm.set.index_of(k)) * r(i);
            k[static_cast<std::size_t>(i)] += 1;
        }
        out += g * ssm.W.col(idx);
    }
    return out;
}

Eigen::VectorXcd project_to_master(const spectral::MasterSubspace& master, const mech::SparseMatrix& B,
                                   const Eigen::VectorXd& z0) {
    if (z0.size() != master.V.rows()) throw PreconditionError("project_to_master: state dimension mismatch");
    const Eigen::VectorXd Bz = B * z0;
    Eigen::VectorXcd p = master.U.adjoint() * Bz.cast<cplx>();
    for (Eigen::Index i = 0; i + 1 < p.size(); i += 2) {
        const cplx avg = 0.5 * (p(i) + std::conj(p(i + 1)));
        p(i) = avg;
        p(i + 1) = std::conj(avg);
    }
    return p;
}

Eigen::VectorXcd ReducedTrajectory::at(double t) const {
    if (times.empty()) throw PreconditionError("empty reduced trajectory");
    const double tol = 1e-12 * std::max(1.0, std::abs(times.back()));
    if (t < times.front() - tol || t > times.back() + tol) {
        std::ostringstream msg;
        msg << "time " << t << " outside reduced trajectory [" << times.front() << ", " << times.back() << "]";
        throw PreconditionError(msg.str());
    }
    if (times.size() == 1) return p.col(0);
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    i = std::min(i, times.size() - 2);
    const double h = times[i + 1] - times[i];
    const double s = std::clamp((t - times[i]) / h, 0.0, 1.0);
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    const auto a = static_cast<Eigen::Index>(i), b = a + 1;
    return h00 * p.col(a) + h10 * h * dp.col(a) + h01 * p.col(b) + h11 * h * dp.col(b);
}

ReducedTrajectory simulate_reduced(const SSMModel& ssm, const Eigen::VectorXcd& p0, double t0, double t1,
                                   const SimulationOptions& opts) {
    if (!(t1 > t0)) throw PreconditionError("simulate_reduced: need t1 > t0");
    if (opts.samples < 2) throw PreconditionError("simulate_reduced: need at least two samples");
    require_conjugate_symmetric(p0);
    const int m = ssm.m();
    const int d = ssm.dim();

    auto expand = [m, d](const ode::State& x) {
        Eigen::VectorXcd p(d);
        for (int i = 0; i < m; ++i) {
            const cplx v(x[static_cast<std::size_t>(2 * i)], x[static_cast<std::size_t>(2 * i + 1)]);
            p(2 * i) = v;
            p(2 * i + 1) = std::conj(v);
        }
        return p;
    };
    ode::State x0(static_cast<std::size_t>(2 * m));
    for (int i = 0; i < m; ++i) {
        x0[static_cast<std::size_t>(2 * i)] = p0(2 * i).real();
        x0[static_cast<std::size_t>(2 * i + 1)] = p0(2 * i).imag();
    }
    const ode::Rhs rhs = [&](const ode::State& x, ode::State& dx, double) {
        const Eigen::VectorXcd f = eval_reduced_field(ssm, expand(x));
        dx.resize(x.size());
        for (int i = 0; i < m; ++i) {
            dx[static_cast<std::size_t>(2 * i)] = f(2 * i).real();
            dx[static_cast<std::size_t>(2 * i + 1)] = f(2 * i).imag();
        }
    };
    ReducedTrajectory traj;
    traj.times = ode::uniform_grid(t0, t1, opts.samples);
    ode::Options o;
    o.rel_tol = opts.rel_tol;
    o.abs_tol = opts.abs_tol;
    const auto states = ode::integrate_on_grid(rhs, x0, traj.times, o);
    const auto T = static_cast<Eigen::Index>(states.size());
    traj.p.resize(d, T);
    traj.dp.resize(d, T);
    for (Eigen::Index j = 0; j < T; ++j) {
        traj.p.col(j) = expand(states[static_cast<std::size_t>(j)]);
        traj.dp.col(j) = eval_reduced_field(ssm, traj.p.col(j));
        for (int i = 0; i < m; ++i) traj.dp(2 * i + 1, j) = std::conj(traj.dp(2 * i, j));
    }
    return traj;
}

std::vector<std::pair<double, double>> invariance_residual(const mech::FirstOrderSystem& fo, const SSMModel& ssm,
                                                           const std::vector<double>& amplitudes) {
    const SparseC Ac = fo.A.cast<cplx>();
    const SparseC Bc = fo.B.cast<cplx>();
    std::vector<std::pair<double, double>> out;
    out.reserve(amplitudes.size());
    for (double a : amplitudes) {
        const Eigen::VectorXcd p = Eigen::VectorXcd::Constant(ssm.dim(), cplx(a, 0.0));
        const Eigen::VectorXcd w = eval_parameterization_complex(ssm, p);
        Eigen::VectorXcd r = Bc * eval_tangent_flow(ssm, p) - Ac * w;
        if (!fo.F.empty()) r -= fo.F.eval(w);
        out.emplace_back(a, r.norm());
    }
    return out;
}

double loglog_slope(const std::vector<std::pair<double, double>>& table) {
    if (table.size() < 2) throw PreconditionError("slope fit needs at least two samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [a, r] : table) {
        if (!(a > 0.0) || !(r > 0.0)) throw NumericalError("slope fit needs positive amplitudes and residuals");
        const double x = std::log(a), y = std::log(r);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(table.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string ssm_to_json(const SSMModel& s, const std::string& model_hash) {
    json j;
    j["format"] = "ssmc-ssm";
    j["version"] = 1;
    j["model_hash"] = model_hash;
    j["order"] = s.order;
    j["m"] = s.m();
    j["N"] = s.N();
    j["res_tol"] = s.res_tol;
    json pairs = json::array();
    for (const auto& p : s.master.pairs) {
        json e;
        e["index"] = p.index;
        e["lambda"] = {p.lambda.real(), p.lambda.imag()};
        put_complex_vector(e["v"], p.v);
        put_complex_vector(e["u"], p.u);
        pairs.push_back(std::move(e));
    }
    j["pairs"] = std::move(pairs);
    json res = json::array();
    for (const auto& e : s.resonances.entries) res.push_back({{"target", e.target}, {"k", e.k}});
    j["resonances"] = std::move(res);
    json coeffs = json::array();
    for (int idx = 0; idx < s.set.size(); ++idx) {
        if (s.W.col(idx).isZero(0.0) && s.R.col(idx).isZero(0.0)) continue;
        json e;
        e["k"] = s.set.at(idx);
        put_complex_vector(e["W"], s.W.col(idx));
        put_complex_vector(e["R"], s.R.col(idx));
        coeffs.push_back(std::move(e));
    }
    j["coefficients"] = std::move(coeffs);
    return j.dump(1);
}

SSMModel ssm_from_json(const std::string& text, std::string* model_hash) {
    json j;
    try {
        j = json::parse(text);
        if (j.value("format", "") != "ssmc-ssm") throw ModelError("SSM file: missing or wrong \"format\" tag");
        SSMModel s;
        s.order = j.at("order").get<int>();
        s.res_tol = j.at("res_tol").get<double>();
        const int N = j.at("N").get<int>();
        std::vector<spectral::EigenPair> pairs;
        for (const auto& e : j.at("pairs")) {
            spectral::EigenPair p;
            p.index = e.at("index").get<int>();
            p.lambda = cplx(e.at("lambda")[0].get<double>(), e.at("lambda")[1].get<double>());
            p.v = get_complex_vector(e.at("v"), N, "pairs.v");
            p.u = get_complex_vector(e.at("u"), N, "pairs.u");
            pairs.push_back(std::move(p));
        }
        s.master = spectral::MasterSubspace::from_pairs(std::move(pairs));
        s.set = MultiIndexSet(s.master.dim(), s.order);
        s.W = Eigen::MatrixXcd::Zero(N, s.set.size());
        s.R = Eigen::MatrixXcd::Zero(s.master.dim(), s.set.size());
        for (const auto& e : j.at("resonances"))
            s.resonances.entries.push_back({e.at("target").get<int>(), e.at("k").get<MultiIndex>()});
        for (const auto& e : j.at("coefficients")) {
            const int idx = s.set.index_of(e.at("k").get<MultiIndex>());
            if (idx < 0) throw ModelError("SSM file: coefficient multi-index outside the declared order");
            s.W.col(idx) = get_complex_vector(e.at("W"), N, "coefficients.W");
            s.R.col(idx) = get_complex_vector(e.at("R"), s.master.dim(), "coefficients.R");
        }
        if (model_hash) *model_hash = j.value("model_hash", "");
        return s;
    } catch (const json::exception& e) {
        throw ModelError(std::string("SSM file is malformed: ") + e.what());
    }
}

void write_trajectory_csv(std::ostream& out, const ReducedTrajectory& traj) {
    out << "t";
    for (Eigen::Index i = 0; i < traj.p.rows(); ++i) out << ",re_p" << i + 1 << ",im_p" << i + 1;
    out << '\n';
    char buf[64];
    for (std::size_t j = 0; j < traj.times.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", traj.times[j]);
        out << buf;
        for (Eigen::Index i = 0; i < traj.p.rows(); ++i) {
            const cplx v = traj.p(i, static_cast<Eigen::Index>(j));
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g", v.real(), v.imag());
            out << buf;
        }
        out << '\n';
    }
}

} // namespace ssmc::ssm
