#include "ssmc/linred.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ssmc/errors.hpp"
#include "ssmc/kernels.hpp"

namespace ssmc::linred {

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

// Modal realization (diag, Btilde, Ctilde) of one pair (or one real mode).
struct ModalBlock {
    Eigen::VectorXcd d;
    Eigen::MatrixXcd Bt; // modes x q
    Eigen::MatrixXcd Ct; // obs x modes
};

ModalBlock modal_block(const spectral::EigenPair& p, const Eigen::MatrixXd& Bext, const Eigen::MatrixXd& C) {
    if (p.v.size() != Bext.rows() || C.cols() != p.v.size())
        throw PreconditionError("modal metrics: eigenvector, Bext and C dimensions disagree");
    const Eigen::RowVectorXcd uB = p.u.adjoint() * Bext.cast<cplx>();
    const Eigen::VectorXcd Cv = C.cast<cplx>() * p.v;
    ModalBlock b;
    if (p.is_real()) {
        b.d = Eigen::VectorXcd::Constant(1, p.lambda);
        b.Bt = uB;
        b.Ct = Cv;
    } else {
        b.d.resize(2);
        b.d << p.lambda, std::conj(p.lambda);
        b.Bt.resize(2, Bext.cols());
        b.Bt.row(0) = uB;
        b.Bt.row(1) = uB.conjugate();
        b.Ct.resize(C.rows(), 2);
        b.Ct.col(0) = Cv;
        b.Ct.col(1) = Cv.conjugate();
    }
    return b;
}

Eigen::MatrixXcd lyapunov_diag(const Eigen::VectorXcd& d, const Eigen::MatrixXcd& rhs) {
    if (d.size() == 2) return spectral::solve_lyapunov_2x2(d, rhs);
    if (!(d(0).real() < 0.0)) throw PreconditionError("Lyapunov equation requires eigenvalues with negative real part");
    return -rhs / (2.0 * d(0));
}

void normalize(std::vector<ModalRanking>& r) {
    double sd = 0.0, sm = 0.0;
    for (const auto& x : r)
        if (x.stable) {
            sd += x.dcgain;
            sm += x.mhsv;
        }
    for (auto& x : r) {
        x.normalized_dcgain = x.stable && sd > 0.0 ? x.dcgain / sd : 0.0;
        x.normalized_mhsv = x.stable && sm > 0.0 ? x.mhsv / sm : 0.0;
    }
}

} // namespace

double pair_dcgain(const spectral::EigenPair& pair, const Eigen::MatrixXd& Bext, const Eigen::MatrixXd& C) {
    if (pair.lambda == cplx(0.0)) throw PreconditionError("DC gain undefined for a zero eigenvalue");
    const ModalBlock b = modal_block(pair, Bext, C);
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(C.rows(), Bext.cols());
    for (Eigen::Index i = 0; i < b.d.size(); ++i) G -= b.Ct.col(i) * b.Bt.row(i) / b.d(i);
    const Eigen::MatrixXd Gr = G.real();
    if (Gr.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(Gr).singularValues()(0);
}

double pair_mhsv(const spectral::EigenPair& pair, const Eigen::MatrixXd& Bext, const Eigen::MatrixXd& C) {
    const ModalBlock b = modal_block(pair, Bext, C);
    const Eigen::MatrixXcd Wc = lyapunov_diag(b.d, b.Bt * b.Bt.transpose());
    const Eigen::MatrixXcd Wo = lyapunov_diag(b.d, b.Ct.transpose() * b.Ct);
    const Eigen::MatrixXcd prod = Wc * Wo;
    return std::sqrt(Eigen::JacobiSVD<Eigen::MatrixXcd>(prod).singularValues()(0));
}

std::vector<ModalRanking> rank_modes(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                     const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced,
                                     bool parallel) {
    if (m_hat <= 0 || m_hat > static_cast<int>(pairs.size())) {
        std::ostringstream msg;
        msg << "metric truncation m_hat = " << m_hat << " with " << pairs.size() << " pairs available";
        throw PreconditionError(msg.str());
    }
    std::vector<ModalRanking> out(static_cast<std::size_t>(m_hat));
    for (int i = 0; i < m_hat; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        auto& r = out[static_cast<std::size_t>(i)];
        r.pair_index = p.index > 0 ? p.index : i + 1;
        r.frequency = std::abs(p.lambda.imag());
        r.stable = p.lambda.real() < 0.0;
        if (!r.stable && !contains(forced, r.pair_index)) {
            std::ostringstream msg;
            msg << "pair " << r.pair_index << " (lambda = " << p.lambda.real() << (p.lambda.imag() < 0 ? "" : "+")
                << p.lambda.imag() << "i) is not asymptotically stable; include it in the forced pairs";
            throw PreconditionError(msg.str());
        }
    }
    std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic) if (parallel && m_hat > 4)
    for (int i = 0; i < m_hat; ++i) {
        auto& r = out[static_cast<std::size_t>(i)];
        if (!r.stable) continue;
        try {
            r.dcgain = pair_dcgain(pairs[static_cast<std::size_t>(i)], Bext, C);
            r.mhsv = pair_mhsv(pairs[static_cast<std::size_t>(i)], Bext, C);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    normalize(out);
    return out;
}

std::vector<ModalRanking> dcgains(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                  const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced) {
    auto r = rank_modes(pairs, Bext, C, m_hat, forced);
    for (auto& x : r) x.mhsv = x.normalized_mhsv = 0.0;
    return r;
}

std::vector<ModalRanking> mhsvs(std::span<const spectral::EigenPair> pairs, const Eigen::MatrixXd& Bext,
                                const Eigen::MatrixXd& C, int m_hat, const std::vector<int>& forced) {
    auto r = rank_modes(pairs, Bext, C, m_hat, forced);
    for (auto& x : r) x.dcgain = x.normalized_dcgain = 0.0;
    return r;
}

std::vector<int> select_basis(const std::vector<ModalRanking>& rankings, Metric metric, double threshold,
                              const std::vector<int>& forced) {
    if (!(threshold >= 0.0) || threshold > 1.0) throw PreconditionError("selection threshold must lie in [0, 1]");
    auto value = [metric](const ModalRanking& r) {
        return metric == Metric::dcgain ? r.normalized_dcgain : r.normalized_mhsv;
    };
    std::vector<int> chosen;
    double cumulative = 0.0;
    for (int f : forced) {
        auto it = std::find_if(rankings.begin(), rankings.end(), [f](const ModalRanking& r) { return r.pair_index == f; });
        if (it == rankings.end()) {
            std::ostringstream msg;
            msg << "forced pair " << f << " is not among the ranked pairs";
            throw PreconditionError(msg.str());
        }
        if (!contains(chosen, f)) {
            chosen.push_back(f);
            cumulative += value(*it);
        }
    }
    for (const auto& r : rankings)
        if (!r.stable && !contains(chosen, r.pair_index)) chosen.push_back(r.pair_index);

    std::vector<const ModalRanking*> order;
    for (const auto& r : rankings)
        if (r.stable && !contains(chosen, r.pair_index)) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(), [&](const ModalRanking* a, const ModalRanking* b) {
        if (value(*a) != value(*b)) return value(*a) > value(*b);
        return a->pair_index < b->pair_index;
    });
    const double target = threshold - 1e-12;
    for (const auto* r : order) {
        if (cumulative >= target) break;
        chosen.push_back(r->pair_index);
        cumulative += value(*r);
    }
    if (cumulative < target) {
        std::ostringstream msg;
        msg << "selection threshold " << threshold << " unreachable: all ranked pairs give " << cumulative;
        throw PreconditionError(msg.str());
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

double default_threshold(Metric metric) { return metric == Metric::dcgain ? 0.9 : 0.97; }

int default_m_hat(int n) { return std::min(50, n); }

Eigen::MatrixXd collocated_observation(const mech::FirstOrderSystem& fo) {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(fo.Bext.cols(), fo.N);
    C.leftCols(fo.n) = fo.Bext.topRows(fo.n).transpose();
    return C;
}

Eigen::VectorXcd ReducedLinearModel::forcing_complex(double t) const {
    if (Fext.empty()) return Eigen::VectorXcd::Zero(dim());
    return U.adjoint() * Fext.eval(t).cast<cplx>();
}

Eigen::VectorXd ReducedLinearModel::forcing(double t) const {
    if (!realified) throw PreconditionError("real forcing requested from a complex reduced model");
    if (Fext.empty()) return Eigen::VectorXd::Zero(dim());
    return U_r.transpose() * Fext.eval(t);
}

ReducedLinearModel build_reduced_linear(std::span<const spectral::EigenPair> pairs, const std::vector<int>& selection,
                                        const Eigen::MatrixXd& Bext, const mech::ForcingSignal& Fext,
                                        const Eigen::MatrixXd& C_obs) {
    if (selection.empty()) throw PreconditionError("reduced linear model needs a nonempty selection");
    ReducedLinearModel m;
    m.selection = selection;
    int dim = 0;
    for (int s : selection) {
        if (s < 1 || s > static_cast<int>(pairs.size())) {
            std::ostringstream msg;
            msg << "selected pair " << s << " out of range [1, " << pairs.size() << "]";
            throw PreconditionError(msg.str());
        }
        m.pairs.push_back(pairs[static_cast<std::size_t>(s - 1)]);
        dim += m.pairs.back().is_real() ? 1 : 2;
    }
    const Eigen::Index N = Bext.rows();
    m.lambda.resize(dim);
    m.U.resize(N, dim);
    m.V.resize(N, dim);
    int c = 0;
    for (const auto& p : m.pairs) {
        m.lambda(c) = p.lambda;
        m.V.col(c) = p.v;
        m.U.col(c) = p.u;
        ++c;
        if (!p.is_real()) {
            m.lambda(c) = std::conj(p.lambda);
            m.V.col(c) = p.v.conjugate();
            m.U.col(c) = p.u.conjugate();
            ++c;
        }
    }
    m.Bhat = m.U.adjoint() * Bext.cast<cplx>();
    m.C_obs = C_obs;
    m.Fext = Fext;
    if (!Fext.empty() && Fext.dim != N) throw PreconditionError("reduced linear model: forcing dimension mismatch");
    return m;
}

ReducedLinearModel realify(ReducedLinearModel m) {
    if (m.realified) return m;
    const int dim = m.dim();
    const Eigen::Index N = m.V.rows();
    m.Lambda_r = Eigen::MatrixXd::Zero(dim, dim);
    m.V_r.resize(N, dim);
    m.U_r.resize(N, dim);
    const double r2 = std::numbers::sqrt2;
    int c = 0;
    for (const auto& p : m.pairs) {
        if (p.is_real()) {
            m.Lambda_r(c, c) = p.lambda.real();
            m.V_r.col(c) = p.v.real();
            m.U_r.col(c) = p.u.real();
            ++c;
            continue;
        }
        const double a = p.lambda.real(), b = p.lambda.imag();
        m.Lambda_r(c, c) = a;
        m.Lambda_r(c, c + 1) = -b;
        m.Lambda_r(c + 1, c) = b;
        m.Lambda_r(c + 1, c + 1) = a;
        m.V_r.col(c) = r2 * p.v.real();
        m.V_r.col(c + 1) = -r2 * p.v.imag();
        m.U_r.col(c) = r2 * p.u.real();
        m.U_r.col(c + 1) = -r2 * p.u.imag();
        c += 2;
    }
    m.B_r = Eigen::MatrixXd::Zero(dim, m.inputs());
    c = 0;
    for (const auto& p : m.pairs) {
        if (p.is_real()) {
            m.B_r.row(c) = m.Bhat.row(c).real();
            ++c;
        } else {
            m.B_r.row(c) = r2 * m.Bhat.row(c).real();
            m.B_r.row(c + 1) = r2 * m.Bhat.row(c).imag();
            c += 2;
        }
    }
    m.realified = true;
    return m;
}

Eigen::VectorXcd reduced_initial_condition_complex(const ReducedLinearModel& model, const mech::SparseMatrix& B,
                                                   const Eigen::VectorXd& z0, const Eigen::VectorXd& W_p0,
                                                   double epsilon) {
    if (!(epsilon > 0.0)) throw PreconditionError("reduced initial condition requires epsilon > 0");
    const Eigen::VectorXd d = B * (z0 - W_p0);
    return model.U.adjoint() * d.cast<cplx>() / epsilon;
}

Eigen::VectorXd reduced_initial_condition(const ReducedLinearModel& model, const mech::SparseMatrix& B,
                                          const Eigen::VectorXd& z0, const Eigen::VectorXd& W_p0, double epsilon) {
    if (!(epsilon > 0.0)) throw PreconditionError("reduced initial condition requires epsilon > 0");
    if (!model.realified) throw PreconditionError("real initial condition requested from a complex reduced model");
    const Eigen::VectorXd d = B * (z0 - W_p0);
    return model.U_r.transpose() * d / epsilon;
}

HinfCheck hinf_bound_check(const mech::FirstOrderSystem& fo, std::span<const spectral::EigenPair> pairs,
                           const std::vector<int>& selection, const Eigen::MatrixXd& C,
                           std::span<const double> omegas) {
    HinfCheck out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const int idx = static_cast<int>(i) + 1;
        if (contains(selection, idx)) continue;
        if (!(pairs[i].lambda.real() < 0.0)) {
            std::ostringstream msg;
            msg << "truncated pair " << idx << " is not stable";
            throw PreconditionError(msg.str());
        }
        out.bound += 4.0 * pair_mhsv(pairs[i], fo.Bext, C);
    }
    Eigen::MatrixXcd CV(C.rows(), 0), UB(0, fo.Bext.cols());
    Eigen::VectorXcd lam(0);
    if (!selection.empty()) {
        const auto model = build_reduced_linear(pairs, selection, fo.Bext, {}, C);
        CV = C.cast<cplx>() * model.V;
        UB = model.Bhat;
        lam = model.lambda;
    }
    const Eigen::MatrixXcd A = Eigen::MatrixXd(fo.A).cast<cplx>();
    const Eigen::MatrixXcd B = Eigen::MatrixXd(fo.B).cast<cplx>();
    const auto gaps = kernels::transfer_gap_omp(A, B, fo.Bext.cast<cplx>(), C.cast<cplx>(), CV, lam, UB, omegas);
    for (std::size_t j = 0; j < gaps.size(); ++j) {
        if (gaps[j] > out.measured_gap) {
            out.measured_gap = gaps[j];
            out.worst_frequency = omegas[j];
        }
    }
    return out;
}

std::vector<double> default_frequency_grid(std::span<const spectral::EigenPair> pairs) {
    double lo = 1e300, hi = 0.0;
    std::vector<double> grid{0.0};
    for (const auto& p : pairs) {
        const double a = std::abs(p.lambda);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
        if (!p.is_real()) grid.push_back(std::abs(p.lambda.imag()));
    }
    if (pairs.empty()) return grid;
    const double l0 = std::log10(lo) - 2.0, l1 = std::log10(hi) + 2.0;
    for (int i = 0; i < 200; ++i) grid.push_back(std::pow(10.0, l0 + (l1 - l0) * i / 199.0));
    std::sort(grid.begin(), grid.end());
    return grid;
}

void write_ranking_csv(std::ostream& out, const std::vector<ModalRanking>& rankings, const std::vector<int>& selection) {
    out << "pair_index,frequency,dcgain,mhsv,normalized_dcgain,normalized_mhsv,selected\n";
    char buf[512];
    for (const auto& r : rankings) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.pair_index, r.frequency, r.dcgain,
                      r.mhsv, r.normalized_dcgain, r.normalized_mhsv, contains(selection, r.pair_index) ? 1 : 0);
        out << buf;
    }
}

} // namespace ssmc::linred
