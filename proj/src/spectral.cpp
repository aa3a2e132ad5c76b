#include "ssmc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "ssmc/errors.hpp"

namespace ssmc::spectral {

namespace {

using SparseC = Eigen::SparseMatrix<cplx>;

struct RawMode {
    cplx lambda;
    Eigen::VectorXcd v;
    Eigen::VectorXcd u; // unnormalized left vector (may be empty until computed)
};

void fix_phase_and_scale(const mech::FirstOrderSystem& fo, Eigen::VectorXcd& v) {
    // Lowest index among (numerically) tied largest components, so symmetric
    // mode shapes get the same phase from every solver path.
    const double vmax = v.cwiseAbs().maxCoeff();
    Eigen::Index imax = 0;
    while (std::abs(v(imax)) < (1.0 - 1e-8) * vmax) ++imax;
    const double mag = std::abs(v(imax));
    if (mag == 0.0) throw NumericalError("eigensolver returned a zero eigenvector");
    v *= std::conj(v(imax)) / mag;
    v(imax) = v(imax).real();

    double scale = 0.0;
    if (fo.mass.rows() == fo.n && fo.n > 0 && v.size() == 2 * fo.n) {
        const Eigen::VectorXcd phi = v.head(fo.n);
        const Eigen::VectorXcd Mphi = fo.mass.cast<cplx>() * phi;
        scale = std::sqrt(std::abs(phi.dot(Mphi).real()));
    }
    if (!(scale > 0.0)) scale = v.norm();
    v /= scale;
}

void finalize_left(const mech::FirstOrderSystem& fo, const Eigen::VectorXcd& v, Eigen::VectorXcd& u) {
    const Eigen::VectorXcd Bv = fo.B.cast<cplx>() * v;
    const cplx s = u.dot(Bv); // u^* B v
    if (std::abs(s) < 1e-300) throw NumericalError("defective pencil: left and right eigenvectors are B-orthogonal");
    u /= std::conj(s);
}

bool is_real_eig(cplx lambda, double tol) { return std::abs(lambda.imag()) <= tol * std::max(1.0, std::abs(lambda)); }

void order_modes(std::vector<RawMode>& modes, Ordering ordering) {
    auto key = [ordering](const RawMode& m) {
        return ordering == Ordering::real_part_descending ? std::pair{-m.lambda.real(), m.lambda.imag()}
                                                          : std::pair{std::abs(m.lambda.imag()), -m.lambda.real()};
    };
    std::stable_sort(modes.begin(), modes.end(), [&](const RawMode& a, const RawMode& b) { return key(a) < key(b); });
}

// Representatives: positive imaginary part or numerically real.
std::vector<RawMode> pick_representatives(const Eigen::VectorXcd& values, const Eigen::MatrixXcd& vectors,
                                          const Eigen::MatrixXcd* left, double tol) {
    std::vector<RawMode> out;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        cplx lam = values(i);
        const bool real = is_real_eig(lam, tol);
        if (!real && lam.imag() < 0.0) continue;
        RawMode m{real ? cplx(lam.real(), 0.0) : lam, vectors.col(i), {}};
        if (left) m.u = left->col(i);
        if (real) {
            m.v = m.v.real().cast<cplx>().eval();
            if (left) m.u = m.u.real().cast<cplx>().eval();
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<RawMode> dense_modes(const mech::FirstOrderSystem& fo, const EigenOptions& opts) {
    const Eigen::MatrixXd A = Eigen::MatrixXd(fo.A);
    const Eigen::MatrixXd B = Eigen::MatrixXd(fo.B);
    Eigen::FullPivLU<Eigen::MatrixXd> blu(B);
    if (!blu.isInvertible()) throw NumericalError("B is singular; the generalized eigenproblem has infinite eigenvalues");

    const Eigen::MatrixXd BinvA = blu.solve(A);
    Eigen::EigenSolver<Eigen::MatrixXd> es(BinvA, true);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");

    const Eigen::VectorXcd values = es.eigenvalues();
    const Eigen::MatrixXcd V = es.eigenvectors();
    Eigen::PartialPivLU<Eigen::MatrixXcd> vlu(V);
    const double rc = vlu.rcond();
    if (!(rc > 1e-13)) {
        std::ostringstream msg;
        msg << "defective pencil: eigenvector matrix reciprocal condition " << rc;
        throw NumericalError(msg.str());
    }
    // Rows of V^-1 B^-1 are the left eigenvectors u_i^*.
    const Eigen::MatrixXcd Vinv = vlu.inverse();
    const Eigen::MatrixXcd Ustar = Vinv * blu.inverse().cast<cplx>();
    const Eigen::MatrixXcd U = Ustar.adjoint();
    return pick_representatives(values, V, &U, opts.tolerance * 1e2);
}

// Orthonormalize w against the first k columns of Q (two passes of classical Gram-Schmidt).
Eigen::VectorXcd orthogonalize(const Eigen::MatrixXcd& Q, int k, Eigen::VectorXcd w, Eigen::VectorXcd& h) {
    h = Eigen::VectorXcd::Zero(k);
    for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXcd c = Q.leftCols(k).adjoint() * w;
        w -= Q.leftCols(k) * c;
        h += c;
    }
    return w;
}

std::vector<RawMode> iterative_modes(const mech::FirstOrderSystem& fo, int count, const EigenOptions& opts) {
    const int N = fo.N;
    const SparseC Ac = fo.A.cast<cplx>();
    const SparseC Bc = fo.B.cast<cplx>();
    const cplx sigma = opts.shift;

    SparseC shifted = Ac - sigma * Bc;
    shifted.makeCompressed();
    Eigen::SparseLU<SparseC> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) throw NumericalError("shift-invert factorization failed (shift is an eigenvalue?)");

    // Want `count` representatives; conjugates come in pairs, so ask for 2 count
    // Ritz values plus a margin.
    const int nev = std::min(N - 1, 2 * count + 2);
    const int krylov = std::min(N, std::max(2 * nev + 20, 40));

    std::mt19937_64 rng(20240611);
    std::normal_distribution<double> gauss;
    Eigen::VectorXcd start(N);
    for (int i = 0; i < N; ++i) start(i) = gauss(rng);
    start.normalize();

    Eigen::MatrixXcd Q(N, krylov + 1);
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(krylov + 1, krylov);
    Eigen::VectorXcd theta;
    Eigen::MatrixXcd Y;
    std::vector<int> wanted;
    bool converged = false;

    for (int restart = 0; restart <= opts.max_restarts && !converged; ++restart) {
        Q.col(0) = start;
        H.setZero();
        int built = krylov;
        for (int j = 0; j < krylov; ++j) {
            Eigen::VectorXcd w = lu.solve(Bc * Q.col(j));
            Eigen::VectorXcd h;
            w = orthogonalize(Q, j + 1, w, h);
            H.col(j).head(j + 1) = h;
            const double beta = w.norm();
            H(j + 1, j) = beta;
            if (beta < 1e-14 * h.norm()) {
                built = j + 1;
                break;
            }
            Q.col(j + 1) = w / beta;
        }

        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> ces(H.topLeftCorner(built, built));
        if (ces.info() != Eigen::Success) throw NumericalError("Arnoldi: Hessenberg eigensolver failed");
        theta = ces.eigenvalues();
        Y = ces.eigenvectors();

        std::vector<int> order(static_cast<std::size_t>(built));
        for (int i = 0; i < built; ++i) order[static_cast<std::size_t>(i)] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return std::abs(theta(a)) > std::abs(theta(b)); });
        wanted.assign(order.begin(), order.begin() + std::min(nev, built));

        const double beta_last = built < krylov + 1 ? std::abs(H(built, built - 1)) : 0.0;
        converged = true;
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero(N);
        for (int i : wanted) {
            const double resid = beta_last * std::abs(Y(built - 1, i));
            if (resid > opts.tolerance * std::abs(theta(i))) converged = false;
            next += Q.leftCols(built) * Y.col(i);
        }
        if (built < krylov) converged = true; // invariant subspace found
        if (!converged) start = next.normalized();
        if (!converged && restart == opts.max_restarts) throw NumericalError("shift-invert Arnoldi did not converge");
        if (converged) {
            Q.conservativeResize(Eigen::NoChange, built);
            Y.conservativeResize(built, Eigen::NoChange);
        }
    }

    const int built = static_cast<int>(Q.cols());
    Eigen::VectorXcd values(static_cast<Eigen::Index>(wanted.size()));
    Eigen::MatrixXcd vectors(N, static_cast<Eigen::Index>(wanted.size()));
    for (std::size_t i = 0; i < wanted.size(); ++i) {
        values(static_cast<Eigen::Index>(i)) = sigma + 1.0 / theta(wanted[i]);
        vectors.col(static_cast<Eigen::Index>(i)) = (Q.leftCols(built) * Y.col(wanted[i])).normalized();
    }
    auto modes = pick_representatives(values, vectors, nullptr, std::max(opts.tolerance * 1e2, 1e-8));

    // Left vectors by inverse iteration on the adjoint pencil.
    for (auto& m : modes) {
        const cplx near = m.lambda + cplx(1e-9, 1e-9) * std::max(1.0, std::abs(m.lambda));
        SparseC adj = SparseC((Ac - near * Bc).adjoint());
        adj.makeCompressed();
        Eigen::SparseLU<SparseC> alu;
        alu.compute(adj);
        if (alu.info() != Eigen::Success) throw NumericalError("left-eigenvector factorization failed");
        Eigen::VectorXcd y = Bc.adjoint() * m.v;
        for (int it = 0; it < 4; ++it) y = alu.solve(Bc.adjoint() * y).normalized();
        m.u = y;
    }
    return modes;
}

} // namespace

double EigenPair::frequency_hz() const { return std::abs(lambda.imag()) / (2.0 * std::numbers::pi); }

std::vector<EigenPair> solve_modes(const mech::FirstOrderSystem& fo, int count, Ordering ordering,
                                   const EigenOptions& opts) {
    if (count <= 0 || 2 * count > fo.N) {
        std::ostringstream msg;
        msg << "solve_modes: requested " << count << " modes for state dimension " << fo.N;
        throw PreconditionError(msg.str());
    }
    std::vector<RawMode> modes = fo.N <= opts.dense_threshold ? dense_modes(fo, opts) : iterative_modes(fo, count, opts);
    order_modes(modes, ordering);
    if (static_cast<int>(modes.size()) < count) throw NumericalError("solve_modes: eigensolver returned too few modes");
    modes.resize(static_cast<std::size_t>(count));

    const bool dense = fo.N <= opts.dense_threshold;
    const double anorm = Eigen::MatrixXd(fo.A).norm();
    const double tol = dense ? 1e-8 : 1e-6;

    std::vector<EigenPair> out;
    out.reserve(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        auto& m = modes[i];
        fix_phase_and_scale(fo, m.v);
        finalize_left(fo, m.v, m.u);
        const Eigen::VectorXcd res = fo.A.cast<cplx>() * m.v - m.lambda * (fo.B.cast<cplx>() * m.v);
        if (res.norm() > tol * std::max(anorm, 1.0) * m.v.norm()) {
            std::ostringstream msg;
            msg << "eigenpair " << i + 1 << " residual " << res.norm() << " exceeds tolerance";
            throw NumericalError(msg.str());
        }
        out.push_back({m.lambda, std::move(m.v), std::move(m.u), static_cast<int>(i) + 1});
    }
    return out;
}

MasterSubspace MasterSubspace::from_pairs(std::vector<EigenPair> pairs) {
    if (pairs.empty()) throw PreconditionError("master subspace needs at least one pair");
    const Eigen::Index N = pairs.front().v.size();
    MasterSubspace ms;
    ms.V.resize(N, static_cast<Eigen::Index>(2 * pairs.size()));
    ms.U.resize(N, ms.V.cols());
    ms.lambda.resize(ms.V.cols());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.is_real()) throw PreconditionError("master subspace pairs must be complex conjugate pairs");
        const auto c = static_cast<Eigen::Index>(2 * i);
        ms.V.col(c) = p.v;
        ms.V.col(c + 1) = p.v.conjugate();
        ms.U.col(c) = p.u;
        ms.U.col(c + 1) = p.u.conjugate();
        ms.lambda(c) = p.lambda;
        ms.lambda(c + 1) = std::conj(p.lambda);
    }
    ms.pairs = std::move(pairs);
    return ms;
}

bool ResonanceSet::contains(int target, const MultiIndex& k) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const ResonanceEntry& e) { return e.target == target && e.k == k; });
}

std::vector<int> ResonanceSet::targets_for(const MultiIndex& k) const {
    std::vector<int> out;
    for (const auto& e : entries)
        if (e.k == k) out.push_back(e.target);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ResonanceSet detect_inner_resonances(const Eigen::VectorXcd& lambda_E, int max_order, double rel_tol) {
    const int d = static_cast<int>(lambda_E.size());
    if (d == 0) return {};
    ResonanceSet rs;
    const MultiIndexSet set(d, std::max(max_order, 1));
    for (int j = 0; j < d; ++j) rs.entries.push_back({j, set.at(set.unit_index(j))});
    for (int order = 2; order <= max_order; ++order) {
        for (int idx = set.order_begin(order); idx < set.order_end(order); ++idx) {
            const auto& k = set.at(idx);
            cplx kl = 0.0;
            for (int i = 0; i < d; ++i) kl += static_cast<double>(k[static_cast<std::size_t>(i)]) * lambda_E(i);
            for (int j = 0; j < d; ++j)
                if (std::abs(kl - lambda_E(j)) <= rel_tol * std::abs(lambda_E(j))) rs.entries.push_back({j, k});
        }
    }
    return rs;
}

Eigen::Matrix2cd solve_lyapunov_2x2(const Eigen::Vector2cd& d, const Eigen::Matrix2cd& rhs) {
    if (!(d(0).real() < 0.0) || !(d(1).real() < 0.0))
        throw PreconditionError("Lyapunov equation requires eigenvalues with negative real part");
    Eigen::Matrix2cd W;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            const cplx den = d(a) + d(b);
            if (std::abs(den) < 1e-300) throw NumericalError("Lyapunov equation: vanishing denominator");
            W(a, b) = -rhs(a, b) / den;
        }
    }
    return W;
}

void write_spectrum_csv(std::ostream& out, const std::vector<EigenPair>& modes) {
    out << "index,re_lambda,im_lambda,damping_ratio,frequency_hz\n";
    char buf[256];
    int row = 1;
    auto emit = [&](cplx lam, double zeta, double f) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", row++, lam.real(), lam.imag(), zeta, f);
        out << buf;
    };
    for (const auto& m : modes) {
        emit(m.lambda, m.damping_ratio(), m.frequency_hz());
        if (!m.is_real()) emit(std::conj(m.lambda), m.damping_ratio(), m.frequency_hz());
    }
}

} // namespace ssmc::spectral
