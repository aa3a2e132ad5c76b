#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "ssmc/errors.hpp"
#include "ssmc/kernels.hpp"
#include "ssmc/linred.hpp"
#include "ssmc/mechmodel.hpp"
#include "ssmc/spectral.hpp"

using namespace ssmc;
using namespace ssmc::linred;

namespace {

struct Chain {
    mech::FirstOrderSystem fo;
    std::vector<spectral::EigenPair> pairs;
    Eigen::MatrixXd C;
};

const Chain& chain() {
    static const Chain c = [] {
        Chain r;
        r.fo = mech::to_first_order(mech::build_oscillator_chain(mech::ChainParams{}));
        r.pairs = spectral::solve_modes(r.fo, 10, spectral::Ordering::frequency_ascending);
        r.C = collocated_observation(r.fo);
        return r;
    }();
    return c;
}

mech::SecondOrderSystem random_system(int n, int q, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd L(n, n), G(n, n), D(n, q);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            L(i, j) = u(rng);
            G(i, j) = u(rng);
        }
        for (int j = 0; j < q; ++j) D(i, j) = u(rng);
    }
    mech::SecondOrderSystem s;
    s.n = n;
    const Eigen::MatrixXd M = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd K = G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    s.M = M.sparseView();
    s.K = K.sparseView();
    s.Cd = (0.02 * M + 0.03 * K).sparseView();
    s.f = PolynomialMap(2 * n, n);
    s.D = D;
    return s;
}

// Real Lyapunov A X + X A^T + Q = 0 through the Kronecker form.
Eigen::MatrixXd lyap_kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
    const Eigen::Index n = A.rows();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            L.block(i * n, j * n, n, n) += A(i, j) * I;
            L.block(i * n, j * n, n, n) += (i == j ? 1.0 : 0.0) * A;
        }
    const Eigen::VectorXd x = L.fullPivLu().solve(-Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n));
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n);
}

} // namespace

TEST_CASE("chain metric sums over the first five pairs") {
    const auto& c = chain();
    const auto r = rank_modes(c.pairs, c.fo.Bext, c.C, 10);
    REQUIRE(r.size() == 10);
    double sd = 0.0, sm = 0.0, td = 0.0, tm = 0.0;
    for (int i = 0; i < 10; ++i) {
        if (i < 5) {
            sd += r[i].normalized_dcgain;
            sm += r[i].normalized_mhsv;
        }
        td += r[i].normalized_dcgain;
        tm += r[i].normalized_mhsv;
        CHECK(r[i].pair_index == i + 1);
        CHECK(r[i].dcgain > 0.0);
        CHECK(r[i].mhsv > 0.0);
    }
    CHECK(std::abs(sd - 0.907) < 5e-3);
    CHECK(std::abs(sm - 0.978) < 5e-3);
    CHECK(std::abs(td - 1.0) < 1e-14);
    CHECK(std::abs(tm - 1.0) < 1e-14);
}

TEST_CASE("serial and parallel ranking agree exactly") {
    const auto& c = chain();
    const auto a = rank_modes(c.pairs, c.fo.Bext, c.C, 10, {}, false);
    const auto b = rank_modes(c.pairs, c.fo.Bext, c.C, 10, {}, true);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].dcgain == b[i].dcgain);
        CHECK(a[i].mhsv == b[i].mhsv);
    }
}

TEST_CASE("single pair normalizes to one") {
    const auto& c = chain();
    const auto r = rank_modes(c.pairs, c.fo.Bext, c.C, 1);
    CHECK(r[0].normalized_dcgain == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r[0].normalized_mhsv == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("one-DOF static gain is D^2 / k") {
    mech::SecondOrderSystem s;
    s.n = 1;
    s.M = Eigen::MatrixXd::Constant(1, 1, 1.5).sparseView();
    s.K = Eigen::MatrixXd::Constant(1, 1, 2.0).sparseView();
    s.Cd = Eigen::MatrixXd::Constant(1, 1, 0.1).sparseView();
    s.f = PolynomialMap(2, 1);
    s.D = Eigen::MatrixXd::Constant(1, 1, 0.7);
    const auto fo = mech::to_first_order(s);
    const auto pairs = spectral::solve_modes(fo, 1, spectral::Ordering::frequency_ascending);
    CHECK(pair_dcgain(pairs[0], fo.Bext, collocated_observation(fo)) == doctest::Approx(0.49 / 2.0).epsilon(1e-12));
}

TEST_CASE("modal static gains sum to the full static gain") {
    const auto s = random_system(5, 2, 3);
    const auto fo = mech::to_first_order(s);
    const auto pairs = spectral::solve_modes(fo, 5, spectral::Ordering::frequency_ascending);
    const Eigen::MatrixXd C = collocated_observation(fo);
    const Eigen::MatrixXd G0 = -C * Eigen::MatrixXd(fo.A).fullPivLu().solve(fo.Bext);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(C.rows(), fo.Bext.cols());
    for (const auto& p : pairs)
        sum += (-2.0 * ((C.cast<cplx>() * p.v) * (p.u.adjoint() * fo.Bext.cast<cplx>()) / p.lambda).real());
    CHECK((sum - G0).norm() < 1e-10 * G0.norm());

    // a single-output single-input system makes each pair gain the absolute value of its term
    const Eigen::MatrixXd Cs = C.topRows(1);
    const Eigen::MatrixXd Bs = fo.Bext.leftCols(1);
    for (const auto& p : pairs) {
        const double term = (-2.0 * ((Cs.cast<cplx>() * p.v) * (p.u.adjoint() * Bs.cast<cplx>()) / p.lambda).real())(0, 0);
        CHECK(pair_dcgain(p, Bs, Cs) == doctest::Approx(std::abs(term)).epsilon(1e-12));
    }
}

TEST_CASE("MHSV matches real modal Gramians") {
    const auto s = random_system(4, 2, 11);
    const auto fo = mech::to_first_order(s);
    const auto pairs = spectral::solve_modes(fo, 4, spectral::Ordering::frequency_ascending);
    const Eigen::MatrixXd C = collocated_observation(fo);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto rm = realify(build_reduced_linear(pairs, {static_cast<int>(i) + 1}, fo.Bext, {}, C));
        const Eigen::MatrixXd Cr = C * rm.V_r;
        const Eigen::MatrixXd Wc = lyap_kron(rm.Lambda_r, rm.B_r * rm.B_r.transpose());
        const Eigen::MatrixXd Wo = lyap_kron(rm.Lambda_r.transpose(), Cr.transpose() * Cr);
        const double ref = std::sqrt(Eigen::JacobiSVD<Eigen::MatrixXd>(Wc * Wo).singularValues()(0));
        CHECK(pair_mhsv(pairs[i], fo.Bext, C) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("MHSV vanishes without input coupling") {
    const auto& c = chain();
    const Eigen::MatrixXd Bz = Eigen::MatrixXd::Zero(c.fo.N, 2);
    CHECK(pair_mhsv(c.pairs[0], Bz, c.C) == 0.0);
    CHECK(pair_dcgain(c.pairs[0], Bz, c.C) == 0.0);
}

TEST_CASE("unstable pairs must be forced") {
    auto pairs = chain().pairs;
    pairs[2].lambda = cplx(0.01, pairs[2].lambda.imag());
    const auto& c = chain();
    CHECK_THROWS_AS(rank_modes(pairs, c.fo.Bext, c.C, 10), PreconditionError);
    const auto r = rank_modes(pairs, c.fo.Bext, c.C, 10, {3});
    CHECK_FALSE(r[2].stable);
    CHECK(r[2].normalized_mhsv == 0.0);
    const auto sel = select_basis(r, Metric::mhsv, 0.0, {});
    CHECK(sel == std::vector<int>{3});
    CHECK_THROWS_AS(rank_modes(pairs, c.fo.Bext, c.C, 11), PreconditionError);
    CHECK_THROWS_AS(rank_modes(pairs, c.fo.Bext, c.C, 0), PreconditionError);
}

TEST_CASE("chain selections") {
    const auto& c = chain();
    const auto r = rank_modes(c.pairs, c.fo.Bext, c.C, 10);
    CHECK(select_basis(r, Metric::mhsv, 0.95) == std::vector<int>{1, 2, 3, 4});
    CHECK(select_basis(r, Metric::mhsv, default_threshold(Metric::mhsv)) == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(select_basis(r, Metric::dcgain, default_threshold(Metric::dcgain)) == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(select_basis(r, Metric::mhsv, 0.0, {7}) == std::vector<int>{7});
    CHECK(select_basis(r, Metric::mhsv, 1.0).size() == 10);
    CHECK_THROWS_AS(select_basis(r, Metric::mhsv, 1.5), PreconditionError);
    CHECK_THROWS_AS(select_basis(r, Metric::mhsv, 0.5, {42}), PreconditionError);
}

TEST_CASE("greedy selection has minimal size and is monotone in the threshold") {
    const auto& c = chain();
    const auto r = rank_modes(c.pairs, c.fo.Bext, c.C, 10);
    for (Metric metric : {Metric::dcgain, Metric::mhsv}) {
        std::size_t prev = 0;
        for (double th = 0.05; th < 1.0; th += 0.05) {
            const auto sel = select_basis(r, metric, th);
            CHECK(sel.size() >= prev);
            prev = sel.size();
            std::size_t best = 11;
            for (unsigned mask = 0; mask < 1024u; ++mask) {
                double s = 0.0;
                for (int i = 0; i < 10; ++i)
                    if (mask & (1u << i)) s += metric == Metric::dcgain ? r[i].normalized_dcgain : r[i].normalized_mhsv;
                if (s >= th - 1e-12) best = std::min<std::size_t>(best, std::popcount(mask));
            }
            CHECK(sel.size() == best);
        }
    }
}

TEST_CASE("realified model preserves spectrum and reconstruction") {
    const auto& c = chain();
    const std::vector<int> sel{1, 3, 4};
    const auto cm = build_reduced_linear(c.pairs, sel, c.fo.Bext, {}, c.C);
    const auto rm = realify(cm);
    REQUIRE(rm.dim() == 6);
    Eigen::VectorXcd ev = Eigen::EigenSolver<Eigen::MatrixXd>(rm.Lambda_r).eigenvalues();
    for (Eigen::Index i = 0; i < cm.lambda.size(); ++i) {
        double best = 1e300;
        for (Eigen::Index j = 0; j < ev.size(); ++j) best = std::min(best, std::abs(ev(j) - cm.lambda(i)));
        CHECK(best < 1e-12);
    }
    CHECK((rm.B_r - rm.U_r.transpose() * c.fo.Bext).norm() < 1e-12);

    // y = (sqrt2 Re q, sqrt2 Im q) reproduces V q and evolves under Lambda_r
    Eigen::VectorXcd q(6);
    q << cplx(0.3, -0.2), cplx(0.3, 0.2), cplx(-0.1, 0.5), cplx(-0.1, -0.5), cplx(0.05, 0.0), cplx(0.05, 0.0);
    Eigen::VectorXd y(6);
    for (int k = 0; k < 3; ++k) {
        y(2 * k) = std::sqrt(2.0) * q(2 * k).real();
        y(2 * k + 1) = std::sqrt(2.0) * q(2 * k).imag();
    }
    CHECK((rm.V_r * y - (cm.V * q).real()).norm() < 1e-12);
    CHECK((cm.V * q).imag().norm() < 1e-12);
    const double t = 7.3;
    const Eigen::MatrixXd E = (rm.Lambda_r * t).exp();
    const Eigen::VectorXcd qt = (cm.lambda * t).array().exp() * q.array();
    CHECK((rm.V_r * (E * y) - (cm.V * qt).real()).norm() < 1e-11);

    const Eigen::MatrixXd UBV = rm.U_r.transpose() * c.fo.B * rm.V_r;
    CHECK((UBV - Eigen::MatrixXd::Identity(6, 6)).norm() < 1e-10);
}

TEST_CASE("reduced initial condition") {
    const auto& c = chain();
    const auto rm = realify(build_reduced_linear(c.pairs, {1, 2}, c.fo.Bext, {}, c.C));
    Eigen::VectorXd y(4);
    y << 0.2, -0.4, 1.1, 0.3;
    const double eps = 1e-3;
    const Eigen::VectorXd W = Eigen::VectorXd::LinSpaced(c.fo.N, -1.0, 1.0);
    const Eigen::VectorXd z0 = W + eps * rm.V_r * y;
    CHECK((reduced_initial_condition(rm, c.fo.B, z0, W, eps) - y).norm() < 1e-9);
    const Eigen::VectorXcd q = reduced_initial_condition_complex(rm, c.fo.B, z0, W, eps);
    CHECK(std::abs(q(0) - cplx(y(0), y(1)) / std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(q(1) - std::conj(q(0))) < 1e-12);
    CHECK_THROWS_AS(reduced_initial_condition(rm, c.fo.B, z0, W, 0.0), PreconditionError);
    const auto cm = build_reduced_linear(c.pairs, {1, 2}, c.fo.Bext, {}, c.C);
    CHECK_THROWS_AS(reduced_initial_condition(cm, c.fo.B, z0, W, eps), PreconditionError);
    CHECK_THROWS_AS(build_reduced_linear(c.pairs, {11}, c.fo.Bext, {}, c.C), PreconditionError);
}

TEST_CASE("reduced forcing projects the load") {
    const auto& c = chain();
    mech::ChainParams cp;
    const auto sys = mech::build_oscillator_chain(cp, mech::benchmark_chain_forcing(mech::build_oscillator_chain(cp).D));
    const auto fo = mech::to_first_order(sys);
    const auto rm = realify(build_reduced_linear(c.pairs, {1, 2}, fo.Bext, fo.Fext, c.C));
    for (double t : {0.0, 1.7, 40.0}) {
        CHECK((rm.forcing(t) - rm.U_r.transpose() * fo.Fext.eval(t)).norm() < 1e-14);
        const Eigen::VectorXcd fc = rm.forcing_complex(t);
        CHECK(std::abs(fc(0) - cplx(rm.forcing(t)(0), rm.forcing(t)(1)) / std::sqrt(2.0)) < 1e-12);
    }
}

TEST_CASE("H-infinity gap with every pair kept is zero") {
    const auto s = random_system(4, 2, 5);
    const auto fo = mech::to_first_order(s);
    const auto pairs = spectral::solve_modes(fo, 4, spectral::Ordering::frequency_ascending);
    const Eigen::MatrixXd C = collocated_observation(fo);
    const auto grid = default_frequency_grid(pairs);
    const auto h = hinf_bound_check(fo, pairs, {1, 2, 3, 4}, C, grid);
    CHECK(h.bound == 0.0);
    CHECK(h.measured_gap < 1e-9);
}

TEST_CASE("H-infinity bound holds for random systems and the chain") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = random_system(4, 2, 100 + seed);
        const auto fo = mech::to_first_order(s);
        const auto pairs = spectral::solve_modes(fo, 4, spectral::Ordering::frequency_ascending);
        const auto h = hinf_bound_check(fo, pairs, {1, 3}, collocated_observation(fo), default_frequency_grid(pairs));
        CHECK(h.measured_gap > 0.0);
        CHECK(h.holds());
    }
    const auto& c = chain();
    const auto h = hinf_bound_check(c.fo, c.pairs, {1, 2, 3, 4, 5}, c.C, default_frequency_grid(c.pairs));
    CHECK(h.measured_gap > 0.0);
    CHECK(h.holds());
}

TEST_CASE("transfer gap kernels agree exactly") {
    const auto& c = chain();
    const auto m = build_reduced_linear(c.pairs, {1, 2}, c.fo.Bext, {}, c.C);
    const Eigen::MatrixXcd A = Eigen::MatrixXd(c.fo.A).cast<cplx>();
    const Eigen::MatrixXcd B = Eigen::MatrixXd(c.fo.B).cast<cplx>();
    const auto grid = default_frequency_grid(c.pairs);
    const Eigen::MatrixXcd CV = c.C.cast<cplx>() * m.V;
    const auto a = kernels::transfer_gap_serial(A, B, c.fo.Bext.cast<cplx>(), c.C.cast<cplx>(), CV, m.lambda, m.Bhat, grid);
    const auto b = kernels::transfer_gap_omp(A, B, c.fo.Bext.cast<cplx>(), c.C.cast<cplx>(), CV, m.lambda, m.Bhat, grid);
    CHECK(a == b);
    CHECK(grid.size() == 211);
    CHECK(grid.front() == 0.0);
}

TEST_CASE("ranking CSV") {
    const auto& c = chain();
    const auto r = rank_modes(c.pairs, c.fo.Bext, c.C, 3);
    std::ostringstream out;
    write_ranking_csv(out, r, {1});
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "pair_index,frequency,dcgain,mhsv,normalized_dcgain,normalized_mhsv,selected");
    std::getline(in, line);
    CHECK(line.rfind("1,", 0) == 0);
    CHECK(line.back() == '1');
    std::getline(in, line);
    CHECK(line.back() == '0');
    CHECK(std::count(line.begin(), line.end(), ',') == 6);
}
