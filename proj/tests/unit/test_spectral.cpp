#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "ssmc/errors.hpp"
#include "ssmc/mechmodel.hpp"
#include "ssmc/spectral.hpp"

using namespace ssmc;
using namespace ssmc::spectral;

namespace {

mech::SecondOrderSystem random_system(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd L(n, n), G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            L(i, j) = u(rng);
            G(i, j) = u(rng);
        }
    mech::SecondOrderSystem s;
    s.n = n;
    const Eigen::MatrixXd M = L * L.transpose() + Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd K = G * G.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    s.M = M.sparseView();
    s.K = K.sparseView();
    s.Cd = (0.02 * M + 0.03 * K).sparseView();
    s.f = PolynomialMap(2 * n, n);
    s.D = Eigen::MatrixXd::Identity(n, 1);
    return s;
}

} // namespace

TEST_CASE("undamped unit oscillator has eigenvalues plus/minus i") {
    mech::SecondOrderSystem s;
    s.n = 1;
    s.M = Eigen::MatrixXd::Identity(1, 1).sparseView();
    s.K = s.M;
    s.Cd = mech::SparseMatrix(1, 1);
    s.f = PolynomialMap(2, 1);
    s.D = Eigen::MatrixXd::Ones(1, 1);
    const auto modes = solve_modes(mech::to_first_order(s), 1, Ordering::frequency_ascending);
    REQUIRE(modes.size() == 1);
    CHECK(std::abs(modes[0].lambda - cplx(0.0, 1.0)) < 1e-14);
    CHECK(modes[0].near_zero_real_part());
}

TEST_CASE("chain slowest pair") {
    const auto fo = mech::to_first_order(mech::build_oscillator_chain(mech::ChainParams{}));
    const auto modes = solve_modes(fo, 10, Ordering::frequency_ascending);
    CHECK(std::abs(modes[0].lambda.real() + 0.0041) < 5e-4);
    CHECK(std::abs(modes[0].lambda.imag() - 0.2846) < 5e-4);
    for (std::size_t i = 1; i < modes.size(); ++i) CHECK(modes[i].lambda.imag() > modes[i - 1].lambda.imag());
}

TEST_CASE("random four-DOF spectrum matches the companion-matrix oracle") {
    const auto s = random_system(4, 42);
    const auto fo = mech::to_first_order(s);
    const auto modes = solve_modes(fo, 4, Ordering::frequency_ascending);

    const Eigen::MatrixXd M(s.M), K(s.K), C(s.Cd);
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(8, 8);
    comp.topRightCorner(4, 4).setIdentity();
    comp.bottomLeftCorner(4, 4) = -M.inverse() * K;
    comp.bottomRightCorner(4, 4) = -M.inverse() * C;
    const Eigen::VectorXcd ref = Eigen::EigenSolver<Eigen::MatrixXd>(comp, false).eigenvalues();

    for (const auto& m : modes) {
        double best = 1e300;
        for (Eigen::Index i = 0; i < ref.size(); ++i) best = std::min(best, std::abs(ref(i) - m.lambda));
        CHECK(best <= 1e-10 * std::abs(m.lambda));
    }
}

TEST_CASE("biorthonormality, residuals and conjugate closure") {
    const auto s = random_system(5, 7);
    const auto fo = mech::to_first_order(s);
    const auto modes = solve_modes(fo, 5, Ordering::real_part_descending);
    for (std::size_t i = 1; i < modes.size(); ++i) CHECK(modes[i].lambda.real() <= modes[i - 1].lambda.real());

    const auto ms = MasterSubspace::from_pairs(modes);
    const Eigen::MatrixXcd B = Eigen::MatrixXd(fo.B).cast<cplx>();
    const Eigen::MatrixXcd A = Eigen::MatrixXd(fo.A).cast<cplx>();
    const Eigen::MatrixXcd G = ms.U.adjoint() * B * ms.V;
    CHECK((G - Eigen::MatrixXcd::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-10);

    for (int c = 0; c < ms.dim(); ++c) {
        const Eigen::VectorXcd r = A * ms.V.col(c) - ms.lambda(c) * B * ms.V.col(c);
        CHECK(r.norm() <= 1e-8 * A.norm() * ms.V.col(c).norm());
        const Eigen::RowVectorXcd l = ms.U.col(c).adjoint() * A - ms.lambda(c) * ms.U.col(c).adjoint() * B;
        CHECK(l.norm() <= 1e-8 * A.norm() * ms.U.col(c).norm());
    }
    for (int i = 0; i < ms.m(); ++i) {
        CHECK(ms.lambda(2 * i + 1) == std::conj(ms.lambda(2 * i)));
        CHECK(ms.V.col(2 * i + 1) == ms.V.col(2 * i).conjugate());
        CHECK(ms.U.col(2 * i + 1) == ms.U.col(2 * i).conjugate());
    }
}

TEST_CASE("eigenvectors are phase-fixed and mass-normalized") {
    const auto s = random_system(4, 3);
    const auto fo = mech::to_first_order(s);
    const Eigen::MatrixXcd M = Eigen::MatrixXd(s.M).cast<cplx>();
    for (const auto& m : solve_modes(fo, 4, Ordering::frequency_ascending)) {
        const double vmax = m.v.cwiseAbs().maxCoeff();
        Eigen::Index imax = 0;
        while (std::abs(m.v(imax)) < (1.0 - 1e-8) * vmax) ++imax;
        CHECK(m.v(imax).imag() == 0.0);
        CHECK(m.v(imax).real() > 0.0);
        const Eigen::VectorXcd phi = m.v.head(4);
        CHECK(std::abs(phi.dot(M * phi) - 1.0) < 1e-12);
    }
}

TEST_CASE("shift-invert Arnoldi agrees with the dense solver") {
    mech::ChainParams p;
    p.n_masses = 60;
    const auto fo = mech::to_first_order(mech::build_oscillator_chain(p));
    const auto dense = solve_modes(fo, 5, Ordering::frequency_ascending);
    EigenOptions it;
    it.dense_threshold = 10;
    const auto iter = solve_modes(fo, 5, Ordering::frequency_ascending, it);
    REQUIRE(iter.size() == 5);
    const Eigen::MatrixXcd B = Eigen::MatrixXd(fo.B).cast<cplx>();
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(std::abs(iter[i].lambda - dense[i].lambda) <= 1e-9 * std::abs(dense[i].lambda));
        // Same normalization convention, so vectors agree up to roundoff.
        CHECK((iter[i].v - dense[i].v).norm() <= 1e-6 * dense[i].v.norm());
        CHECK(std::abs(iter[i].u.dot(B * iter[i].v) - 1.0) < 1e-10);
    }
}

TEST_CASE("requesting too many modes is a precondition error") {
    const auto fo = mech::to_first_order(mech::build_oscillator_chain(mech::ChainParams{}));
    CHECK_THROWS_AS(solve_modes(fo, 11, Ordering::frequency_ascending), PreconditionError);
    CHECK_THROWS_AS(solve_modes(fo, 0, Ordering::frequency_ascending), PreconditionError);
}

TEST_CASE("single lightly damped pair resonates only at (j+1, j)") {
    Eigen::VectorXcd lam(2);
    lam << cplx(-1e-4, 1.0), cplx(-1e-4, -1.0);
    const auto rs = detect_inner_resonances(lam, 7);
    for (const auto& e : rs.entries) {
        if (e.target == 0) CHECK(e.k[0] == e.k[1] + 1);
        else CHECK(e.k[1] == e.k[0] + 1);
    }
    CHECK(rs.contains(0, {1, 0}));
    CHECK(rs.contains(0, {2, 1}));
    CHECK(rs.contains(0, {3, 2}));
    CHECK(rs.contains(1, {2, 3}));
    CHECK(rs.contains(0, {4, 3}));
    CHECK(rs.entries.size() == 8);
}

TEST_CASE("near 1:3 internal resonance") {
    Eigen::VectorXcd lam(4);
    lam << cplx(-0.01, 1.0), cplx(-0.01, -1.0), cplx(-0.03, 3.1), cplx(-0.03, -3.1);
    const auto rs = detect_inner_resonances(lam, 5, 0.15);
    CHECK(rs.contains(2, {3, 0, 0, 0}));
    CHECK(rs.contains(3, {0, 3, 0, 0}));
    CHECK(!detect_inner_resonances(lam, 5, 0.01).contains(2, {3, 0, 0, 0}));
}

TEST_CASE("resonance detection matches brute-force enumeration") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> w(0.5, 5.0), z(0.001, 0.05);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXcd lam(4);
        for (int i = 0; i < 2; ++i) {
            const cplx l(-z(rng), w(rng));
            lam(2 * i) = l;
            lam(2 * i + 1) = std::conj(l);
        }
        const double tol = 0.02;
        const auto rs = detect_inner_resonances(lam, 5, tol);
        std::size_t expected = 4;
        for (int a = 0; a <= 5; ++a)
            for (int b = 0; b <= 5 - a; ++b)
                for (int c = 0; c <= 5 - a - b; ++c)
                    for (int d = 0; d <= 5 - a - b - c; ++d) {
                        if (a + b + c + d < 2) continue;
                        const cplx kl = double(a) * lam(0) + double(b) * lam(1) + double(c) * lam(2) + double(d) * lam(3);
                        for (int j = 0; j < 4; ++j) {
                            if (std::abs(kl - lam(j)) <= tol * std::abs(lam(j))) {
                                ++expected;
                                CHECK(rs.contains(j, {a, b, c, d}));
                            }
                        }
                    }
        CHECK(rs.entries.size() == expected);
    }
}

TEST_CASE("2x2 Lyapunov closed form") {
    Eigen::Vector2cd d(-1.0, -1.0);
    const Eigen::Matrix2cd W = solve_lyapunov_2x2(d, Eigen::Matrix2cd::Identity());
    CHECK((W - 0.5 * Eigen::Matrix2cd::Identity()).norm() < 1e-15);
    CHECK(solve_lyapunov_2x2(d, Eigen::Matrix2cd::Zero()).isZero(0.0));
    CHECK_THROWS_AS(solve_lyapunov_2x2(Eigen::Vector2cd(cplx(0.1, 1.0), cplx(0.1, -1.0)), Eigen::Matrix2cd::Identity()),
                    PreconditionError);
}

TEST_CASE("2x2 Lyapunov matches quadrature of the Gramian integral") {
    const Eigen::Vector2cd d(cplx(-1.0, 2.0), cplx(-1.0, -2.0));
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    Eigen::Matrix2cd rhs;
    for (int i = 0; i < 4; ++i) rhs(i) = cplx(g(rng), g(rng));
    const Eigen::Matrix2cd W = solve_lyapunov_2x2(d, rhs);

    const Eigen::Matrix2cd Lam = d.asDiagonal();
    CHECK((Lam * W + W * Lam.transpose() + rhs).norm() <= 1e-12 * rhs.norm());

    // Composite Simpson on [0, 40] of e^{Lam t} rhs e^{Lam^T t}.
    const int n = 40000;
    const double h = 40.0 / n;
    Eigen::Matrix2cd acc = Eigen::Matrix2cd::Zero();
    for (int i = 0; i <= n; ++i) {
        const double t = i * h;
        const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        Eigen::Matrix2cd e;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) e(a, b) = std::exp((d(a) + d(b)) * t) * rhs(a, b);
        acc += wgt * e;
    }
    acc *= h / 3.0;
    CHECK((acc - W).norm() <= 1e-9 * W.norm());
}

TEST_CASE("spectrum CSV lists conjugates adjacently with 17 digits") {
    const auto fo = mech::to_first_order(mech::build_oscillator_chain(mech::ChainParams{}));
    const auto modes = solve_modes(fo, 2, Ordering::frequency_ascending);
    std::ostringstream os;
    write_spectrum_csv(os, modes);
    std::istringstream is(os.str());
    std::string header, l1, l2;
    std::getline(is, header);
    std::getline(is, l1);
    std::getline(is, l2);
    CHECK(header == "index,re_lambda,im_lambda,damping_ratio,frequency_hz");
    CHECK(l1.rfind("1,-0.0040", 0) == 0);
    CHECK(l2.find(",-0.28460") != std::string::npos);
}
