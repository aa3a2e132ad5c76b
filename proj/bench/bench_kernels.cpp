#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include <omp.h>

#include "CLI11.hpp"
#include "ssmc/kernels.hpp"
#include "ssmc/linred.hpp"
#include "ssmc/mechmodel.hpp"
#include "ssmc/spectral.hpp"
#include "ssmc/ssm.hpp"

using namespace ssmc;

namespace {

double best_of(int reps, const std::function<void()>& f) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void report(const char* name, double serial, double parallel, bool identical) {
    std::printf("%-22s %12.6f %12.6f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
                identical ? "identical" : "DIFFERENT");
}

Eigen::MatrixXcd random_complex(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Eigen::MatrixXcd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = cplx(g(rng), g(rng));
    return m;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial versus OpenMP kernels"};
    int n = 60, reps = 3, order = 5, points = 2000, omegas = 200;
    std::uint64_t seed = 1;
    app.add_option("--n", n, "masses in the chain");
    app.add_option("--reps", reps, "repetitions, best time kept");
    app.add_option("--order", order, "expansion order");
    app.add_option("--points", points, "batch size for expansion evaluation");
    app.add_option("--omegas", omegas, "frequencies in the transfer sweep");
    app.add_option("--seed", seed, "random seed");
    CLI11_PARSE(app, argc, argv);
    Eigen::setNbThreads(1);

    mech::ChainParams cp;
    cp.n_masses = n;
    cp.actuator_indices = {1, std::min(5, n)};
    const auto base = mech::build_oscillator_chain(cp);
    const auto fo = mech::to_first_order(mech::build_oscillator_chain(cp, mech::benchmark_chain_forcing(base.D)));
    std::mt19937_64 rng(seed);

    std::printf("threads %d, chain n = %d (N = %d)\n", omp_get_max_threads(), n, fo.N);
    std::printf("%-22s %12s %12s %9s\n", "kernel", "serial [s]", "omp [s]", "speedup");

    {
        const MultiIndexSet set(4, order);
        const Eigen::MatrixXcd w = 0.1 * random_complex(fo.N, set.size(), rng);
        Eigen::MatrixXcd a, b;
        const double ts = best_of(reps, [&] { a = kernels::compose_serial(fo.F, w, set, order); });
        const double tp = best_of(reps, [&] { b = kernels::compose_omp(fo.F, w, set, order); });
        report("compose", ts, tp, a == b);
    }
    {
        const MultiIndexSet set(4, order);
        const Eigen::MatrixXcd coeffs = random_complex(fo.N, set.size(), rng);
        const Eigen::MatrixXcd pts = 0.1 * random_complex(4, points, rng);
        Eigen::MatrixXcd a, b;
        const double ts = best_of(reps, [&] { a = kernels::eval_expansion_serial(coeffs, set, pts); });
        const double tp = best_of(reps, [&] { b = kernels::eval_expansion_omp(coeffs, set, pts); });
        report("eval_expansion", ts, tp, a == b);
    }

    const int count = std::min(10, n);
    const auto pairs = spectral::solve_modes(fo, count, spectral::Ordering::frequency_ascending);
    const Eigen::MatrixXd C = linred::collocated_observation(fo);
    {
        std::vector<int> sel;
        for (int i = 1; i <= std::min(5, count); ++i) sel.push_back(i);
        const auto model = linred::build_reduced_linear(pairs, sel, fo.Bext, {}, C);
        const Eigen::MatrixXcd A = Eigen::MatrixXd(fo.A).cast<cplx>(), B = Eigen::MatrixXd(fo.B).cast<cplx>();
        const Eigen::MatrixXcd CV = C.cast<cplx>() * model.V;
        std::vector<double> w(static_cast<std::size_t>(omegas));
        for (int i = 0; i < omegas; ++i) w[static_cast<std::size_t>(i)] = 0.01 * std::pow(10.0, 3.0 * i / std::max(1, omegas - 1));
        std::vector<double> a, b;
        const double ts = best_of(reps, [&] {
            a = kernels::transfer_gap_serial(A, B, fo.Bext.cast<cplx>(), C.cast<cplx>(), CV, model.lambda, model.Bhat, w);
        });
        const double tp = best_of(reps, [&] {
            b = kernels::transfer_gap_omp(A, B, fo.Bext.cast<cplx>(), C.cast<cplx>(), CV, model.lambda, model.Bhat, w);
        });
        report("transfer_gap", ts, tp, a == b);
    }
    {
        std::vector<linred::ModalRanking> a, b;
        const double ts = best_of(reps, [&] { a = linred::rank_modes(pairs, fo.Bext, C, count, {}, false); });
        const double tp = best_of(reps, [&] { b = linred::rank_modes(pairs, fo.Bext, C, count, {}, true); });
        bool same = a.size() == b.size();
        for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i].mhsv == b[i].mhsv && a[i].dcgain == b[i].dcgain;
        report("rank_modes", ts, tp, same);
    }
    {
        const auto master = spectral::MasterSubspace::from_pairs({pairs[0]});
        ssm::SSMOptions so, po;
        so.parallel = false;
        po.parallel = true;
        ssm::SSMModel a, b;
        const double ts = best_of(reps, [&] { a = ssm::compute_autonomous_ssm(fo, master, order, so); });
        const double tp = best_of(reps, [&] { b = ssm::compute_autonomous_ssm(fo, master, order, po); });
        report("compute_ssm", ts, tp, a.W == b.W && a.R == b.R);
    }
    return 0;
}
