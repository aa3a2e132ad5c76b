#pragma once

#include <functional>
#include <span>
#include <vector>

namespace ssmc::ode {

using State = std::vector<double>;
using Rhs = std::function<void(const State& x, State& dxdt, double t)>;

struct Options {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    // Initial trial step; sign is taken from the direction of `times`.
    double initial_step = 1e-3;
    // Stepper gives up after this many steps between two consecutive output times.
    std::size_t max_steps_per_sample = 200000;
};

// Integrates dx/dt = rhs(x, t) with an adaptive Dormand-Prince 5(4) pair and
// returns the dense-output state at each entry of `times`. `times` must be
// strictly monotone (increasing or decreasing); times[0] is the initial time.
// Throws NumericalError naming the last reached time on step-size collapse or
// non-finite state.
std::vector<State> integrate_on_grid(const Rhs& rhs, State x0, std::span<const double> times,
                                     const Options& opts = {});

// Uniform grid with `nodes` points on [t0, t1] (t1 exactly representable as last node).
std::vector<double> uniform_grid(double t0, double t1, std::size_t nodes);

} // namespace ssmc::ode
