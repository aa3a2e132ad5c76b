#include "ssmc/ode.hpp"

#include <cmath>
#include <sstream>

#include <boost/numeric/odeint.hpp>

#include "ssmc/errors.hpp"

namespace ssmc::ode {

namespace odeint = boost::numeric::odeint;

std::vector<State> integrate_on_grid(const Rhs& rhs, State x0, std::span<const double> times,
                                     const Options& opts) {
    std::vector<State> out;
    if (times.empty()) return out;
    out.reserve(times.size());
    if (times.size() == 1) {
        out.push_back(std::move(x0));
        return out;
    }
    const double dir = times.back() > times.front() ? 1.0 : -1.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
        if ((times[i] - times[i - 1]) * dir <= 0.0)
            throw PreconditionError("integrate_on_grid: output times must be strictly monotone");
    }

    auto stepper = odeint::make_dense_output(opts.abs_tol, opts.rel_tol, odeint::runge_kutta_dopri5<State>());
    double last_t = times.front();
    auto observer = [&](const State& x, double t) {
        for (double v : x) {
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "integrator produced a non-finite state at t = " << t;
                throw NumericalError(msg.str());
            }
        }
        last_t = t;
        out.push_back(x);
    };
    auto system = [&rhs](const State& x, State& dxdt, double t) { rhs(x, dxdt, t); };
    try {
        odeint::integrate_times(stepper, system, x0, times.begin(), times.end(), dir * std::abs(opts.initial_step),
                                observer, odeint::max_step_checker(static_cast<int>(opts.max_steps_per_sample)));
    } catch (const odeint::step_adjustment_error& e) {
        std::ostringstream msg;
        msg << "step-size collapse after t = " << last_t << ": " << e.what();
        throw NumericalError(msg.str());
    } catch (const odeint::no_progress_error& e) {
        std::ostringstream msg;
        msg << "integrator exceeded step budget after t = " << last_t << ": " << e.what();
        throw NumericalError(msg.str());
    }
    if (out.size() != times.size()) {
        std::ostringstream msg;
        msg << "integrator stopped early after t = " << last_t;
        throw NumericalError(msg.str());
    }
    return out;
}

std::vector<double> uniform_grid(double t0, double t1, std::size_t nodes) {
    if (nodes < 2) throw PreconditionError("uniform_grid: need at least two nodes");
    std::vector<double> g(nodes);
    const double h = (t1 - t0) / static_cast<double>(nodes - 1);
    for (std::size_t i = 0; i < nodes; ++i) g[i] = t0 + h * static_cast<double>(i);
    g.back() = t1;
    return g;
}

} // namespace ssmc::ode
