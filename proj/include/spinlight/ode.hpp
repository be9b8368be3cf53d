#pragma once

// Explicit Runge-Kutta integrators for small fixed-size systems:
// adaptive Dormand-Prince 5(4) with its 4th-order continuous extension, and
// a fixed-step classical RK4 used for convergence-order checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "spinlight/errors.hpp"

namespace spinlight::ode {

template <std::size_t N>
using State = std::array<double, N>;

enum class Method { dopri5, rk4 };

struct StepPolicy {
    Method method = Method::dopri5;
    double rtol = 1e-9;
    double atol = 1e-14;
    double initial_step = 0.0; // 0: automatic
    double max_step = std::numeric_limits<double>::infinity();
    double fixed_step = 0.0;   // rk4 only
    long max_steps = 2'000'000'000L;
};

struct Stats {
    long accepted = 0;
    long rejected = 0;
    long evaluations = 0;
};

namespace detail {

template <std::size_t N>
inline State<N> axpy(const State<N>& y, double h, std::initializer_list<std::pair<double, const State<N>*>> terms) {
    State<N> out = y;
    for (const auto& [c, k] : terms) {
        if (c == 0.0) continue;
        for (std::size_t i = 0; i < N; ++i) out[i] += h * c * (*k)[i];
    }
    return out;
}

} // namespace detail

/// One accepted Dormand-Prince step, kept for dense output on [t0, t0 + h].
template <std::size_t N>
struct DenseSegment {
    double t0 = 0.0;
    double h = 0.0;
    State<N> y0{};
    State<N> r1{}, r2{}, r3{}, r4{};

    [[nodiscard]] State<N> operator()(double t) const {
        double theta = (t - t0) / h;
        double theta1 = 1.0 - theta;
        State<N> out;
        for (std::size_t i = 0; i < N; ++i)
            out[i] = y0[i] + theta * (r1[i] + theta1 * (r2[i] + theta * (r3[i] + theta1 * r4[i])));
        return out;
    }
};

/// Integrates y' = f(t, y) from t0 to t1 and hands every accepted step to
/// `on_step(const DenseSegment<N>&)`. Returns the state at t1.
template <std::size_t N, class Rhs, class OnStep>
State<N> dopri5(Rhs&& f, State<N> y, double t0, double t1, const StepPolicy& policy, OnStep&& on_step,
                Stats* stats = nullptr) {
    // Butcher tableau
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                     a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
    constexpr double safe = 0.9, beta = 0.04, expo1 = 0.2 - beta * 0.75;
    constexpr double fac_min = 0.2, fac_max = 10.0;

    Stats local;
    Stats& st = stats ? *stats : local;
    double t = t0;
    double span = t1 - t0;
    if (!(span > 0.0)) return y;

    auto error_norm = [&](const State<N>& a, const State<N>& b, const State<N>& err) {
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double sc = policy.atol + policy.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
            double q = err[i] / sc;
            sum += q * q;
        }
        return std::sqrt(sum / static_cast<double>(N));
    };

    State<N> k1 = f(t, y);
    ++st.evaluations;

    double h = policy.initial_step;
    if (!(h > 0.0)) {
        // Hairer's starting-step heuristic
        State<N> zero{};
        double dnf = error_norm(y, y, k1);
        double dny = error_norm(y, y, y);
        (void)zero;
        double h0 = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
        h0 = std::min(h0, policy.max_step);
        State<N> y1 = detail::axpy<N>(y, h0, {{1.0, &k1}});
        State<N> f1 = f(t + h0, y1);
        ++st.evaluations;
        State<N> diff;
        for (std::size_t i = 0; i < N; ++i) diff[i] = f1[i] - k1[i];
        double der2 = error_norm(y, y, diff) / h0;
        double der12 = std::max(std::abs(der2), std::sqrt(dnf));
        double h1 = der12 <= 1e-15 ? std::max(1e-6, std::abs(h0) * 1e-3) : std::pow(0.01 / der12, 0.2);
        h = std::min({100.0 * h0, h1, policy.max_step});
    }

    double facold = 1e-4;
    bool last_rejected = false;
    long steps = 0;
    while (t < t1) {
        if (steps++ > policy.max_steps)
            throw IntegrationError("step budget exhausted at t = " + std::to_string(t), t);
        bool final_step = false;
        if (t + h >= t1) {
            h = t1 - t;
            final_step = true;
        }
        // a short last step onto t1 is legitimate; only controller-driven shrinkage is a failure
        if (!final_step && h < 1e-13 * std::max(1.0, std::abs(t)))
            throw IntegrationError("step size collapsed at t = " + std::to_string(t) + " (stiff system?)", t);

        State<N> y2 = detail::axpy<N>(y, h, {{a21, &k1}});
        State<N> k2 = f(t + c2 * h, y2);
        State<N> y3 = detail::axpy<N>(y, h, {{a31, &k1}, {a32, &k2}});
        State<N> k3 = f(t + c3 * h, y3);
        State<N> y4 = detail::axpy<N>(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
        State<N> k4 = f(t + c4 * h, y4);
        State<N> y5 = detail::axpy<N>(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
        State<N> k5 = f(t + c5 * h, y5);
        State<N> y6 = detail::axpy<N>(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
        State<N> k6 = f(t + h, y6);
        State<N> ynew = detail::axpy<N>(y, h, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
        State<N> k7 = f(t + h, ynew);
        st.evaluations += 6;

        State<N> err;
        for (std::size_t i = 0; i < N; ++i)
            err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        double en = error_norm(y, ynew, err);

        double fac11 = std::pow(std::max(en, 1e-300), expo1);
        if (en <= 1.0) {
            DenseSegment<N> seg;
            seg.t0 = t;
            seg.h = h;
            seg.y0 = y;
            for (std::size_t i = 0; i < N; ++i) {
                double ydiff = ynew[i] - y[i];
                double bspl = h * k1[i] - ydiff;
                seg.r1[i] = ydiff;
                seg.r2[i] = bspl;
                seg.r3[i] = ydiff - h * k7[i] - bspl;
                seg.r4[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
            }
            on_step(static_cast<const DenseSegment<N>&>(seg));
            ++st.accepted;

            double fac = fac11 / std::pow(facold, beta);
            fac = std::clamp(fac / safe, 1.0 / fac_max, 1.0 / fac_min);
            double hnew = std::min(h / fac, policy.max_step);
            if (last_rejected) hnew = std::min(hnew, h);
            facold = std::max(en, 1e-4);
            last_rejected = false;
            t = final_step ? t1 : t + h;
            y = ynew;
            k1 = k7;
            h = hnew;
        } else {
            ++st.rejected;
            h = h / std::min(1.0 / fac_min, fac11 / safe);
            last_rejected = true;
        }
    }
    return y;
}

/// Fixed-step classical RK4; the last step is shortened to land on t1.
template <std::size_t N, class Rhs>
State<N> rk4(Rhs&& f, State<N> y, double t0, double t1, double step) {
    if (!(step > 0.0)) throw IntegrationError("rk4 needs a positive step", t0);
    double t = t0;
    while (t < t1) {
        double h = std::min(step, t1 - t);
        if (t + h >= t1 - 1e-12 * step) h = t1 - t;
        State<N> k1 = f(t, y);
        State<N> k2 = f(t + 0.5 * h, detail::axpy<N>(y, h, {{0.5, &k1}}));
        State<N> k3 = f(t + 0.5 * h, detail::axpy<N>(y, h, {{0.5, &k2}}));
        State<N> k4 = f(t + h, detail::axpy<N>(y, h, {{1.0, &k3}}));
        for (std::size_t i = 0; i < N; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t += h;
    }
    return y;
}

/// Integrates from t0 to t1 and reports the solution at every time of the
/// uniform grid t0 + k dt (k ≥ 0, inclusive of t1 when it falls on the grid)
/// through `sample(t, y)`. Dense output fills the grid for dopri5; rk4 steps
/// exactly on the grid.
template <std::size_t N, class Rhs, class Sample>
State<N> integrate_sampled(Rhs&& f, const State<N>& y0, double t0, double t1, double dt, const StepPolicy& policy,
                           Sample&& sample, Stats* stats = nullptr) {
    if (!(dt > 0.0)) throw IntegrationError("sample step must be positive", t0);
    long k = 0;
    auto grid = [&](long i) { return t0 + static_cast<double>(i) * dt; };
    const double slack = 1e-9 * dt;
    if (policy.method == Method::rk4) {
        double h = policy.fixed_step > 0.0 ? policy.fixed_step : dt;
        State<N> y = y0;
        sample(t0, y);
        for (k = 1; grid(k) <= t1 + slack; ++k) {
            double ta = grid(k - 1), tb = std::min(grid(k), t1);
            y = rk4<N>(f, y, ta, tb, h);
            sample(tb, y);
        }
        if (grid(k - 1) < t1 - slack) y = rk4<N>(f, y, grid(k - 1), t1, h);
        return y;
    }
    sample(t0, y0);
    k = 1;
    auto on_step = [&](const DenseSegment<N>& seg) {
        double end = seg.t0 + seg.h;
        while (grid(k) <= end + slack && grid(k) <= t1 + slack) {
            double tk = std::min(grid(k), end);
            sample(grid(k), seg(tk));
            ++k;
        }
    };
    return dopri5<N>(f, y0, t0, t1, policy, on_step, stats);
}

} // namespace spinlight::ode
