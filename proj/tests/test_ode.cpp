#include <gtest/gtest.h>

#include <cmath>

#include "spinlight/ode.hpp"

using namespace spinlight;
using ode::State;

namespace {

// x'' = −w² x as a first-order system
struct Oscillator {
    double w;
    State<2> operator()(double, const State<2>& y) const { return {y[1], -w * w * y[0]}; }
};

} // namespace

TEST(Ode, Dopri5MeetsTolerance) {
    Oscillator f{3.0};
    ode::StepPolicy p;
    p.rtol = 1e-10;
    p.atol = 1e-12;
    ode::Stats st;
    auto y = ode::dopri5<2>(f, {1.0, 0.0}, 0.0, 10.0, p, [](const auto&) {}, &st);
    EXPECT_NEAR(y[0], std::cos(30.0), 1e-8);
    EXPECT_NEAR(y[1], -3.0 * std::sin(30.0), 3e-8);
    EXPECT_GT(st.accepted, 0);
}

TEST(Ode, DenseOutputIsAccurate) {
    auto f = [](double t, const State<1>&) { return State<1>{std::cos(t)}; };
    ode::StepPolicy p;
    p.rtol = 1e-9;
    double worst = 0.0;
    ode::dopri5<1>(f, {0.0}, 0.0, 20.0, p, [&](const ode::DenseSegment<1>& s) {
        for (int i = 0; i <= 10; ++i) {
            double t = s.t0 + s.h * i / 10.0;
            worst = std::max(worst, std::abs(s(t)[0] - std::sin(t)));
        }
    });
    EXPECT_LT(worst, 1e-7);
}

TEST(Ode, Rk4IsFourthOrder) {
    Oscillator f{1.0};
    auto err = [&](double h) {
        auto y = ode::rk4<2>(f, {1.0, 0.0}, 0.0, 5.0, h);
        return std::abs(y[0] - std::cos(5.0));
    };
    double e1 = err(0.1), e2 = err(0.05);
    double order = std::log2(e1 / e2);
    EXPECT_NEAR(order, 4.0, 0.15);
}

TEST(Ode, SampledGridIncludesEndpoint) {
    auto f = [](double, const State<1>& y) { return State<1>{-y[0]}; };
    for (auto method : {ode::Method::dopri5, ode::Method::rk4}) {
        ode::StepPolicy p;
        p.method = method;
        p.fixed_step = 0.01;
        std::vector<double> ts, ys;
        ode::integrate_sampled<1>(f, {1.0}, 0.0, 2.0, 0.25, p, [&](double t, const State<1>& y) {
            ts.push_back(t);
            ys.push_back(y[0]);
        });
        ASSERT_EQ(ts.size(), 9u);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            EXPECT_DOUBLE_EQ(ts[k], 0.25 * static_cast<double>(k));
            EXPECT_NEAR(ys[k], std::exp(-ts[k]), 1e-8);
        }
    }
}

TEST(Ode, StepBudgetAndBadInputs) {
    Oscillator f{100.0};
    ode::StepPolicy p;
    p.max_steps = 5;
    EXPECT_THROW(ode::dopri5<2>(f, {1.0, 0.0}, 0.0, 100.0, p, [](const auto&) {}), IntegrationError);
    EXPECT_THROW(ode::rk4<2>(f, {1.0, 0.0}, 0.0, 1.0, 0.0), IntegrationError);
    // empty interval is a no-op
    auto y = ode::dopri5<2>(f, {1.0, 2.0}, 1.0, 1.0, {}, [](const auto&) {});
    EXPECT_EQ(y[1], 2.0);
}

TEST(Ode, FiniteTimeBlowUpCollapsesStep) {
    // y' = y², y(0) = 1 blows up at t = 1
    auto f = [](double, const State<1>& y) { return State<1>{y[0] * y[0]}; };
    try {
        ode::dopri5<1>(f, {1.0}, 0.0, 2.0, {}, [](const auto&) {});
        FAIL() << "expected IntegrationError";
    } catch (const IntegrationError& e) {
        EXPECT_NEAR(e.last_good_time(), 1.0, 1e-3);
    }
}
