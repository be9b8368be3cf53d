#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spinlight/core_model.hpp"
#include "spinlight/steady_state.hpp"
#include "support.hpp"

using namespace spinlight;
namespace oracle = testing_support::oracle;

namespace {

ModelParams preset_model() { return resolve_model(testing_support::preset()).model; }

oracle::Sys to_oracle(const SystemParams& s) {
    return {s.alkali_larmor, s.noble_larmor, s.alkali_decoherence, s.noble_decoherence, s.alkali_exchange,
            s.noble_exchange};
}

} // namespace

TEST(SteadyState, PresetLineParameters) {
    auto m = preset_model();
    auto l = line_shape(m);
    // 2γ = 2γ_b + 2J²γ_a/(δ_a² + γ_a²) at the line center
    double da = l.center - 2200.0;
    double two_gamma = 2.0 * (0.0024 + 196.0 * 51.0 / (da * da + 51.0 * 51.0));
    EXPECT_NEAR(2.0 * l.half_width, two_gamma, 1e-15);
    EXPECT_NEAR(2e3 * l.half_width, 9.0036, 1e-3);
    double c0 = 0.5 * 0.7 * 8.7 * 11.28 / 51.0 * (l.half_width - 0.0024) / l.half_width;
    EXPECT_NEAR(l.amplitude, c0, 1e-14);
    EXPECT_NEAR(l.contrast, c0 * (2.0 - c0), 1e-14);
    EXPECT_NEAR(l.contrast, 0.530, 1e-3);
}

TEST(SteadyState, LineCenterSolvesPulledDetuning) {
    auto m = preset_model();
    double c = line_center(m.system);
    EXPECT_NEAR(oracle::pulled(to_oracle(m.system), c), 0.0, 1e-12);
    // ω_a > ω_b pushes the line down
    EXPECT_LT(c, m.system.noble_larmor);
    for (double target : {-0.05, -0.01, 0.0, 0.02, 0.3}) {
        double w = frequency_for_detuning(m.system, target);
        EXPECT_NEAR(compute_detunings(w, m.system).pulled, target, 1e-12);
    }
}

TEST(SteadyState, CoherencesMatchDirectSolve) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        ModelParams m;
        double wa = 500.0 + 5000.0 * u(rng), wb = 5.0 + 50.0 * u(rng);
        double ga = 5.0 + 100.0 * u(rng), gb = 1e-3 * (1.0 + u(rng));
        double ja = 1e3 + 1e5 * u(rng), j = 1.0 + 30.0 * u(rng);
        m.system = SystemParams::make(wa, wb, ga, gb, ja, j * j / ja);
        m.optics.light_shift_rate = 1e-16 * (1.0 + u(rng));
        m.alkali_polarization = 0.5 + 0.5 * u(rng);
        complex s3{u(rng) - 0.5, u(rng) - 0.5};
        double w = wb + (u(rng) - 0.5) * 0.5;
        auto [f, r] = oracle::corotating_steady(to_oracle(m.system), w,
                                                m.optics.light_shift_rate * m.alkali_polarization * s3);
        EXPECT_LT(std::abs(alkali_coherence(s3, w, m) - f), 1e-12 * std::abs(f));
        EXPECT_LT(std::abs(noble_coherence(s3, w, m) - r), 1e-10 * std::abs(r));
    }
}

TEST(SteadyState, ClosedFormTransmissionIsInvertedLorentzian) {
    auto m = preset_model();
    auto l = line_shape(m);
    for (int i = 0; i <= 200; ++i) {
        double delta = l.half_width * (-20.0 + 40.0 * i / 200.0);
        double w = frequency_for_detuning(m.system, delta);
        auto r = s2_response({1.0, 0.0}, w, m);
        ASSERT_EQ(r.branch, ResponseBranch::closed_form);
        double d = compute_detunings(w, m.system).alkali;
        double g = hybrid_linewidth(m.system, d);
        double c0 = lorentzian_amplitude(m, g);
        double c = c0 * (2.0 - c0);
        double expect = 1.0 - c * g * g / (delta * delta + g * g);
        EXPECT_NEAR(std::norm(r.s2_out), expect, 1e-12);
        double phase = kPhaseSign * std::arg(r.s2_out);
        EXPECT_NEAR(phase, phase_shift(delta, {l.center, g, c0, c}), 1e-12);
    }
}

TEST(SteadyState, GeneralBranchCloseToClosedFormWhenFarDetuned) {
    auto m = preset_model();
    auto l = line_shape(m);
    for (double k : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
        auto r = s2_response({0.3, -0.7}, frequency_for_detuning(m.system, k * l.half_width), m);
        // residual set by the non-resonant alkali response, of order γ'_a OD p_a / (2|δ_a|)
        EXPECT_LT(r.branch_difference, 0.03);
    }
}

TEST(SteadyState, ZeroCouplingIsTransparent) {
    auto m = preset_model();
    m.system = SystemParams::make(2200.0, 19.88, 51.0, 0.0024, 0.0, 0.0);
    auto l = line_shape(m);
    EXPECT_DOUBLE_EQ(l.half_width, 0.0024);
    EXPECT_DOUBLE_EQ(l.amplitude, 0.0);
    EXPECT_DOUBLE_EQ(l.contrast, 0.0);
    EXPECT_EQ(std::norm(s2_response({1.0, 0.0}, 19.88, m).s2_out), 1.0);
    EXPECT_EQ(noble_coherence({1.0, 0.0}, 19.88, m), complex{});
}

TEST(SteadyState, PhaseShiftProperties) {
    LineShape l{0.0, 1.0, 0.3, contrast_from_amplitude(0.3)};
    EXPECT_EQ(phase_shift(0.0, l), 0.0);
    for (double d : {0.1, 0.5, 1.0, 4.0}) EXPECT_NEAR(phase_shift(-d, l), -phase_shift(d, l), 1e-15);
    LineShape unity{0.0, 1.0, 1.0, 1.0};
    EXPECT_EQ(phase_shift(0.0, unity), 0.0);
    EXPECT_NEAR(phase_shift(1e-9, unity), std::numbers::pi / 2, 1e-6);
    EXPECT_NEAR(amplitude_from_contrast(contrast_from_amplitude(0.37)), 0.37, 1e-15);
}

TEST(SteadyState, ReadoutGain) {
    auto s = SystemParams::make(2200.0, 19.88, 51.0, 0.0024, 32976.0, 196.0 / 32976.0);
    auto g = fx_readout_gain(s);
    double norm = std::sqrt((2200.0 - 19.88) * (2200.0 - 19.88) + 51.0 * 51.0);
    EXPECT_NEAR(g.gain, 32976.0 / norm, 1e-12);
    EXPECT_NEAR(std::sin(g.psi), 51.0 / norm, 1e-15);
    EXPECT_THROW(fx_readout_gain(SystemParams::make(10, 10, 0, 0, 1, 1)), ValidityError);
    EXPECT_THROW(hybrid_linewidth(SystemParams::make(10, 10, 0, 0, 1, 1), 0.0), ValidityError);
}
