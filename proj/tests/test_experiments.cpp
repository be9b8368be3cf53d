#include <gtest/gtest.h>

#include <cstdlib>
#include <set>

#include "spinlight/experiments.hpp"
#include "support.hpp"

using namespace spinlight;
using testing_support::preset;
using testing_support::slurp;

namespace {

double value(const ScenarioReport& r, const std::string& name) { return r.fit(name).value; }

} // namespace

TEST(Experiments, DetuningGrid) {
    auto g = detuning_grid(2.0, 41, 5.0, 8, 50.0);
    ASSERT_EQ(g.size(), 49u);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
    EXPECT_EQ(std::set<double>(g.begin(), g.end()).size(), g.size());
    EXPECT_NE(std::find(g.begin(), g.end(), 0.0), g.end());
    EXPECT_DOUBLE_EQ(g.front(), -100.0);
    EXPECT_DOUBLE_EQ(g.back(), 100.0);
}

TEST(Experiments, SeedDerivation) {
    EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(7, s, i));
    EXPECT_EQ(seen.size(), 200u);
}

TEST(Experiments, NoiselessSpectrumMatchesLineShape) {
    auto cfg = preset();
    cfg.set("spectrum.noise", "0");
    auto rep = run_spectrum_scan(cfg);
    auto l = line_shape(resolve_model(cfg).model);
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(value(rep, "half_width") / l.half_width, 1.0, 1e-3);
    EXPECT_NEAR(value(rep, "contrast") / l.contrast, 1.0, 1e-3);
    EXPECT_NEAR(value(rep, "center_frequency"), l.center, 1e-3 * l.half_width);
    EXPECT_EQ(rep.rows.size(), 49u);
    // the pulling shift is reported, not absorbed
    EXPECT_LT(rep.checks["model_full_width"].get<double>(), 0.01);
    EXPECT_NEAR(value(rep, "center_frequency") - rep.checks["bare_noble_larmor"].get<double>(), -0.0898, 1e-3);
}

TEST(Experiments, PresetSpectrumInTargetWindow) {
    auto rep = run_spectrum_scan(preset());
    EXPECT_TRUE(rep.converged);
    double two_gamma = value(rep, "full_width");
    EXPECT_GT(two_gamma, 0.8 * 10.5e-3);
    EXPECT_LT(two_gamma, 1.2 * 10.5e-3);
    EXPECT_GE(value(rep, "contrast"), 0.47);
    EXPECT_LE(value(rep, "contrast"), 0.59);
}

TEST(Experiments, ZeroCouplingSpectrumIsDegenerate) {
    auto cfg = preset();
    cfg.set("system.coupling", "0");
    auto rep = run_spectrum_scan(cfg);
    EXPECT_FALSE(rep.converged);
    EXPECT_FALSE(rep.warnings.empty());
    for (const auto& row : rep.rows) EXPECT_NEAR(row[rep.column("transmission")], 1.0, 0.02);
}

TEST(Experiments, SpectrumIsDeterministicAndWorkerIndependent) {
    auto cfg = preset();
    cfg.set("spectrum.points", "11");
    cfg.set("spectrum.baseline_points", "2");
    ::setenv("SPINLIGHT_WORKERS", "1", 1);
    auto a = run_spectrum_scan(cfg);
    ::setenv("SPINLIGHT_WORKERS", "4", 1);
    auto b = run_spectrum_scan(cfg);
    ::unsetenv("SPINLIGHT_WORKERS");
    EXPECT_EQ(a.points_csv(), b.points_csv());
    EXPECT_EQ(a.fit_json().dump(), b.fit_json().dump());
    cfg.set("run.seed", "2");
    EXPECT_NE(run_spectrum_scan(cfg).points_csv(), a.points_csv());
}

TEST(Experiments, ProvenanceReproducesRun) {
    auto cfg = preset();
    cfg.set("spectrum.points", "9");
    cfg.set("spectrum.baseline_points", "2");
    auto dir = testing_support::scratch_dir("provenance");
    auto rep = run_spectrum_scan(cfg);
    auto paths = rep.write(dir);
    ASSERT_EQ(paths.size(), 3u);
    for (const auto& p : paths) EXPECT_TRUE(std::filesystem::exists(p));
    auto again = run_spectrum_scan(Config::load(paths[2]));
    EXPECT_EQ(again.points_csv(), slurp(paths[0]));
    auto prov = nlohmann::json::parse(slurp(paths[2]));
    EXPECT_EQ(prov["scenario"], "spectrum-scan");
    EXPECT_EQ(prov["seed"], 1);
    EXPECT_TRUE(prov["resolved"].contains("system"));
    auto fit = nlohmann::json::parse(slurp(paths[1]));
    for (const auto& f : fit["fits"])
        for (const char* key : {"parameter", "value", "ci_low", "ci_high", "residual_rms", "n_points"})
            EXPECT_TRUE(f.contains(key)) << key;
}

TEST(Experiments, TimeDomainPathAgreesWithClosedForm) {
    auto cfg = preset();
    cfg.set("spectrum.noise", "0");
    cfg.set("spectrum.points", "7");
    cfg.set("spectrum.baseline_points", "2");
    auto closed = run_spectrum_scan(cfg);
    cfg.set("spectrum.path", "time-domain");
    auto td = run_spectrum_scan(cfg);
    ASSERT_TRUE(td.converged);
    EXPECT_NEAR(value(td, "half_width") / value(closed, "half_width"), 1.0, 0.01);
    EXPECT_NEAR(value(td, "contrast") / value(closed, "contrast"), 1.0, 0.01);
}

TEST(Experiments, SpectrumConfigValidation) {
    auto cfg = preset();
    cfg.set("spectrum.path", "magic");
    EXPECT_THROW(run_spectrum_scan(cfg), ConfigError);
    cfg = preset();
    cfg.set("spectrum.baseline_points", "3");
    EXPECT_THROW(run_spectrum_scan(cfg), ConfigError);
    cfg = preset();
    cfg.set("spectrum.samples_per_period", "3");
    EXPECT_THROW(run_spectrum_scan(cfg), ConfigError);
}

TEST(Experiments, ExcitationScanNormalization) {
    auto cfg = preset();
    cfg.set("excitation.points", "5");
    cfg.set("excitation.span", "2");
    auto rep = run_excitation_scan(cfg);
    auto col = rep.column("r_perp_normalized");
    ASSERT_EQ(rep.rows.size(), 5u);
    EXPECT_EQ(rep.rows[2][col], 1.0);
    EXPECT_EQ(rep.rows[2][rep.column("delta")], 0.0);
    EXPECT_LT(rep.rows[0][col], 1.0);
    EXPECT_LT(rep.rows[4][col], 1.0);
    cfg.set("excitation.points", "4");
    EXPECT_THROW(run_excitation_scan(cfg), ConfigError);
}

TEST(Experiments, FieldSweepAnchorsAndAgreement) {
    auto cfg = preset();
    cfg.set("sweep.fields", "6.1, 10.7, 20");
    auto rep = run_field_sweep(cfg);
    ASSERT_EQ(rep.groups.size(), 3u);
    EXPECT_TRUE(rep.converged);
    auto fw = rep.column("full_width");
    double w107 = rep.rows[1][fw];
    EXPECT_GE(w107, 4.3e-3);
    EXPECT_LE(w107, 6.5e-3);
    EXPECT_TRUE(rep.checks["full_width_monotone_decreasing"].get<bool>());
    EXPECT_TRUE(rep.checks["contrast_monotone_decreasing"].get<bool>());
    for (const auto& row : rep.rows) {
        EXPECT_NEAR(row[rep.column("transient_ratio")], 1.0, 0.02);
        EXPECT_NEAR(row[fw] / row[rep.column("model_full_width")], 1.0, 1e-3);
    }
    cfg.set("sweep.fields", "6.1, 6.1");
    EXPECT_THROW(run_field_sweep(cfg), ConfigError);
}

TEST(Experiments, DefaultFieldGridContainsAnchors) {
    auto s = SweepSettings::from(preset());
    EXPECT_EQ(s.fields.size(), 14u);
    EXPECT_TRUE(std::is_sorted(s.fields.begin(), s.fields.end()));
    EXPECT_NE(std::find(s.fields.begin(), s.fields.end(), 10.7), s.fields.end());
    EXPECT_DOUBLE_EQ(s.fields.front(), 4.0);
    EXPECT_NEAR(s.fields.back(), 40.0, 1e-12);
}

TEST(Experiments, TransientScenario) {
    auto rep = run_transient(preset());
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(rep.checks["decay_ratio"].get<double>(), 1.0, 0.02);
    auto cfg = preset();
    cfg.set("transient.window", "0.5");
    EXPECT_THROW(run_transient(cfg), FitError);
}

TEST(Experiments, CalibrationNoiselessIsExact) {
    auto cfg = preset();
    cfg.set("calibration.noise", "0");
    auto rep = run_calibration(cfg);
    EXPECT_TRUE(rep.converged);
    EXPECT_NEAR(value(rep, "alkali_gyromagnetic"), 592.0, 592e-6);
    EXPECT_NEAR(value(rep, "alkali_decoherence"), 51.0, 51e-6);
    EXPECT_NEAR(value(rep, "noble_emf"), resolve_model(cfg).magnetic.noble_emf, 1e-6);
}

TEST(Experiments, CalibrationNoisyWithinBand) {
    auto rep = run_calibration(preset());
    const auto& g = rep.fit("alkali_decoherence");
    EXPECT_NEAR(g.value, 51.0, 3.0);
    EXPECT_LT(g.ci_low, g.value);
    EXPECT_GT(g.ci_high, g.value);
    EXPECT_NEAR(value(rep, "alkali_gyromagnetic"), 592.0, 5.92);
}

TEST(Experiments, CalibrationValidation) {
    auto cfg = preset();
    cfg.set("calibration.fields", "4, 8");
    EXPECT_THROW(run_calibration(cfg), ConfigError);
    cfg.set("calibration.fields", "4, 8, 6");
    EXPECT_THROW(run_calibration(cfg), ConfigError);
    cfg.set("calibration.fields", "1, 4, 8");
    EXPECT_THROW(run_calibration(cfg), ValidityError);
}

TEST(Experiments, ScenarioDispatch) {
    EXPECT_THROW(run_scenario("nope", preset()), ConfigError);
    EXPECT_EQ(run_scenario("transient", preset()).scenario, "transient");
}
