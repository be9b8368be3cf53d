// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spinlight/experiments.hpp"

using namespace spinlight;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const char* id, const char* title, double budget_s, const std::function<Outcome()>& body) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = budget_s <= 0.0 || dt < budget_s;
    bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::string budget = budget_s > 0.0 ? strf(" (budget %.0f s)", budget_s) : "";
    std::printf("[%s] %s %s: %s; %.2f s%s\n", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), dt,
                budget.c_str());
    std::fflush(stdout);
}

void info(const std::string& line) {
    std::printf("       info: %s\n", line.c_str());
    std::fflush(stdout);
}

Config preset() { return Config::load(SPINLIGHT_PRESET); }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main() {
    std::printf("spinlight %s acceptance, %u worker(s)\n", kVersion, worker_count());

    // 1. Spectrum at the 6.1 mG operating point.
    criterion("C1", "spectrum width and contrast at B = 6.1 mG", 10.0, [] {
        auto rep = run_spectrum_scan(preset());
        double w = rep.fit("full_width").value, c = rep.fit("contrast").value;
        bool ok = rep.converged && std::abs(w - 10.5e-3) <= 0.2 * 10.5e-3 && c >= 0.47 && c <= 0.59;
        return Outcome{ok, strf("2gamma = %.4f mHz (window [8.4, 12.6]), C = %.4f (window [0.47, 0.59])", 1e3 * w, c)};
    });

    // 2 and 6a share the default field sweep.
    ScenarioReport sweep;
    criterion("C2", "field sweep anchor at 10.7 mG and monotonicity over 4-40 mG", 60.0, [&] {
        sweep = run_field_sweep(preset());
        std::size_t fw = sweep.column("full_width"), fc = sweep.column("field");
        double w107 = NAN;
        for (const auto& row : sweep.rows)
            if (std::abs(row[fc] - 10.7) < 1e-9) w107 = row[fw];
        bool mono_w = sweep.checks["full_width_monotone_decreasing"].get<bool>();
        bool mono_c = sweep.checks["contrast_monotone_decreasing"].get<bool>();
        bool ok = sweep.converged && w107 >= 4.3e-3 && w107 <= 6.5e-3 && mono_w && mono_c;
        return Outcome{ok, strf("2gamma(10.7 mG) = %.4f mHz (window [4.3, 6.5]), %zu fields %.3g-%.3g mG, "
                                "monotone 2gamma %s, C %s",
                                1e3 * w107, sweep.rows.size(), sweep.rows.front()[fc], sweep.rows.back()[fc],
                                mono_w ? "yes" : "no", mono_c ? "yes" : "no")};
    });

    // 3. Time domain vs. exact linear response vs. rotating-wave closed form.
    criterion("C3", "time-domain / exact / rotating-wave equivalence, 50 random systems", 120.0, [] {
        std::mt19937_64 rng(20240611);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst_td = 0.0, worst_rwa_margin = 0.0;
        int bad = 0, n = 0;
        while (n < 50) {
            double ga = 5.0 + 20.0 * u(rng), j = 2.0 + 23.0 * u(rng);
            double wa = 3000.0 + 5000.0 * u(rng), wb = 10.0 + 30.0 * u(rng);
            double gb = 0.1 + 0.4 * u(rng), ja = 100.0 * std::pow(100.0, u(rng));
            ModelParams m;
            m.system = SystemParams::make(wa, wb, ga, gb, ja, j * j / ja);
            m.optics.light_shift_rate = 1e-16 * (0.5 + u(rng));
            m.alkali_polarization = 0.3 + 0.7 * u(rng);
            auto line = line_shape(m);
            double w = line.center + (6.0 * u(rng) - 3.0) * line.half_width;
            if (w + wa < 100.0 * std::max(ga, j)) continue;
            ++n;
            complex s3 = std::polar(1.0, 2.0 * std::numbers::pi * u(rng));
            auto exact = exact_linear_response(m, w, s3);
            auto td = driven_steady_state(m, w, s3, 12.0 / line.half_width, 10.0, 24);
            double e_td = std::max(std::abs(td.f_plus - exact.f_plus) / std::abs(exact.f_plus),
                                   std::abs(td.r_plus - exact.r_plus) / std::abs(exact.r_plus));
            auto f = alkali_coherence(corotating(s3), w, m);
            auto r = noble_coherence(corotating(s3), w, m);
            double e_rwa = std::max(std::abs(exact.f_plus - f) / std::abs(f), std::abs(exact.r_plus - r) / std::abs(r));
            double bound = (ga + j) / std::abs(w + wa);
            worst_td = std::max(worst_td, e_td);
            worst_rwa_margin = std::max(worst_rwa_margin, e_rwa / bound);
            if (e_td > 1e-3 || e_rwa > bound) ++bad;
        }
        return Outcome{bad == 0, strf("max |td - exact| = %.2e (limit 1e-3), max rwa error / bound = %.2e (limit 1), "
                                      "%d of 50 out of tolerance",
                                      worst_td, worst_rwa_margin, bad)};
    });

    // 4. Closed-form transmission and phase on a 1001-point grid.
    criterion("C4", "transmission and phase exactness on 1001-point detuning grid", 0.0, [] {
        auto m = resolve_model(preset()).model;
        auto line = line_shape(m);
        double worst_t = 0.0, worst_p = 0.0;
        for (int i = 0; i <= 1000; ++i) {
            double delta = line.half_width * (-25.0 + 50.0 * i / 1000.0);
            double w = frequency_for_detuning(m.system, delta);
            auto resp = s2_response({0.8, -0.6}, w, m);
            complex ratio = resp.closed_form / complex{0.8, -0.6};
            double g = hybrid_linewidth(m.system, compute_detunings(w, m.system).alkali);
            double c0 = lorentzian_amplitude(m, g);
            double c = c0 * (2.0 - c0);
            double lorentz = 1.0 - c * g * g / (delta * delta + g * g);
            worst_t = std::max(worst_t, std::abs(std::norm(ratio) - lorentz));
            LineShape local{line.center, g, c0, c};
            worst_p = std::max(worst_p, std::abs(phase_shift(delta, local) - kPhaseSign * std::arg(ratio)));
        }
        return Outcome{worst_t <= 1e-12 && worst_p <= 1e-12,
                       strf("max transmission error %.2e, max phase error %.2e rad (limit 1e-12)", worst_t, worst_p)};
    });

    // 5. Excitation scan width and off-resonance contrast.
    criterion("C5", "excitation-scan width and |Delta| = 20 gamma amplitude ratio", 0.0, [] {
        auto cfg = preset();
        auto rep = run_excitation_scan(cfg);
        double ratio_w = rep.checks["width_ratio"].get<double>();
        auto m = resolve_model(cfg).model;
        double gamma = line_shape(m).half_width;
        ExcitationOptions o;
        o.pulse_duration = 3.0 / gamma;
        o.readout_duration = 1.0 / gamma;
        double on = excite_and_readout(m, frequency_for_detuning(m.system, 0.0), o).readout_amplitude;
        double off = std::max(excite_and_readout(m, frequency_for_detuning(m.system, 20.0 * gamma), o).readout_amplitude,
                              excite_and_readout(m, frequency_for_detuning(m.system, -20.0 * gamma), o).readout_amplitude);
        double ratio_a = off / on;
        bool ok = std::abs(ratio_w - 1.0) <= 0.05 && ratio_a <= 0.01;
        return Outcome{ok, strf("fitted width / model = %.4f (limit 1 +- 0.05), amplitude(20 gamma) / amplitude(0) = "
                                "%.4f (limit 0.01), steady-state bound 1/sqrt(401) = %.4f",
                                ratio_w, ratio_a, 1.0 / std::sqrt(401.0))};
    });
    {
        auto cfg = preset();
        cfg.set("excitation.pulse_duration", "10");
        auto t0 = std::chrono::steady_clock::now();
        auto rep = run_excitation_scan(cfg);
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        info(strf("C5 with pulse T = 10/gamma: fitted width / model = %.4f (%.1f s)",
                  rep.checks["width_ratio"].get<double>(), dt));
    }

    // 6. Transient decay vs. hybrid linewidth, and prepulse-amplitude invariance.
    criterion("C6", "transient decay = hybrid linewidth at every B; prepulse amplitude invariance", 0.0, [&] {
        if (sweep.rows.empty()) return Outcome{false, "field sweep unavailable"};
        double worst = 0.0;
        std::size_t tw = sweep.column("transient_full_width"), mw = sweep.column("model_full_width");
        for (const auto& row : sweep.rows) worst = std::max(worst, std::abs(row[tw] / row[mw] - 1.0));
        auto m = resolve_model(preset()).model;
        // prepulse sized so the driven noble-gas coherence is comparable to the tilt
        double r_unit = std::abs(noble_coherence(corotating({1.0, 0.0}), line_center(m.system), m));
        TransientOptions a, b;
        a.prepulse_amplitude = 0.1 / r_unit;
        b.prepulse_amplitude = 1.0 / r_unit;
        double ga = magnetic_pulse_transient(m, a).decay_rate;
        double gb = magnetic_pulse_transient(m, b).decay_rate;
        double inv = std::abs(gb / ga - 1.0);
        return Outcome{worst <= 0.02 && inv <= 0.01,
                       strf("max |gamma_transient / gamma - 1| = %.2e over %zu fields (limit 0.02), 10x prepulse "
                            "change %.2e (limit 0.01)",
                            worst, sweep.rows.size(), inv)};
    });

    // 7. Alkali calibration recovery and confidence coverage.
    criterion("C7", "calibration recovery (noiseless 1%) and 95% CI coverage over 200 seeds", 0.0, [] {
        auto cfg = preset();
        auto resolved = resolve_model(cfg);
        auto quiet = cfg;
        quiet.set("calibration.noise", "0");
        auto c0 = calibrate(resolved, CalibrationSettings::from(quiet), 0);
        double eg = std::abs(c0.line.slope / 592.0 - 1.0), ea = std::abs(c0.gamma_a / 51.0 - 1.0);
        auto st = CalibrationSettings::from(cfg);
        int cov_g = 0, cov_a = 0;
        const int seeds = 200;
        for (int s = 1; s <= seeds; ++s) {
            auto c = calibrate(resolved, st, static_cast<std::uint64_t>(s));
            if (std::abs(c.line.slope - 592.0) <= c.line.slope_ci) ++cov_g;
            if (std::abs(c.gamma_a - 51.0) <= c.gamma_a_ci) ++cov_a;
        }
        bool ok = eg <= 0.01 && ea <= 0.01 && cov_g >= 0.93 * seeds && cov_a >= 0.93 * seeds;
        return Outcome{ok, strf("noiseless errors g_a %.1e, gamma_a %.1e (limit 1e-2); coverage g_a %d/%d, "
                                "gamma_a %d/%d (limit 186/200)",
                                eg, ea, cov_g, seeds, cov_a, seeds)};
    });

    // 8. Byte-identical reruns of every scenario.
    criterion("C8", "byte-identical reruns of all scenarios", 0.0, [] {
        auto root = std::filesystem::temp_directory_path() / "spinlight_acceptance";
        std::filesystem::remove_all(root);
        std::vector<std::pair<std::string, Config>> runs;
        auto cfg = preset();
        runs.emplace_back("spectrum-scan", cfg);
        auto td = cfg;
        td.set("spectrum.path", "time-domain");
        td.set("spectrum.points", "5");
        td.set("spectrum.baseline_points", "2");
        runs.emplace_back("spectrum-scan", td);
        auto ex = cfg;
        ex.set("excitation.points", "5");
        runs.emplace_back("excitation-scan", ex);
        auto sw = cfg;
        sw.set("sweep.fields", "6.1, 10.7");
        runs.emplace_back("field-sweep", sw);
        runs.emplace_back("transient", cfg);
        runs.emplace_back("calibrate-alkali", cfg);
        int identical = 0, total = 0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            auto a = run_scenario(runs[i].first, runs[i].second).write(root / strf("%zu_a", i));
            auto b = run_scenario(runs[i].first, runs[i].second).write(root / strf("%zu_b", i));
            for (std::size_t k = 0; k < a.size(); ++k) {
                ++total;
                if (slurp(a[k]) == slurp(b[k])) ++identical;
            }
        }
        std::filesystem::remove_all(root);
        return Outcome{identical == total, strf("%d of %d output files identical across reruns", identical, total)};
    });

    std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
