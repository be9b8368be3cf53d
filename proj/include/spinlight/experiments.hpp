#pragma once

// Scenario runners: each reads a Config, composes the model, dynamics and
// fitting layers, and returns a ScenarioReport that serializes to
// <scenario>_points.csv, <scenario>_fit.json and <scenario>_provenance.json.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinlight/config.hpp"
#include "spinlight/core_model.hpp"
#include "spinlight/dynamics.hpp"
#include "spinlight/signal.hpp"
#include "spinlight/steady_state.hpp"

namespace spinlight {

inline constexpr const char* kVersion = "0.1.0";

using ordered_json = nlohmann::ordered_json;

// ------------------------------------------------------------------ plumbing

/// Worker count: hardware concurrency, capped by SPINLIGHT_WORKERS.
inline unsigned worker_count() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPINLIGHT_WORKERS")) {
        char* end = nullptr;
        long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

/// Runs body(i) for i in [0, n). Results must be written by index; the first
/// exception (lowest index) is rethrown after all workers finish.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// SplitMix64 mix of (seed, stream, index): per-point noise seeds that do not
/// depend on scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream * 0x100000001ULL + index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct FitEntry {
    std::string parameter;
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
};

inline FitEntry fit_entry(std::string name, double value, double half, double rms, std::size_t n) {
    return {std::move(name), value, value - half, value + half, rms, n};
}

inline ordered_json to_json(const FitEntry& e) {
    auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    ordered_json j;
    j["parameter"] = e.parameter;
    j["value"] = num(e.value);
    j["ci_low"] = num(e.ci_low);
    j["ci_high"] = num(e.ci_high);
    j["residual_rms"] = num(e.residual_rms);
    j["n_points"] = e.n_points;
    return j;
}

struct FitGroup {
    std::string key;
    double value = 0.0;
    std::vector<FitEntry> fits;
    bool converged = true;
};

struct ScenarioReport {
    std::string scenario;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<FitEntry> fits;
    std::vector<FitGroup> groups;
    ordered_json checks = ordered_json::object();
    ordered_json provenance;
    bool converged = true;
    std::vector<std::string> warnings;
    std::vector<std::string> summary;

    [[nodiscard]] const FitEntry& fit(const std::string& name) const {
        for (const auto& f : fits)
            if (f.parameter == name) return f;
        throw std::out_of_range("no fit entry '" + name + "'");
    }

    [[nodiscard]] std::size_t column(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw std::out_of_range("no column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    [[nodiscard]] std::string points_csv() const {
        std::string out;
        for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
        out += "\n";
        char buf[64];
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", row[i]);
                if (i) out += ",";
                out += buf;
            }
            out += "\n";
        }
        return out;
    }

    [[nodiscard]] ordered_json fit_json() const {
        ordered_json j;
        j["scenario"] = scenario;
        j["converged"] = converged;
        j["fits"] = ordered_json::array();
        for (const auto& f : fits) j["fits"].push_back(to_json(f));
        if (!groups.empty()) {
            j["groups"] = ordered_json::array();
            for (const auto& g : groups) {
                ordered_json gj;
                gj[g.key] = g.value;
                gj["converged"] = g.converged;
                gj["fits"] = ordered_json::array();
                for (const auto& f : g.fits) gj["fits"].push_back(to_json(f));
                j["groups"].push_back(gj);
            }
        }
        if (!checks.empty()) j["checks"] = checks;
        j["warnings"] = warnings;
        return j;
    }

    /// Writes the three output files into `dir`; returns their paths.
    std::vector<std::filesystem::path> write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        std::vector<std::filesystem::path> paths{dir / (scenario + "_points.csv"), dir / (scenario + "_fit.json"),
                                                 dir / (scenario + "_provenance.json")};
        auto put = [](const std::filesystem::path& p, const std::string& text) {
            std::ofstream os(p, std::ios::binary);
            if (!os) throw ConfigError("cannot write '" + p.string() + "'");
            os << text;
        };
        put(paths[0], points_csv());
        put(paths[1], fit_json().dump(2) + "\n");
        put(paths[2], provenance.dump(2) + "\n");
        return paths;
    }
};

inline ordered_json resolved_json(const ResolvedModel& r) {
    const auto& s = r.model.system;
    const auto& o = r.model.optics;
    ordered_json j;
    j["system"] = {{"alkali_larmor", s.alkali_larmor},           {"noble_larmor", s.noble_larmor},
                   {"alkali_decoherence", s.alkali_decoherence}, {"noble_decoherence", s.noble_decoherence},
                   {"alkali_exchange_rate", s.alkali_exchange},  {"noble_exchange_rate", s.noble_exchange},
                   {"coupling", s.coupling}};
    j["optics"] = {{"light_shift_rate", o.light_shift_rate},
                   {"faraday_gain", o.faraday_gain},
                   {"scattering_rate", o.scattering_rate},
                   {"optical_depth", o.optical_depth},
                   {"microscopic_faraday_gain", r.microscopic_faraday_gain}};
    j["cell"] = {{"noble_density", noble_density(r.cell)},
                 {"alkali_polarization", r.cell.alkali_polarization},
                 {"noble_polarization", r.cell.noble_polarization},
                 {"noble_polarization_inverted", r.noble_polarization_inverted}};
    j["magnetic"] = {{"field", r.magnetic.field},
                     {"alkali_gyromagnetic", r.magnetic.alkali_gyromagnetic},
                     {"noble_gyromagnetic", r.magnetic.noble_gyromagnetic},
                     {"alkali_emf", r.magnetic.alkali_emf},
                     {"noble_emf", r.magnetic.noble_emf},
                     {"larmor_from_field", r.larmor_from_field}};
    auto line = line_shape(r.model);
    j["line"] = {{"center", line.center},
                 {"pulling_shift", line.center - s.noble_larmor},
                 {"half_width", line.half_width},
                 {"full_width", 2.0 * line.half_width},
                 {"amplitude", line.amplitude},
                 {"contrast", line.contrast}};
    j["warnings"] = r.warnings;
    return j;
}

inline ordered_json provenance_json(const std::string& scenario, const Config& cfg, std::uint64_t seed,
                                    const ResolvedModel& r) {
    ordered_json j;
    j["scenario"] = scenario;
    j["version"] = kVersion;
    j["seed"] = seed;
    ordered_json c = ordered_json::object();
    for (const auto& [k, v] : cfg.entries()) c[k] = v;
    j["config"] = c;
    j["resolved"] = resolved_json(r);
    return j;
}

/// Seed from the config (run.seed), unsigned 64-bit.
inline std::uint64_t config_seed(const Config& cfg) {
    if (!cfg.has("run.seed")) return 0;
    std::string s = cfg.string_or("run.seed", "0");
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("run.seed must be a non-negative integer");
    return v;
}

inline std::vector<double> strictly_increasing(std::vector<double> v, const std::string& what) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) throw ConfigError(what + " must be strictly increasing");
    return v;
}

inline ode::StepPolicy default_step_policy() { return {}; }

// ------------------------------------------------------------ spectrum scan

struct SpectrumSettings {
    std::string path = "closed-form"; // or "time-domain"
    long points = 41;
    double span = 5.0;          // ± span·γ
    long baseline_points = 8;
    double baseline_span = 50.0; // far points out to ± baseline_span·γ
    double periods = 100.0;
    long samples_per_period = 16;
    double noise = 0.0;
    double settle = 8.0;        // time-domain settling, in 1/γ

    static SpectrumSettings from(const Config& cfg) {
        SpectrumSettings s;
        s.path = cfg.string_or("spectrum.path", s.path);
        if (s.path != "closed-form" && s.path != "time-domain")
            throw ConfigError("spectrum.path must be 'closed-form' or 'time-domain'");
        s.points = cfg.integer_or("spectrum.points", s.points);
        s.span = cfg.number_or("spectrum.span", s.span);
        s.baseline_points = cfg.integer_or("spectrum.baseline_points", s.baseline_points);
        s.baseline_span = cfg.number_or("spectrum.baseline_span", s.baseline_span);
        s.periods = cfg.number_or("spectrum.periods", s.periods);
        s.samples_per_period = cfg.integer_or("spectrum.samples_per_period", s.samples_per_period);
        s.noise = cfg.number_or("spectrum.noise", s.noise);
        s.settle = cfg.number_or("spectrum.settle", s.settle);
        if (s.points < 5) throw ConfigError("spectrum.points must be at least 5");
        if (!(s.span > 0.0)) throw ConfigError("spectrum.span must be positive");
        if (s.baseline_points < 0 || s.baseline_points % 2) throw ConfigError("spectrum.baseline_points must be even");
        if (s.baseline_points > 0 && !(s.baseline_span > s.span))
            throw ConfigError("spectrum.baseline_span must exceed spectrum.span");
        if (!(s.periods >= 3.0)) throw ConfigError("spectrum.periods must be at least 3");
        if (s.samples_per_period < 5) throw ConfigError("spectrum.samples_per_period must be at least 5");
        if (s.noise < 0.0) throw ConfigError("spectrum.noise must be non-negative");
        if (!(s.settle > 0.0)) throw ConfigError("spectrum.settle must be positive");
        return s;
    }
};

/// Pulled-detuning grid: `points` uniform over ±span·γ plus log-spaced far
/// baseline points on both sides, sorted.
inline std::vector<double> detuning_grid(double gamma, long points, double span, long baseline_points,
                                         double baseline_span) {
    std::vector<double> d;
    for (long i = 0; i < points; ++i)
        d.push_back(gamma * span * (-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1)));
    long per_side = baseline_points / 2;
    for (long i = 0; i < per_side; ++i) {
        double f = per_side == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(per_side - 1);
        double lo = std::max(2.0 * span, 0.5 * (span + baseline_span));
        double v = gamma * lo * std::pow(baseline_span / lo, f);
        d.push_back(v);
        d.push_back(-v);
    }
    std::sort(d.begin(), d.end());
    return d;
}

struct SpectrumPoint {
    double omega = 0.0, delta = 0.0;
    double transmission = 0.0, phase = 0.0;
    double transmission_sigma = 0.0, phase_sigma = 0.0;
    complex f, r;
    complex s2_out;
};

/// One heterodyne measurement of S2in / S2out at ω: noise is added to both
/// detector series, which are then demodulated.
inline SpectrumPoint measure_point(double omega, complex s2_in, complex s2_out, const SpectrumSettings& st,
                                   std::uint64_t seed_in, std::uint64_t seed_out) {
    double period = 2.0 * std::numbers::pi / omega;
    double duration = st.periods * period;
    double rate = static_cast<double>(st.samples_per_period) / period;
    auto in = stokes_time_series(s2_in, kI * s2_in, omega, duration, rate, st.noise, seed_in);
    auto out = stokes_time_series(s2_out, kI * s2_in, omega, duration, rate, st.noise, seed_out);
    auto hin = heterodyne_extract(in.t, in.s2, omega);
    auto hout = heterodyne_extract(out.t, out.s2, omega);
    SpectrumPoint p;
    p.omega = omega;
    complex ratio = hout.phasor / hin.phasor;
    p.transmission = std::norm(ratio);
    p.phase = kPhaseSign * std::arg(ratio);
    p.s2_out = hout.phasor;
    if (st.noise > 0.0) {
        // delta method on |ratio|² and arg(ratio), phasor components independent
        auto amp_var = [](const HarmonicFit& h) {
            double a = h.phasor.real(), b = h.phasor.imag(), m2 = a * a + b * b;
            return (a * a * h.var_a + b * b * h.var_b + 2 * a * b * h.cov_ab) / m2;
        };
        auto phase_var = [](const HarmonicFit& h) {
            double a = h.phasor.real(), b = h.phasor.imag(), m2 = a * a + b * b;
            return (b * b * h.var_a + a * a * h.var_b - 2 * a * b * h.cov_ab) / (m2 * m2);
        };
        double ai = hin.amplitude, ao = hout.amplitude;
        double rel = amp_var(hout) / (ao * ao) + amp_var(hin) / (ai * ai);
        p.transmission_sigma = 2.0 * p.transmission * std::sqrt(rel);
        p.phase_sigma = std::sqrt(phase_var(hout) + phase_var(hin));
    }
    return p;
}

struct SpectrumAnalysis {
    std::vector<SpectrumPoint> points;
    LineFit fit;
    double phase_rms = 0.0;       // measured phase vs. phase predicted from the fitted (γ, C)
    double center_frequency = 0.0;
};

inline SpectrumAnalysis analyze_spectrum(const ModelParams& m, const SpectrumSettings& st, std::uint64_t seed,
                                         std::uint64_t stream) {
    auto line = line_shape(m);
    auto grid = detuning_grid(line.half_width, st.points, st.span, st.baseline_points, st.baseline_span);
    SpectrumAnalysis a;
    a.points.resize(grid.size());
    const complex s2_in{1.0, 0.0};
    parallel_for(grid.size(), [&](std::size_t i) {
        double omega = frequency_for_detuning(m.system, grid[i]);
        if (!(omega > 0.0)) throw ValidityError("spectrum grid reaches non-positive modulation frequency");
        complex f, r, s2_out;
        if (st.path == "time-domain") {
            auto d = driven_steady_state(m, omega, kI * s2_in, st.settle / line.half_width, st.periods,
                                         static_cast<int>(st.samples_per_period));
            f = d.f_plus;
            r = d.r_plus;
            s2_out = s2_in + m.optics.faraday_gain * f;
        } else {
            complex drive = corotating(kI * s2_in);
            f = alkali_coherence(drive, omega, m);
            r = noble_coherence(drive, omega, m);
            s2_out = s2_response(s2_in, omega, m).s2_out;
        }
        auto p = measure_point(omega, s2_in, s2_out, st, derive_seed(seed, stream, 2 * i),
                               derive_seed(seed, stream, 2 * i + 1));
        p.delta = compute_detunings(omega, m.system).pulled;
        p.f = f;
        p.r = r;
        a.points[i] = p;
    });
    std::vector<double> x, y, sg;
    for (const auto& p : a.points) {
        x.push_back(p.delta);
        y.push_back(p.transmission);
        if (st.noise > 0.0) sg.push_back(p.transmission_sigma);
    }
    a.fit = fit_inverted_lorentzian(x, y, sg);
    if (!a.fit.degenerate) {
        LineShape fitted;
        fitted.half_width = a.fit.half_width;
        fitted.contrast = std::clamp(a.fit.contrast, 0.0, 1.0);
        fitted.amplitude = amplitude_from_contrast(fitted.contrast);
        double ss = 0.0;
        for (const auto& p : a.points) {
            double e = p.phase - phase_shift(p.delta - a.fit.center, fitted);
            ss += e * e;
        }
        a.phase_rms = std::sqrt(ss / static_cast<double>(a.points.size()));
        a.center_frequency = frequency_for_detuning(m.system, a.fit.center);
    }
    return a;
}

inline std::vector<FitEntry> line_fit_entries(const LineFit& f, double center_frequency) {
    auto n = f.n_points;
    double rms = f.residual_rms;
    return {fit_entry("full_width", 2.0 * f.half_width, 2.0 * f.half_width_ci, rms, n),
            fit_entry("half_width", f.half_width, f.half_width_ci, rms, n),
            fit_entry("contrast", f.contrast, f.contrast_ci, rms, n),
            fit_entry("center_detuning", f.center, f.center_ci, rms, n),
            fit_entry("center_frequency", center_frequency, f.center_ci, rms, n),
            fit_entry("baseline", f.baseline, f.baseline_ci, rms, n)};
}

inline std::string strf(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

inline ScenarioReport run_spectrum_scan(const Config& cfg) {
    auto resolved = resolve_model(cfg);
    auto st = SpectrumSettings::from(cfg);
    auto seed = config_seed(cfg);
    const auto& m = resolved.model;
    auto a = analyze_spectrum(m, st, seed, 1);

    ScenarioReport rep;
    rep.scenario = "spectrum-scan";
    rep.columns = {"omega", "delta", "transmission", "phase", "re_F", "im_F", "re_R", "im_R",
                   "transmission_sigma", "phase_sigma"};
    for (const auto& p : a.points)
        rep.rows.push_back({p.omega, p.delta, p.transmission, p.phase, p.f.real(), p.f.imag(), p.r.real(),
                            p.r.imag(), p.transmission_sigma, p.phase_sigma});
    rep.warnings = resolved.warnings;
    if (a.fit.degenerate) {
        rep.converged = false;
        rep.warnings.push_back("line fit degenerate: " + a.fit.message);
        rep.fits.push_back(fit_entry("baseline", a.fit.baseline, 0.0, a.fit.residual_rms, a.fit.n_points));
    } else {
        rep.converged = a.fit.converged;
        if (!a.fit.converged) rep.warnings.push_back("line fit did not converge: " + a.fit.message);
        rep.fits = line_fit_entries(a.fit, a.center_frequency);
        rep.fits.push_back(fit_entry("phase_consistency_rms", a.phase_rms, 0.0, a.phase_rms, a.points.size()));
    }
    auto line = line_shape(m);
    rep.checks["model_full_width"] = 2.0 * line.half_width;
    rep.checks["model_contrast"] = line.contrast;
    rep.checks["bare_noble_larmor"] = m.system.noble_larmor;
    rep.checks["path"] = st.path;
    rep.provenance = provenance_json(rep.scenario, cfg, seed, resolved);

    rep.summary.push_back(strf("spectrum-scan (%s path, %zu points)", st.path.c_str(), a.points.size()));
    if (a.fit.degenerate) {
        rep.summary.push_back("  line fit degenerate: " + a.fit.message);
    } else {
        rep.summary.push_back(strf("  2gamma = %.4f mHz  [%.4f, %.4f]   model %.4f mHz", 2e3 * a.fit.half_width,
                                     2e3 * (a.fit.half_width - a.fit.half_width_ci),
                                     2e3 * (a.fit.half_width + a.fit.half_width_ci), 2e3 * line.half_width));
        rep.summary.push_back(strf("  C      = %.4f  [%.4f, %.4f]   model %.4f", a.fit.contrast,
                                     a.fit.contrast - a.fit.contrast_ci, a.fit.contrast + a.fit.contrast_ci,
                                     line.contrast));
        rep.summary.push_back(strf("  center = %.6f Hz (Delta0 = %.3g +- %.2g Hz, bare omega_b = %.6f Hz)",
                                     a.center_frequency, a.fit.center, a.fit.center_ci, m.system.noble_larmor));
        rep.summary.push_back(strf("  phase residual vs. fitted (gamma, C): %.3g rad rms", a.phase_rms));
    }
    return rep;
}

// ---------------------------------------------------------- excitation scan

struct ExcitationSettings {
    long points = 21;
    double span = 5.0;
    double pulse_duration = 3.0;   // in 1/γ
    double readout_duration = 1.0; // in 1/γ
    Envelope envelope = Envelope::rectangular;
    double ramp_time = 0.0;        // 0: 1/γ_a
    long samples_per_period = 32;

    static ExcitationSettings from(const Config& cfg) {
        ExcitationSettings s;
        s.points = cfg.integer_or("excitation.points", s.points);
        s.span = cfg.number_or("excitation.span", s.span);
        s.pulse_duration = cfg.number_or("excitation.pulse_duration", s.pulse_duration);
        s.readout_duration = cfg.number_or("excitation.readout_duration", s.readout_duration);
        auto env = cfg.string_or("excitation.envelope", "rectangular");
        if (env == "rectangular") s.envelope = Envelope::rectangular;
        else if (env == "raised-cosine") s.envelope = Envelope::raised_cosine;
        else throw ConfigError("excitation.envelope must be 'rectangular' or 'raised-cosine'");
        s.ramp_time = cfg.number_or("excitation.ramp_time", s.ramp_time);
        s.samples_per_period = cfg.integer_or("excitation.samples_per_period", s.samples_per_period);
        if (s.points < 5 || s.points % 2 == 0) throw ConfigError("excitation.points must be odd and at least 5");
        if (!(s.span > 0.0)) throw ConfigError("excitation.span must be positive");
        if (!(s.readout_duration > 0.0)) throw ConfigError("excitation.readout_duration must be positive");
        if (s.samples_per_period < 8) throw ConfigError("excitation.samples_per_period must be at least 8");
        return s;
    }
};

struct ExcitationScan {
    std::vector<double> delta;
    std::vector<ExcitationResult> results;
    std::vector<double> normalized; // R₀⊥(Δ) / R₀⊥(0)
    PeakFit fit;                    // Lorentzian fit to normalized²
    double gamma = 0.0;             // Eq. (1) at the line center
};

/// Excite-and-readout at each Δ of `grid` (must contain 0).
inline ExcitationScan analyze_excitation(const ModelParams& m, const std::vector<double>& grid,
                                         const ExcitationSettings& st) {
    ExcitationScan scan;
    const auto& s = m.system;
    scan.gamma = hybrid_linewidth(s, line_center(s) - s.alkali_larmor);
    auto zero = std::find(grid.begin(), grid.end(), 0.0);
    if (zero == grid.end()) throw ConfigError("excitation grid must contain the line center");
    ExcitationOptions o;
    o.pulse_duration = st.pulse_duration / scan.gamma;
    o.readout_duration = st.readout_duration / scan.gamma;
    o.envelope = st.envelope;
    o.ramp_time = st.ramp_time;
    o.samples_per_period = static_cast<int>(st.samples_per_period);
    scan.delta = grid;
    scan.results.resize(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        scan.results[i] = excite_and_readout(m, frequency_for_detuning(s, grid[i]), o);
        scan.results[i].delta = grid[i];
    });
    double ref = scan.results[static_cast<std::size_t>(zero - grid.begin())].r_perp;
    if (!(ref > 0.0)) throw FitError("on-resonance readout amplitude vanishes");
    std::vector<double> power;
    for (const auto& r : scan.results) {
        scan.normalized.push_back(r.r_perp / ref);
        power.push_back(scan.normalized.back() * scan.normalized.back());
    }
    scan.fit = fit_lorentzian_peak(scan.delta, power);
    return scan;
}

inline ScenarioReport run_excitation_scan(const Config& cfg) {
    auto resolved = resolve_model(cfg);
    auto st = ExcitationSettings::from(cfg);
    auto seed = config_seed(cfg);
    const auto& m = resolved.model;
    double gamma = line_shape(m).half_width;
    std::vector<double> grid;
    long half = (st.points - 1) / 2;
    for (long i = -half; i <= half; ++i)
        grid.push_back(i == 0 ? 0.0 : gamma * st.span * static_cast<double>(i) / static_cast<double>(half));
    auto scan = analyze_excitation(m, grid, st);

    ScenarioReport rep;
    rep.scenario = "excitation-scan";
    rep.columns = {"omega", "delta", "r_perp", "r_perp_normalized", "power_normalized", "readout_amplitude",
                   "readout_decay", "readout_frequency", "pulse_growth"};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& r = scan.results[i];
        double nrm = scan.normalized[i];
        rep.rows.push_back({r.omega, r.delta, r.r_perp, nrm, nrm * nrm, r.readout_amplitude, r.fit.decay,
                            r.fit.frequency, r.growth});
        for (const auto& w : r.warnings) rep.warnings.push_back(strf("delta = %.6g: ", r.delta) + w);
    }
    const auto& f = scan.fit;
    rep.converged = f.converged;
    for (const auto& r : scan.results) rep.converged = rep.converged && r.fit.converged;
    rep.fits = {fit_entry("full_width", 2.0 * f.half_width, 2.0 * f.half_width_ci, f.residual_rms, f.n_points),
                fit_entry("half_width", f.half_width, f.half_width_ci, f.residual_rms, f.n_points),
                fit_entry("center_detuning", f.center, f.center_ci, f.residual_rms, f.n_points),
                fit_entry("height", f.height, f.height_ci, f.residual_rms, f.n_points)};
    rep.checks["model_full_width"] = 2.0 * scan.gamma;
    rep.checks["width_ratio"] = f.half_width / scan.gamma;
    rep.provenance = provenance_json(rep.scenario, cfg, seed, resolved);
    rep.summary.push_back(strf("excitation-scan (%zu points, pulse %.3g/gamma)", grid.size(), st.pulse_duration));
    rep.summary.push_back(strf("  2gamma (|R0|^2 fit) = %.4f mHz  [%.4f, %.4f]   model %.4f mHz",
                                 2e3 * f.half_width, 2e3 * (f.half_width - f.half_width_ci),
                                 2e3 * (f.half_width + f.half_width_ci), 2e3 * scan.gamma));
    rep.summary.push_back(strf("  width ratio to model: %.4f", f.half_width / scan.gamma));
    return rep;
}

// --------------------------------------------------------------- transient

struct TransientSettings {
    double tilt = 0.1;
    double window = 2.0; // in 1/γ
    double prepulse_amplitude = 0.0;
    double prepulse_duration = 1.0; // in 1/γ
    long samples_per_period = 16;

    static TransientSettings from(const Config& cfg) {
        TransientSettings s;
        s.tilt = cfg.number_or("transient.tilt", s.tilt);
        s.window = cfg.number_or("transient.window", s.window);
        s.prepulse_amplitude = cfg.number_or("transient.prepulse_amplitude", s.prepulse_amplitude);
        s.prepulse_duration = cfg.number_or("transient.prepulse_duration", s.prepulse_duration);
        s.samples_per_period = cfg.integer_or("transient.samples_per_period", s.samples_per_period);
        if (s.tilt == 0.0) throw ConfigError("transient.tilt must be non-zero");
        if (!(s.prepulse_duration > 0.0)) throw ConfigError("transient.prepulse_duration must be positive");
        if (s.samples_per_period < 8) throw ConfigError("transient.samples_per_period must be at least 8");
        return s;
    }

    [[nodiscard]] TransientOptions options(double gamma) const {
        TransientOptions o;
        o.tilt = tilt;
        o.window = window / gamma;
        o.prepulse_amplitude = prepulse_amplitude;
        o.prepulse_duration = prepulse_duration / gamma;
        o.samples_per_period = static_cast<int>(samples_per_period);
        return o;
    }
};

inline ScenarioReport run_transient(const Config& cfg) {
    auto resolved = resolve_model(cfg);
    auto st = TransientSettings::from(cfg);
    auto seed = config_seed(cfg);
    const auto& m = resolved.model;
    double gamma = line_shape(m).half_width;
    auto res = magnetic_pulse_transient(m, st.options(gamma));

    ScenarioReport rep;
    rep.scenario = "transient";
    rep.columns = {"t", "R_x"};
    for (std::size_t k = 0; k < res.t.size(); ++k) rep.rows.push_back({res.t[k], res.rx[k]});
    const auto& f = res.fit;
    rep.converged = f.converged;
    rep.fits = {fit_entry("decay_rate", f.decay, f.decay_ci, f.residual_rms, f.n_points),
                fit_entry("full_width", 2.0 * f.decay, 2.0 * f.decay_ci, f.residual_rms, f.n_points),
                fit_entry("frequency", f.frequency, f.frequency_ci, f.residual_rms, f.n_points),
                fit_entry("amplitude", f.amplitude, f.amplitude_ci, f.residual_rms, f.n_points)};
    rep.warnings = resolved.warnings;
    for (const auto& w : f.warnings) rep.warnings.push_back(w);
    rep.checks["model_decay_rate"] = res.expected;
    rep.checks["decay_ratio"] = f.decay / res.expected;
    rep.provenance = provenance_json(rep.scenario, cfg, seed, resolved);
    rep.summary.push_back(strf("transient (window %.3g/gamma, %zu samples)", st.window, res.t.size()));
    rep.summary.push_back(strf("  decay rate = %.6g Hz  [%.6g, %.6g]   model gamma %.6g Hz", f.decay,
                                 f.decay - f.decay_ci, f.decay + f.decay_ci, res.expected));
    rep.summary.push_back(strf("  2gamma = %.4f mHz, precession at %.6f Hz", 2e3 * f.decay, f.frequency));
    return rep;
}

// -------------------------------------------------------------- field sweep

struct SweepSettings {
    std::vector<double> fields;
    double transient_window = 2.0; // in 1/γ
    double noise = 0.0;

    static SweepSettings from(const Config& cfg) {
        SweepSettings s;
        s.transient_window = cfg.number_or("sweep.transient_window", s.transient_window);
        s.noise = cfg.number_or("sweep.noise", s.noise);
        if (cfg.has("sweep.fields")) {
            s.fields = strictly_increasing(cfg.list("sweep.fields"), "sweep.fields");
        } else {
            double lo = cfg.number_or("sweep.field_min", 4.0), hi = cfg.number_or("sweep.field_max", 40.0);
            long n = cfg.integer_or("sweep.field_points", 12);
            if (!(lo > 0.0) || !(hi > lo) || n < 2) throw ConfigError("sweep field range is invalid");
            for (long i = 0; i < n; ++i)
                s.fields.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
            auto anchors = cfg.has("sweep.anchors") ? cfg.list("sweep.anchors") : std::vector<double>{6.1, 10.7};
            for (double a : anchors) s.fields.push_back(a);
            std::sort(s.fields.begin(), s.fields.end());
            std::vector<double> merged;
            for (double b : s.fields)
                if (merged.empty() || b - merged.back() > 1e-9 * b) merged.push_back(b);
            s.fields = merged;
        }
        if (s.fields.empty()) throw ConfigError("sweep needs at least one field");
        if (s.transient_window < 1.0) throw ConfigError("sweep.transient_window must be at least 1 (in 1/gamma)");
        return s;
    }
};

inline bool monotone_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

inline ScenarioReport run_field_sweep(const Config& cfg) {
    auto resolved = resolve_model(cfg);
    auto sw = SweepSettings::from(cfg);
    auto spec = SpectrumSettings::from(cfg);
    spec.path = "closed-form";
    spec.noise = sw.noise;
    auto tset = TransientSettings::from(cfg);
    tset.window = sw.transient_window;
    auto seed = config_seed(cfg);

    struct Row {
        ResolvedModel model;
        SpectrumAnalysis spectrum;
        TransientResult transient;
        LineShape line;
    };
    std::vector<Row> rows(sw.fields.size());
    for (std::size_t i = 0; i < sw.fields.size(); ++i) {
        rows[i].model = resolved.at_field(sw.fields[i]);
        if (!(rows[i].model.model.system.alkali_larmor > 0.0))
            throw ValidityError(strf("alkali Larmor frequency is not positive at B = %.6g mG", sw.fields[i]));
    }
    // spectra are cheap and parallel inside; transients fan out across fields
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].line = line_shape(rows[i].model.model);
        rows[i].spectrum = analyze_spectrum(rows[i].model.model, spec, seed, 100 + i);
    }
    parallel_for(rows.size(), [&](std::size_t i) {
        rows[i].transient = magnetic_pulse_transient(rows[i].model.model, tset.options(rows[i].line.half_width));
    });

    ScenarioReport rep;
    rep.scenario = "field-sweep";
    rep.columns = {"field", "omega_a", "omega_b", "full_width", "full_width_ci", "contrast", "contrast_ci",
                   "model_full_width", "model_contrast", "transient_full_width", "transient_full_width_ci",
                   "transient_ratio"};
    std::vector<double> widths, contrasts, ratios;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& f = r.spectrum.fit;
        const auto& s = r.model.model.system;
        double tw = 2.0 * r.transient.decay_rate;
        double ratio = r.transient.decay_rate / f.half_width;
        rep.rows.push_back({sw.fields[i], s.alkali_larmor, s.noble_larmor, 2.0 * f.half_width,
                            2.0 * f.half_width_ci, f.contrast, f.contrast_ci, 2.0 * r.line.half_width,
                            r.line.contrast, tw, 2.0 * r.transient.decay_ci, ratio});
        widths.push_back(2.0 * f.half_width);
        contrasts.push_back(f.contrast);
        ratios.push_back(ratio);

        FitGroup g;
        g.key = "field";
        g.value = sw.fields[i];
        g.converged = f.converged && !f.degenerate && r.transient.fit.converged;
        if (!f.degenerate) g.fits = line_fit_entries(f, r.spectrum.center_frequency);
        const auto& tf = r.transient.fit;
        g.fits.push_back(fit_entry("transient_decay_rate", tf.decay, tf.decay_ci, tf.residual_rms, tf.n_points));
        g.fits.push_back(
            fit_entry("transient_full_width", 2.0 * tf.decay, 2.0 * tf.decay_ci, tf.residual_rms, tf.n_points));
        rep.converged = rep.converged && g.converged;
        if (f.degenerate) rep.warnings.push_back(strf("B = %.6g mG: line fit degenerate", sw.fields[i]));
        for (const auto& w : r.model.warnings) rep.warnings.push_back(w);
        rep.groups.push_back(std::move(g));
    }
    double max_dev = 0.0;
    for (double r : ratios) max_dev = std::max(max_dev, std::abs(r - 1.0));
    rep.checks["full_width_monotone_decreasing"] = monotone_decreasing(widths);
    rep.checks["contrast_monotone_decreasing"] = monotone_decreasing(contrasts);
    rep.checks["max_transient_deviation"] = max_dev;
    rep.provenance = provenance_json(rep.scenario, cfg, seed, resolved);

    rep.summary.push_back(strf("field-sweep (%zu fields, %.3g-%.3g mG)", rows.size(), sw.fields.front(),
                                 sw.fields.back()));
    rep.summary.push_back("     B [mG]   2gamma [mHz]      C    transient 2gamma [mHz]");
    for (std::size_t i = 0; i < rows.size(); ++i)
        rep.summary.push_back(strf("  %9.4f   %10.4f   %8.4f   %10.4f", sw.fields[i], 1e3 * widths[i],
                                     contrasts[i], 2e3 * rows[i].transient.decay_rate));
    rep.summary.push_back(strf("  monotone decreasing: 2gamma %s, C %s; max transient deviation %.3g%%",
                                 monotone_decreasing(widths) ? "yes" : "no",
                                 monotone_decreasing(contrasts) ? "yes" : "no", 100.0 * max_dev));
    return rep;
}

// --------------------------------------------------------- alkali calibration

struct CalibrationSettings {
    std::vector<double> fields{4.0, 6.1, 8.0, 10.7, 14.0};
    double tilt = 1.0;
    double window = 5.0; // in 1/γ_a
    long samples_per_period = 16;
    double noise = 0.01;
    long min_samples = 200;

    static CalibrationSettings from(const Config& cfg) {
        CalibrationSettings s;
        if (cfg.has("calibration.fields"))
            s.fields = strictly_increasing(cfg.list("calibration.fields"), "calibration.fields");
        s.tilt = cfg.number_or("calibration.tilt", s.tilt);
        s.window = cfg.number_or("calibration.window", s.window);
        s.samples_per_period = cfg.integer_or("calibration.samples_per_period", s.samples_per_period);
        s.noise = cfg.number_or("calibration.noise", s.noise);
        s.min_samples = cfg.integer_or("calibration.min_samples", s.min_samples);
        if (s.fields.size() < 3) throw ConfigError("calibration needs at least 3 fields");
        if (s.tilt == 0.0) throw ConfigError("calibration.tilt must be non-zero");
        if (!(s.window > 0.0)) throw ConfigError("calibration.window must be positive");
        if (s.samples_per_period < 5) throw ConfigError("calibration.samples_per_period must be at least 5");
        if (s.noise < 0.0) throw ConfigError("calibration.noise must be non-negative");
        if (s.min_samples < 8) throw ConfigError("calibration.min_samples must be at least 8");
        return s;
    }
};

struct CalibrationResult {
    std::vector<double> fields;
    std::vector<DecayFit> fits;
    LinearFit line;
    double gamma_a = 0.0, gamma_a_ci = 0.0;
    bool converged = true;
};

/// Noiseless alkali precession after a tilt, with the exchange coupling
/// switched off (J = 0 branch).
inline SpinTrajectory alkali_precession(const ModelParams& m, double tilt, double window, double dt) {
    ModelParams bare = m;
    const auto& s = m.system;
    bare.system = SystemParams::make(s.alkali_larmor, s.noble_larmor, s.alkali_decoherence, s.noble_decoherence,
                                     0.0, 0.0);
    return integrate_bloch(bare, DriveWaveform::tilt(0.0, tilt, 0.0), SpinState{}, window, {{}, dt});
}

inline CalibrationResult calibrate(const ResolvedModel& resolved, const CalibrationSettings& st, std::uint64_t seed) {
    CalibrationResult c;
    c.fields = st.fields;
    c.fits.resize(st.fields.size());
    parallel_for(st.fields.size(), [&](std::size_t i) {
        auto r = resolved.at_field(st.fields[i]);
        const auto& s = r.model.system;
        if (!(s.alkali_larmor > 0.0))
            throw ValidityError(strf("alkali Larmor frequency is not positive at B = %.6g mG", st.fields[i]));
        double window = st.window / s.alkali_decoherence;
        double dt = 2.0 * std::numbers::pi / s.alkali_larmor / static_cast<double>(st.samples_per_period);
        dt = std::min(dt, window / static_cast<double>(st.min_samples - 1));
        auto tr = alkali_precession(r.model, st.tilt, window, dt);
        auto fx = tr.component(&SpinState::fx);
        if (st.noise > 0.0) {
            std::mt19937_64 rng(derive_seed(seed, 7, i));
            std::normal_distribution<double> g(0.0, st.noise);
            for (double& v : fx) v += g(rng);
        }
        DecayFitOptions fo;
        fo.t0 = 0.0;
        if (st.noise > 0.0) fo.sigma = st.noise;
        c.fits[i] = fit_decaying_sinusoid(tr.times, fx, fo);
    });
    std::vector<double> omega, sigma;
    double wsum = 0.0, gsum = 0.0;
    for (const auto& f : c.fits) {
        c.converged = c.converged && f.converged;
        omega.push_back(f.frequency);
        if (st.noise > 0.0) {
            sigma.push_back(f.frequency_ci / kZ95);
            double w = 1.0 / std::pow(f.decay_ci / kZ95, 2);
            wsum += w;
            gsum += w * f.decay;
        } else {
            wsum += 1.0;
            gsum += f.decay;
        }
    }
    c.line = fit_linear(c.fields, omega, sigma);
    c.gamma_a = gsum / wsum;
    if (st.noise > 0.0) {
        c.gamma_a_ci = kZ95 / std::sqrt(wsum);
    } else {
        double ss = 0.0;
        for (const auto& f : c.fits) ss += (f.decay - c.gamma_a) * (f.decay - c.gamma_a);
        double n = static_cast<double>(c.fits.size());
        c.gamma_a_ci = t95(n - 1.0) * std::sqrt(ss / (n - 1.0) / n);
    }
    return c;
}

inline ScenarioReport run_calibration(const Config& cfg) {
    auto resolved = resolve_model(cfg);
    auto st = CalibrationSettings::from(cfg);
    auto seed = config_seed(cfg);
    auto c = calibrate(resolved, st, seed);

    ScenarioReport rep;
    rep.scenario = "calibrate-alkali";
    rep.columns = {"field", "omega_a", "omega_a_ci", "gamma_a", "gamma_a_ci", "amplitude", "residual_rms"};
    for (std::size_t i = 0; i < c.fields.size(); ++i) {
        const auto& f = c.fits[i];
        rep.rows.push_back({c.fields[i], f.frequency, f.frequency_ci, f.decay, f.decay_ci, f.amplitude,
                            f.residual_rms});
        FitGroup g;
        g.key = "field";
        g.value = c.fields[i];
        g.converged = f.converged;
        g.fits = {fit_entry("alkali_larmor", f.frequency, f.frequency_ci, f.residual_rms, f.n_points),
                  fit_entry("alkali_decoherence", f.decay, f.decay_ci, f.residual_rms, f.n_points),
                  fit_entry("amplitude", f.amplitude, f.amplitude_ci, f.residual_rms, f.n_points)};
        for (const auto& w : f.warnings) rep.warnings.push_back(strf("B = %.6g mG: ", c.fields[i]) + w);
        rep.groups.push_back(std::move(g));
    }
    const auto& l = c.line;
    rep.converged = c.converged;
    rep.fits = {fit_entry("alkali_gyromagnetic", l.slope, l.slope_ci, l.residual_rms, l.n_points),
                fit_entry("noble_emf", l.x_intercept, l.x_intercept_ci, l.residual_rms, l.n_points),
                fit_entry("alkali_decoherence", c.gamma_a, c.gamma_a_ci, 0.0, c.fits.size())};
    if (!l.x_intercept_defined) rep.warnings.push_back("zero slope: field intercept undefined");
    rep.checks["truth_alkali_gyromagnetic"] = resolved.magnetic.alkali_gyromagnetic;
    rep.checks["truth_noble_emf"] = resolved.magnetic.noble_emf;
    rep.checks["truth_alkali_decoherence"] = resolved.model.system.alkali_decoherence;
    rep.provenance = provenance_json(rep.scenario, cfg, seed, resolved);
    rep.summary.push_back(strf("calibrate-alkali (%zu fields, noise %.3g)", c.fields.size(), st.noise));
    rep.summary.push_back(strf("  g_a     = %.6g Hz/mG  [%.6g, %.6g]", l.slope, l.slope - l.slope_ci,
                                 l.slope + l.slope_ci));
    rep.summary.push_back(strf("  B0_b    = %.6g mG  [%.6g, %.6g]", l.x_intercept, l.x_intercept - l.x_intercept_ci,
                                 l.x_intercept + l.x_intercept_ci));
    rep.summary.push_back(strf("  gamma_a = %.6g Hz  [%.6g, %.6g]", c.gamma_a, c.gamma_a - c.gamma_a_ci,
                                 c.gamma_a + c.gamma_a_ci));
    return rep;
}

/// Dispatch by scenario id.
inline ScenarioReport run_scenario(const std::string& id, const Config& cfg) {
    if (id == "spectrum-scan") return run_spectrum_scan(cfg);
    if (id == "excitation-scan") return run_excitation_scan(cfg);
    if (id == "field-sweep") return run_field_sweep(cfg);
    if (id == "transient") return run_transient(cfg);
    if (id == "calibrate-alkali") return run_calibration(cfg);
    throw ConfigError("unknown scenario '" + id + "'");
}

} // namespace spinlight
