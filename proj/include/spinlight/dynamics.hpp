#pragma once

// Time-domain Bloch equations for the transverse alkali (F) and noble-gas (R)
// spins, the exact harmonic steady state of the same linear system, and the
// two pulse protocols built on them.
//
//   dF/dt = (ω_a F − J_a R) × ẑ − γ_a F + ā p_a S3(t) ŷ
//   dR/dt = (ω_b R − J_b F) × ẑ − γ_b R
//
// A harmonic drive is S3(t) = env(t) Re[S3⁰ e^{-iωt}].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spinlight/core_model.hpp"
#include "spinlight/ode.hpp"
#include "spinlight/signal.hpp"
#include "spinlight/steady_state.hpp"

namespace spinlight {

struct SpinState {
    double fx = 0.0, fy = 0.0, rx = 0.0, ry = 0.0;

    [[nodiscard]] ode::State<4> array() const { return {fx, fy, rx, ry}; }
    static SpinState from(const ode::State<4>& y) { return {y[0], y[1], y[2], y[3]}; }
    [[nodiscard]] double f_norm() const { return std::hypot(fx, fy); }
    [[nodiscard]] double r_norm() const { return std::hypot(rx, ry); }
};

enum class DriveKind { off, harmonic, pulsed_harmonic, magnetic_tilt_pulse };
enum class Envelope { rectangular, raised_cosine };

struct DriveWaveform {
    DriveKind kind = DriveKind::off;
    complex amplitude{};        // S3⁰
    double frequency = 0.0;     // ω
    double pulse_start = 0.0;
    double pulse_duration = 0.0;
    Envelope envelope = Envelope::rectangular;
    double ramp_time = 0.0;
    // magnetic-tilt-pulse: instantaneous rotation about ŷ at pulse_start,
    // adding these transverse x components
    double alkali_tilt = 0.0;
    double noble_tilt = 0.0;

    static DriveWaveform off() { return {}; }

    static DriveWaveform harmonic(complex s3, double omega) {
        DriveWaveform d;
        d.kind = DriveKind::harmonic;
        d.amplitude = s3;
        d.frequency = omega;
        return d;
    }

    static DriveWaveform pulsed(complex s3, double omega, double start, double duration,
                                Envelope env = Envelope::rectangular, double ramp = 0.0) {
        DriveWaveform d = harmonic(s3, omega);
        d.kind = DriveKind::pulsed_harmonic;
        d.pulse_start = start;
        d.pulse_duration = duration;
        d.envelope = env;
        d.ramp_time = ramp;
        return d;
    }

    static DriveWaveform tilt(double at, double alkali, double noble) {
        DriveWaveform d;
        d.kind = DriveKind::magnetic_tilt_pulse;
        d.pulse_start = at;
        d.alkali_tilt = alkali;
        d.noble_tilt = noble;
        return d;
    }

    void validate() const {
        if (pulse_duration < 0.0) throw ConfigError("pulse duration must be non-negative");
        if ((kind == DriveKind::harmonic || kind == DriveKind::pulsed_harmonic) && !(frequency > 0.0))
            throw ConfigError("harmonic drives need a positive frequency");
        if (kind == DriveKind::pulsed_harmonic && envelope == Envelope::raised_cosine) {
            if (!(ramp_time > 0.0)) throw ConfigError("raised-cosine envelope needs a positive ramp time");
            if (2.0 * ramp_time > pulse_duration) throw ConfigError("ramp time exceeds half the pulse duration");
        }
    }

    [[nodiscard]] double envelope_at(double t) const {
        switch (kind) {
        case DriveKind::harmonic: return 1.0;
        case DriveKind::pulsed_harmonic: {
            double u = t - pulse_start;
            if (u < 0.0 || u >= pulse_duration) return 0.0;
            if (envelope == Envelope::rectangular) return 1.0;
            double edge = std::min(u, pulse_duration - u);
            if (edge >= ramp_time) return 1.0;
            return 0.5 * (1.0 - std::cos(std::numbers::pi * edge / ramp_time));
        }
        default: return 0.0;
        }
    }

    /// Envelope continued smoothly across the edges of the segment containing
    /// `inside`, so an integration segment never sees a jump at its ends.
    [[nodiscard]] double envelope_on_segment(double t, double inside) const {
        if (kind != DriveKind::pulsed_harmonic) return envelope_at(inside);
        if (envelope_at(inside) == 0.0) return 0.0;
        return envelope_at(std::clamp(t, pulse_start, std::nextafter(pulse_start + pulse_duration, pulse_start)));
    }

    /// S3(t) entering the alkali equation.
    [[nodiscard]] double s3(double t) const { return s3_with(t, envelope_at(t)); }

    [[nodiscard]] double s3_with(double t, double e) const {
        if (e == 0.0) return 0.0;
        double ph = frequency * t;
        return e * (amplitude.real() * std::cos(ph) + amplitude.imag() * std::sin(ph));
    }

    /// Times in (0, t_end) where the right-hand side is not smooth.
    [[nodiscard]] std::vector<double> breakpoints(double t_end) const {
        std::vector<double> b;
        if (kind == DriveKind::pulsed_harmonic) {
            double end = pulse_start + pulse_duration;
            b = {pulse_start, end};
            if (envelope == Envelope::raised_cosine) {
                b.push_back(pulse_start + ramp_time);
                b.push_back(end - ramp_time);
            }
        } else if (kind == DriveKind::magnetic_tilt_pulse) {
            b = {pulse_start};
        }
        std::vector<double> out;
        for (double v : b)
            if (v > 0.0 && v < t_end) out.push_back(v);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

struct IntegrationOptions {
    ode::StepPolicy step;
    double sample_interval = 0.0; // 0: t_end / 1000
};

struct TrajectoryMetadata {
    std::string integrator;
    double rtol = 0.0;
    double atol = 0.0;
    double fixed_step = 0.0;
    double sample_interval = 0.0;
    long accepted_steps = 0;
    long rejected_steps = 0;
    std::string parameters_hash;
};

struct SpinTrajectory {
    std::vector<double> times;
    std::vector<SpinState> states;
    TrajectoryMetadata metadata;

    [[nodiscard]] std::vector<double> component(double SpinState::*member) const {
        std::vector<double> out(states.size());
        for (std::size_t k = 0; k < states.size(); ++k) out[k] = states[k].*member;
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << "t,F_x,F_y,R_x,R_y\n";
        char buf[160];
        for (std::size_t k = 0; k < times.size(); ++k) {
            const auto& s = states[k];
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", times[k], s.fx, s.fy, s.rx, s.ry);
            os << buf;
        }
    }
};

/// FNV-1a over the %.17g rendering of every model parameter and the drive.
inline std::string parameters_hash(const ModelParams& m, const DriveWaveform& d) {
    const auto& s = m.system;
    double values[] = {s.alkali_larmor, s.noble_larmor, s.alkali_decoherence, s.noble_decoherence,
                       s.alkali_exchange, s.noble_exchange, m.optics.light_shift_rate, m.alkali_polarization,
                       static_cast<double>(d.kind), d.amplitude.real(), d.amplitude.imag(), d.frequency,
                       d.pulse_start, d.pulse_duration, static_cast<double>(d.envelope), d.ramp_time,
                       d.alkali_tilt, d.noble_tilt};
    std::uint64_t h = 1469598103934665603ULL;
    char buf[40];
    for (double v : values) {
        int len = std::snprintf(buf, sizeof buf, "%.17g;", v);
        for (int i = 0; i < len; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Right-hand side of the Bloch equations.
struct BlochRhs {
    SystemParams sys;
    double drive_gain = 0.0; // ā p_a
    const DriveWaveform* drive = nullptr;
    double segment_mid = std::numeric_limits<double>::quiet_NaN(); // set while integrating a smooth segment

    ode::State<4> operator()(double t, const ode::State<4>& y) const {
        double s3 = 0.0;
        if (drive)
            s3 = std::isnan(segment_mid) ? drive->s3(t) : drive->s3_with(t, drive->envelope_on_segment(t, segment_mid));
        const auto& s = sys;
        return {s.alkali_larmor * y[1] - s.alkali_exchange * y[3] - s.alkali_decoherence * y[0],
                -s.alkali_larmor * y[0] + s.alkali_exchange * y[2] - s.alkali_decoherence * y[1] + drive_gain * s3,
                s.noble_larmor * y[3] - s.noble_exchange * y[1] - s.noble_decoherence * y[2],
                -s.noble_larmor * y[2] + s.noble_exchange * y[0] - s.noble_decoherence * y[3]};
    }
};

/// Integrates from t = 0 to t_end and samples on the uniform grid k·dt.
/// Pulse edges split the integration; tilt kicks are applied at pulse_start.
inline SpinTrajectory integrate_bloch(const ModelParams& m, const DriveWaveform& drive, const SpinState& initial,
                                      double t_end, const IntegrationOptions& opt = {}) {
    if (!(t_end > 0.0)) throw ConfigError("integration end time must be positive");
    drive.validate();
    double dt = opt.sample_interval > 0.0 ? opt.sample_interval : t_end / 1000.0;
    double gain = m.optics.light_shift_rate * m.alkali_polarization;

    // The equations are linear and homogeneous in (state, drive), so they are
    // solved in units of a characteristic amplitude; tolerances then keep
    // their meaning for any drive strength.
    const auto& sys = m.system;
    double unit = std::max({std::abs(initial.fx), std::abs(initial.fy), std::abs(initial.rx),
                            std::abs(initial.ry), std::abs(drive.alkali_tilt), std::abs(drive.noble_tilt)});
    double rate = std::hypot(sys.alkali_decoherence, sys.alkali_larmor);
    if (rate > 0.0) unit = std::max(unit, std::abs(gain) * std::abs(drive.amplitude) / rate);
    if (!(unit > 0.0) || !std::isfinite(unit)) unit = 1.0;
    BlochRhs rhs{m.system, gain / unit, &drive};

    SpinTrajectory traj;
    auto& md = traj.metadata;
    md.integrator = opt.step.method == ode::Method::rk4 ? "rk4" : "dopri5";
    md.rtol = opt.step.rtol;
    md.atol = opt.step.atol;
    md.fixed_step = opt.step.fixed_step;
    md.sample_interval = dt;
    md.parameters_hash = parameters_hash(m, drive);
    auto n_samples = static_cast<std::size_t>(std::floor(t_end / dt * (1.0 + 1e-12))) + 1;
    traj.times.reserve(n_samples);
    traj.states.reserve(n_samples);

    auto kick = [&](ode::State<4>& y, double t) {
        if (drive.kind == DriveKind::magnetic_tilt_pulse && t == drive.pulse_start) {
            y[0] += drive.alkali_tilt / unit;
            y[2] += drive.noble_tilt / unit;
        }
    };

    std::vector<double> edges{0.0};
    for (double b : drive.breakpoints(t_end)) edges.push_back(b);
    edges.push_back(t_end);

    ode::State<4> y = initial.array();
    for (double& v : y) v /= unit;
    kick(y, 0.0);
    std::size_t k = 0;
    auto grid = [&](std::size_t i) { return static_cast<double>(i) * dt; };
    auto emit = [&](double t, const ode::State<4>& s) {
        traj.times.push_back(t);
        traj.states.push_back({unit * s[0], unit * s[1], unit * s[2], unit * s[3]});
    };
    emit(0.0, y);
    k = 1;
    const double slack = 1e-9 * dt;
    ode::Stats stats;

    for (std::size_t seg = 0; seg + 1 < edges.size(); ++seg) {
        double a = edges[seg], b = edges[seg + 1];
        if (seg > 0) kick(y, a);
        rhs.segment_mid = 0.5 * (a + b);
        if (opt.step.method == ode::Method::rk4) {
            double h = opt.step.fixed_step > 0.0 ? opt.step.fixed_step : dt;
            double t = a;
            while (k < n_samples && grid(k) <= b + slack) {
                double tk = std::min(grid(k), b);
                y = ode::rk4<4>(rhs, y, t, tk, h);
                t = tk;
                emit(grid(k), y);
                ++k;
            }
            if (t < b) y = ode::rk4<4>(rhs, y, t, b, h);
        } else {
            auto on_step = [&](const ode::DenseSegment<4>& s) {
                double end = s.t0 + s.h;
                while (k < n_samples && grid(k) <= end + slack && grid(k) <= b + slack) {
                    emit(grid(k), s(std::min(grid(k), end)));
                    ++k;
                }
            };
            y = ode::dopri5<4>(rhs, y, a, b, opt.step, on_step, &stats);
        }
    }
    md.accepted_steps = stats.accepted;
    md.rejected_steps = stats.rejected;
    return traj;
}

// ------------------------------------------------------- exact linear response

struct LinearResponse {
    complex f_plus, f_minus; // co- and counter-rotating amplitudes of F_x + iF_y
    complex r_plus, r_minus;
    std::array<complex, 4> phasors{}; // (F_x, F_y, R_x, R_y) as Re[X e^{-iωt}]

    [[nodiscard]] SpinState at(double t, double omega) const {
        complex e = std::exp(complex{0.0, -omega * t});
        return {(phasors[0] * e).real(), (phasors[1] * e).real(), (phasors[2] * e).real(), (phasors[3] * e).real()};
    }
};

/// Real 4×4 system matrix of the Bloch equations.
inline Eigen::Matrix4d bloch_matrix(const SystemParams& s) {
    Eigen::Matrix4d a;
    a << -s.alkali_decoherence, s.alkali_larmor, 0.0, -s.alkali_exchange,
        -s.alkali_larmor, -s.alkali_decoherence, s.alkali_exchange, 0.0,
        0.0, -s.noble_exchange, -s.noble_decoherence, s.noble_larmor,
        s.noble_exchange, 0.0, -s.noble_larmor, -s.noble_decoherence;
    return a;
}

/// Exact harmonic steady state without the rotating-wave approximation:
/// solves (−iω − A) X = b S3⁰ and splits X into ±ω rotating amplitudes.
inline LinearResponse exact_linear_response(const ModelParams& m, double omega, complex s3) {
    Eigen::Matrix4cd lhs = -bloch_matrix(m.system).cast<complex>();
    lhs.diagonal().array() += complex{0.0, -omega};
    Eigen::Vector4cd rhs = Eigen::Vector4cd::Zero();
    rhs(1) = m.optics.light_shift_rate * m.alkali_polarization * s3;
    Eigen::FullPivLU<Eigen::Matrix4cd> lu(lhs);
    if (!lu.isInvertible() || !(lu.rcond() > 1e-14))
        throw SingularSystemError("exact_linear_response: system matrix is singular at this frequency");
    Eigen::Vector4cd x = lu.solve(rhs);
    LinearResponse r;
    for (int i = 0; i < 4; ++i) r.phasors[static_cast<std::size_t>(i)] = x(i);
    r.f_plus = 0.5 * (x(0) + kI * x(1));
    r.f_minus = 0.5 * std::conj(x(0) - kI * x(1));
    r.r_plus = 0.5 * (x(2) + kI * x(3));
    r.r_minus = 0.5 * std::conj(x(2) - kI * x(3));
    return r;
}

/// Co-rotating amplitudes recovered from sampled F and R components.
struct DemodulatedResponse {
    complex f_plus, r_plus;
    HarmonicFit fx, fy, rx, ry;
};

inline DemodulatedResponse demodulate_trajectory(const std::vector<double>& t, const std::vector<double>& fx,
                                                 const std::vector<double>& fy, const std::vector<double>& rx,
                                                 const std::vector<double>& ry, double omega) {
    DemodulatedResponse d;
    d.fx = heterodyne_extract(t, fx, omega);
    d.fy = heterodyne_extract(t, fy, omega);
    d.rx = heterodyne_extract(t, rx, omega);
    d.ry = heterodyne_extract(t, ry, omega);
    d.f_plus = 0.5 * (d.fx.phasor + kI * d.fy.phasor);
    d.r_plus = 0.5 * (d.rx.phasor + kI * d.ry.phasor);
    return d;
}

/// Integrates under a continuous drive S3⁰ for `settle`, then demodulates
/// the following `periods` drive periods sampled `spp` times per period.
inline DemodulatedResponse driven_steady_state(const ModelParams& m, double omega, complex s3, double settle,
                                               double periods, int spp, const ode::StepPolicy& step = {}) {
    if (!(omega > 0.0)) throw ConfigError("drive frequency must be positive");
    double period = 2.0 * std::numbers::pi / omega;
    double window = std::ceil(periods) * period;
    double dt = period / static_cast<double>(spp);
    double t_end = settle + window;
    auto tr = integrate_bloch(m, DriveWaveform::harmonic(s3, omega), SpinState{}, t_end, {step, dt});
    std::vector<double> t, fx, fy, rx, ry;
    double t_start = t_end - window;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        if (tr.times[k] < t_start - 1e-9 * dt) continue;
        t.push_back(tr.times[k]);
        fx.push_back(tr.states[k].fx);
        fy.push_back(tr.states[k].fy);
        rx.push_back(tr.states[k].rx);
        ry.push_back(tr.states[k].ry);
    }
    return demodulate_trajectory(t, fx, fy, rx, ry, omega);
}

// ------------------------------------------------------- excite and read out

struct ExcitationOptions {
    complex amplitude{1.0, 0.0};   // S3⁰
    double pulse_duration = 0.0;   // 0: 3/γ
    double readout_duration = 0.0; // 0: 1/γ
    Envelope envelope = Envelope::rectangular;
    double ramp_time = 0.0;        // 0 with raised cosine: 1/γ_a
    int samples_per_period = 32;   // of the noble-gas precession
    ode::StepPolicy step;
};

struct ExcitationResult {
    double omega = 0.0;
    double delta = 0.0;              // Δ(ω)
    double readout_amplitude = 0.0;  // fitted F_x amplitude at drive-off
    double r_perp = 0.0;             // R₀⊥ = readout amplitude / readout gain
    double gain = 0.0;
    double growth = 0.0;             // relative |R| change over the last 10% of the pulse
    bool steady = true;
    DecayFit fit;
    std::vector<double> t;           // readout trace
    std::vector<double> fx;
    std::vector<std::string> warnings;
};

/// Drives at ω for T (default 3/γ), switches the drive off with the coupling
/// still active, and fits the F_x precession during the readout window.
inline ExcitationResult excite_and_readout(const ModelParams& m, double omega, const ExcitationOptions& o = {}) {
    const auto& s = m.system;
    double center = line_center(s);
    double gamma = hybrid_linewidth(s, center - s.alkali_larmor);
    double pulse = o.pulse_duration > 0.0 ? o.pulse_duration : 3.0 / gamma;
    double readout = o.readout_duration > 0.0 ? o.readout_duration : 1.0 / gamma;
    if (pulse * gamma < 3.0 * (1.0 - 1e-12))
        throw ValidityError("excitation pulse must last at least 3/gamma to reach the steady state");
    if (!(std::abs(s.noble_larmor) > 0.0)) throw ValidityError("readout needs a non-zero noble-gas Larmor frequency");

    ExcitationResult res;
    res.omega = omega;
    res.delta = compute_detunings(omega, s).pulled;

    double ramp = o.ramp_time > 0.0 ? o.ramp_time : 1.0 / s.alkali_decoherence;
    DriveWaveform drive = o.envelope == Envelope::rectangular
                              ? DriveWaveform::pulsed(o.amplitude, omega, 0.0, pulse)
                              : DriveWaveform::pulsed(o.amplitude, omega, 0.0, pulse, Envelope::raised_cosine, ramp);
    // pulse phase: coarse samples only, enough for the steady-state check
    IntegrationOptions pulse_opt{o.step, pulse / 100.0};
    auto during = integrate_bloch(m, drive, SpinState{}, pulse, pulse_opt);
    SpinState end_state = during.states.back();
    double r_end = end_state.r_norm();
    double r_before = during.states[during.states.size() - 11].r_norm();
    res.growth = r_end > 0.0 ? std::abs(r_end - r_before) / r_end : 0.0;
    if (res.growth > 0.05) {
        res.steady = false;
        res.warnings.push_back("steady state not reached: |R| changed by " + std::to_string(100.0 * res.growth) +
                               "% over the last 10% of the pulse");
    }

    double period = 2.0 * std::numbers::pi / std::abs(s.noble_larmor);
    IntegrationOptions read_opt{o.step, period / o.samples_per_period};
    auto after = integrate_bloch(m, DriveWaveform::off(), end_state, readout, read_opt);
    // skip the fast alkali transient at drive-off
    double skip = std::min(20.0 / s.alkali_decoherence, 0.1 * readout);
    for (std::size_t k = 0; k < after.times.size(); ++k) {
        if (after.times[k] < skip) continue;
        res.t.push_back(pulse + after.times[k]);
        res.fx.push_back(after.states[k].fx);
    }
    DecayFitOptions fo;
    fo.t0 = pulse;
    res.fit = fit_decaying_sinusoid(res.t, res.fx, fo);
    for (const auto& w : res.fit.warnings) res.warnings.push_back(w);
    res.gain = fx_readout_gain(s).gain;
    if (!(res.gain > 0.0)) throw ValidityError("readout gain vanishes (J_a = 0): R cannot be read out through F_x");
    res.readout_amplitude = res.fit.amplitude;
    res.r_perp = res.fit.amplitude / res.gain;
    return res;
}

// ------------------------------------------------------ magnetic-pulse transient

struct TransientOptions {
    double tilt = 0.1;               // noble-gas transverse kick
    double window = 0.0;             // observation window; 0: 2/γ
    double prepulse_amplitude = 0.0; // S3⁰ of a preceding signal pulse
    double prepulse_duration = 0.0;  // 0: 1/γ
    int samples_per_period = 16;
    std::optional<double> noise;     // known detector noise, for CI weighting only
    ode::StepPolicy step;
};

struct TransientResult {
    double decay_rate = 0.0;
    double decay_ci = 0.0;
    double frequency = 0.0;
    double expected = 0.0; // hybrid linewidth γ
    DecayFit fit;
    std::vector<double> t;
    std::vector<double> rx;
};

/// Optional signal pre-pulse at the line center, then a tilt of the noble
/// gas; fits the decaying R_x precession over the observation window.
inline TransientResult magnetic_pulse_transient(const ModelParams& m, const TransientOptions& o = {}) {
    const auto& s = m.system;
    double center = line_center(s);
    double gamma = hybrid_linewidth(s, center - s.alkali_larmor);
    double window = o.window > 0.0 ? o.window : 2.0 / gamma;
    if (window * gamma < 1.0 - 1e-12)
        throw FitError("transient window is shorter than 1/gamma: decay rate is not identifiable");
    if (!(std::abs(s.noble_larmor) > 0.0)) throw ValidityError("transient needs a non-zero noble-gas Larmor frequency");

    SpinState start{};
    if (o.prepulse_amplitude != 0.0) {
        double pre = o.prepulse_duration > 0.0 ? o.prepulse_duration : 1.0 / gamma;
        auto drive = DriveWaveform::pulsed({o.prepulse_amplitude, 0.0}, center, 0.0, pre);
        auto tr = integrate_bloch(m, drive, SpinState{}, pre, {o.step, pre / 10.0});
        start = tr.states.back();
    }
    double period = 2.0 * std::numbers::pi / std::abs(s.noble_larmor);
    auto tilt = DriveWaveform::tilt(0.0, 0.0, o.tilt);
    auto tr = integrate_bloch(m, tilt, start, window, {o.step, period / o.samples_per_period});

    TransientResult res;
    res.expected = gamma;
    res.t = tr.times;
    res.rx = tr.component(&SpinState::rx);
    DecayFitOptions fo;
    fo.t0 = 0.0;
    fo.sigma = o.noise;
    res.fit = fit_decaying_sinusoid(res.t, res.rx, fo);
    res.decay_rate = res.fit.decay;
    res.decay_ci = res.fit.decay_ci;
    res.frequency = res.fit.frequency;
    return res;
}

} // namespace spinlight
