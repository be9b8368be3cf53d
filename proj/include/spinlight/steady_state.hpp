#pragma once

// Rotating-wave steady state of the driven two-spin system and the
// closed-form optical response of the S2 quadrature.
//
// Phasor convention (shared with dynamics and signal): a real signal is
// S(t) = Re[S e^{-iωt}]. A real drive S3(t) therefore carries a co-rotating
// spectral amplitude S3/2; that co-rotating amplitude is what enters
// alkali_coherence and noble_coherence.

#include <cmath>
#include <complex>
#include <limits>

#include "spinlight/core_model.hpp"

namespace spinlight {

using complex = std::complex<double>;

inline constexpr complex kI{0.0, 1.0};

/// Reported phases are the phase advance of S2out(t) relative to S2in(t),
/// i.e. kPhaseSign * arg(S2out / S2in) for e^{-iωt} phasors.
inline constexpr double kPhaseSign = -1.0;

/// Co-rotating amplitude carried by the real signal Re[phasor e^{-iωt}].
inline complex corotating(complex phasor) { return 0.5 * phasor; }

/// γ = γ_b + J² γ_a / (δ_a² + γ_a²).
inline double hybrid_linewidth(const SystemParams& sys, double delta_a) {
    double ga = sys.alkali_decoherence;
    double den = delta_a * delta_a + ga * ga;
    if (!(den > 0.0)) throw ValidityError("hybrid linewidth undefined for gamma_a = 0 and delta_a = 0");
    return sys.noble_decoherence + sys.coupling * sys.coupling * ga / den;
}

/// F̃ = i ā p_a S3 / (γ_a − iδ_a + J² / (γ_b − iδ_b)).
inline complex alkali_coherence(complex s3, double omega, const ModelParams& m) {
    const auto& s = m.system;
    auto d = compute_detunings(omega, s);
    complex noble_den{s.noble_decoherence, -d.noble};
    complex den = complex{s.alkali_decoherence, -d.alkali} + s.coupling * s.coupling / noble_den;
    return kI * m.optics.light_shift_rate * m.alkali_polarization * s3 / den;
}

/// R̃ = −J_b ā p_a S3 / ((γ_a − iδ_a)(γ − iΔ)), the steady state of the
/// noble-gas equation driven by F̃ (R̃ = i J_b F̃ / (γ_b − iδ_b)).
inline complex noble_coherence(complex s3, double omega, const ModelParams& m) {
    const auto& s = m.system;
    auto d = compute_detunings(omega, s);
    double gamma = hybrid_linewidth(s, d.alkali);
    complex alkali_den{s.alkali_decoherence, -d.alkali};
    complex line_den{gamma, -d.pulled};
    return -s.noble_exchange * m.optics.light_shift_rate * m.alkali_polarization * s3 /
           (alkali_den * line_den);
}

struct LineShape {
    double center = 0.0;     // ω at which Δ = 0
    double half_width = 0.0; // γ
    double amplitude = 0.0;  // C0
    double contrast = 0.0;   // C = C0 (2 - C0)
};

/// C = C0 (2 − C0).
inline double contrast_from_amplitude(double c0) { return c0 * (2.0 - c0); }

/// Inverse of contrast_from_amplitude on [0, 1].
inline double amplitude_from_contrast(double c) { return 1.0 - std::sqrt(1.0 - c); }

/// C0 = (p_a OD / 2)(γ'_a / γ_a)((γ − γ_b) / γ).
inline double lorentzian_amplitude(const ModelParams& m, double gamma) {
    const auto& s = m.system;
    return 0.5 * m.alkali_polarization * m.optics.optical_depth * m.optics.scattering_rate /
           s.alkali_decoherence * (gamma - s.noble_decoherence) / gamma;
}

/// Solves Δ(ω) = 0 by Newton iteration from the bare noble-gas resonance.
inline double line_center(const SystemParams& sys) {
    double omega = sys.noble_larmor;
    double j2 = sys.coupling * sys.coupling;
    double ga2 = sys.alkali_decoherence * sys.alkali_decoherence;
    for (int it = 0; it < 100; ++it) {
        auto d = compute_detunings(omega, sys);
        double den = d.alkali * d.alkali + ga2;
        double slope = den > 0.0 ? 1.0 - j2 * (ga2 - d.alkali * d.alkali) / (den * den) : 1.0;
        double step = d.pulled / slope;
        omega -= step;
        if (std::abs(step) <= 1e-15 * (std::abs(omega) + 1e-300)) break;
    }
    return omega;
}

/// Drive frequency ω at which the pulled detuning Δ(ω) equals `target`.
inline double frequency_for_detuning(const SystemParams& sys, double target) {
    double omega = line_center(sys) + target;
    double j2 = sys.coupling * sys.coupling;
    double ga2 = sys.alkali_decoherence * sys.alkali_decoherence;
    for (int it = 0; it < 100; ++it) {
        auto d = compute_detunings(omega, sys);
        double den = d.alkali * d.alkali + ga2;
        double slope = den > 0.0 ? 1.0 - j2 * (ga2 - d.alkali * d.alkali) / (den * den) : 1.0;
        double step = (d.pulled - target) / slope;
        omega -= step;
        if (std::abs(step) <= 1e-15 * (std::abs(omega) + 1e-300)) break;
    }
    return omega;
}

inline LineShape line_shape(const ModelParams& m, double delta_a) {
    LineShape l;
    l.center = line_center(m.system);
    l.half_width = hybrid_linewidth(m.system, delta_a);
    if (!(l.half_width > 0.0)) throw ValidityError("line shape needs a positive linewidth");
    l.amplitude = lorentzian_amplitude(m, l.half_width);
    l.contrast = contrast_from_amplitude(l.amplitude);
    return l;
}

/// Line shape with δ_a taken at the line center.
inline LineShape line_shape(const ModelParams& m) {
    double center = line_center(m.system);
    return line_shape(m, center - m.system.alkali_larmor);
}

/// φ = atan(C0 γ Δ / (Δ² + γ²(1 − C0))), with φ = 0 at the removable
/// singularity C0 = 1, Δ = 0.
inline double phase_shift(double delta, const LineShape& line) {
    double g = line.half_width;
    double num = line.amplitude * g * delta;
    double den = delta * delta + g * g * (1.0 - line.amplitude);
    if (num == 0.0) return 0.0;
    // atan2 keeps the branch continuous when C0 > 1 makes den negative.
    return std::atan2(num, den);
}

enum class ResponseBranch { closed_form, general };

struct S2Response {
    complex s2_out;
    complex s3_out;
    ResponseBranch branch = ResponseBranch::closed_form;
    complex closed_form; // S2in (1 − C0 γ / (γ − iΔ))
    complex general;     // S2in + α F̃
    double branch_difference = 0.0; // |closed_form − general| / |S2in|
};

/// Output Stokes components for an input S2 phasor entering the cell with
/// E₋ = 0 (so S3in = i S2in). The closed form is used when |δ_a| ≥ 10 γ_a.
inline S2Response s2_response(complex s2_in, double omega, const ModelParams& m) {
    const auto& s = m.system;
    auto d = compute_detunings(omega, s);
    S2Response r;
    complex s3_in = kI * s2_in;
    r.s3_out = s3_in;

    r.general = s2_in + m.optics.faraday_gain * alkali_coherence(corotating(s3_in), omega, m);

    double gamma = hybrid_linewidth(s, d.alkali);
    double c0 = lorentzian_amplitude(m, gamma);
    r.closed_form = s2_in * (1.0 - c0 * gamma / complex{gamma, -d.pulled});

    double scale = std::abs(s2_in);
    r.branch_difference = scale > 0.0 ? std::abs(r.closed_form - r.general) / scale : 0.0;
    bool far = std::abs(d.alkali) >= 10.0 * s.alkali_decoherence;
    r.branch = far ? ResponseBranch::closed_form : ResponseBranch::general;
    r.s2_out = far ? r.closed_form : r.general;
    return r;
}

struct ReadoutGain {
    double gain = 0.0; // F_x / R_perp
    double psi = 0.0;  // projection angle of the noble-gas readout
};

/// F_x = J_a / sqrt((ω_a − ω_b)² + γ_a²) R_perp, sin ψ = γ_a / sqrt(...).
inline ReadoutGain fx_readout_gain(const SystemParams& sys) {
    double dw = sys.alkali_larmor - sys.noble_larmor;
    double norm = std::hypot(dw, sys.alkali_decoherence);
    if (!(norm > 0.0)) throw ValidityError("readout gain undefined for omega_a = omega_b and gamma_a = 0");
    return {sys.alkali_exchange / norm, std::asin(sys.alkali_decoherence / norm)};
}

} // namespace spinlight
