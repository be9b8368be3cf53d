#pragma once

// Physical parameters of the alkali / noble-gas / light system and the
// derivation of model rates from cell, beam and field descriptions.
//
// Units: every rate or frequency is a plain number in the "Hz" convention
// (1 Hz = 2π rad/s); model time is the reciprocal of that unit. Rates that
// come out of microscopic formulas in s^-1 are divided by 2π on the way in.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "spinlight/config.hpp"
#include "spinlight/errors.hpp"

namespace spinlight {

namespace constants {
inline constexpr double boltzmann = 1.380649e-23;      // J/K
inline constexpr double torr = 133.322368421;           // Pa
inline constexpr double speed_of_light = 2.99792458e10; // cm/s
inline constexpr double electron_radius = 2.8179403262e-13; // cm
inline constexpr double helium3_gyromagnetic = 3.2434;  // Hz/mG
inline constexpr double two_pi = 2.0 * std::numbers::pi;
} // namespace constants

struct GasCell {
    double alkali_density = 0.0;       // cm^-3
    double noble_density = 0.0;        // cm^-3; 0 means "from the gas law"
    double alkali_polarization = 0.0;
    double noble_polarization = 0.0;
    double slowing_factor = 4.0;
    double exchange_coefficient = 0.0; // cm^3 s^-1
    double temperature = 0.0;          // K
    double noble_pressure = 0.0;       // Torr
    double pressure_temperature = 0.0; // K at which noble_pressure is quoted; 0 means temperature
    double cell_diameter = 0.0;        // cm
};

struct OpticalParams {
    double beam_area = 0.0;         // cm^2
    double optical_detuning = 0.0;  // Hz
    double optical_halfwidth = 0.0; // Hz
    double control_power = 0.0;     // W
    double photon_energy = 0.0;     // J
    double electron_radius = constants::electron_radius;
    double optical_depth = 0.0;

    std::optional<double> light_shift_override;
    std::optional<double> faraday_gain_override;
    std::optional<double> scattering_rate_override;

    // filled by derive_optics
    double light_shift_rate = 0.0; // ā
    double faraday_gain = 0.0;     // α
    double scattering_rate = 0.0;  // γ'_a = α ā / OD
};

struct MagneticConfig {
    double field = 0.0;              // mG
    double alkali_gyromagnetic = 0.0; // Hz/mG
    double noble_gyromagnetic = constants::helium3_gyromagnetic;
    double alkali_emf = 0.0;          // mG, felt by the noble gas
    double noble_emf = 0.0;           // mG, felt by the alkali
};

struct SystemParams {
    double alkali_larmor = 0.0;      // ω_a
    double noble_larmor = 0.0;       // ω_b
    double alkali_decoherence = 0.0; // γ_a
    double noble_decoherence = 0.0;  // γ_b
    double alkali_exchange = 0.0;    // J_a
    double noble_exchange = 0.0;     // J_b
    double coupling = 0.0;           // J = sqrt(J_a J_b)

    /// The only way the library builds a SystemParams; keeps J = sqrt(J_a J_b).
    static SystemParams make(double omega_a, double omega_b, double gamma_a, double gamma_b,
                             double j_a, double j_b) {
        if (gamma_a < 0.0 || gamma_b < 0.0) throw ConfigError("decoherence rates must be non-negative");
        if (j_a < 0.0 || j_b < 0.0) throw ConfigError("exchange rates must be non-negative");
        return {omega_a, omega_b, gamma_a, gamma_b, j_a, j_b, std::sqrt(j_a * j_b)};
    }
};

struct Detunings {
    double alkali = 0.0; // δ_a = ω - ω_a
    double noble = 0.0;  // δ_b = ω - ω_b
    double pulled = 0.0; // Δ = δ_b - J² δ_a / (δ_a² + γ_a²)
};

/// Everything the steady-state and time-domain models consume.
struct ModelParams {
    SystemParams system;
    OpticalParams optics;
    double alkali_polarization = 0.0;
};

struct LarmorFrequencies {
    double alkali = 0.0;
    double noble = 0.0;
};

struct ExchangeRates {
    double alkali = 0.0; // J_a
    double noble = 0.0;  // J_b
    double symmetric = 0.0;
};

inline void validate(const GasCell& cell) {
    if (!(cell.alkali_density > 0.0)) throw ConfigError("cell.alkali_density must be positive");
    if (cell.noble_density < 0.0) throw ConfigError("cell.noble_density must be positive");
    if (!(cell.temperature > 0.0)) throw ConfigError("cell.temperature must be positive");
    if (cell.noble_density == 0.0 && !(cell.noble_pressure > 0.0))
        throw ConfigError("cell.noble_pressure must be positive");
    if (cell.pressure_temperature < 0.0) throw ConfigError("cell.pressure_temperature must be positive");
    if (!(cell.cell_diameter > 0.0)) throw ConfigError("cell.cell_diameter must be positive");
    if (cell.alkali_polarization < 0.0 || cell.alkali_polarization > 1.0)
        throw ConfigError("cell.alkali_polarization must lie in [0, 1]");
    if (cell.noble_polarization < 0.0 || cell.noble_polarization > 1.0)
        throw ConfigError("cell.noble_polarization must lie in [0, 1]");
    // I = 3/2: q_a runs from 2I+1 = 4 (fully polarized) to 6 (unpolarized).
    if (cell.slowing_factor < 4.0 || cell.slowing_factor > 6.0)
        throw ConfigError("cell.slowing_factor must lie in [4, 6]");
    if (cell.exchange_coefficient < 0.0) throw ConfigError("cell.exchange_coefficient must be non-negative");
}

inline void validate(const MagneticConfig& mag) {
    if (!(mag.alkali_gyromagnetic > 0.0) || !(mag.noble_gyromagnetic > 0.0))
        throw ConfigError("gyromagnetic ratios must be positive");
    if (!(mag.alkali_gyromagnetic > mag.noble_gyromagnetic))
        throw ConfigError("alkali gyromagnetic ratio must exceed the noble-gas one");
}

/// Ideal-gas noble density unless the cell states it explicitly.
inline double noble_density(const GasCell& cell) {
    if (cell.noble_density > 0.0) return cell.noble_density;
    double t = cell.pressure_temperature > 0.0 ? cell.pressure_temperature : cell.temperature;
    double per_m3 = cell.noble_pressure * constants::torr / (constants::boltzmann * t);
    return per_m3 * 1e-6;
}

/// ω_a = g_a (B - B₀ᵇ), ω_b = g_b (B - B₀ᵃ). Signs are kept.
inline LarmorFrequencies derive_larmor(const MagneticConfig& mag) {
    return {mag.alkali_gyromagnetic * (mag.field - mag.noble_emf),
            mag.noble_gyromagnetic * (mag.field - mag.alkali_emf)};
}

/// J_a = q_a ζ n_b p_a / 2 and J_b = ζ n_a p_b / 2, converted from s^-1.
inline ExchangeRates derive_exchange_rates(const GasCell& cell) {
    double j_a = cell.slowing_factor * cell.exchange_coefficient * noble_density(cell) *
                 cell.alkali_polarization / 2.0 / constants::two_pi;
    double j_b = cell.exchange_coefficient * cell.alkali_density * cell.noble_polarization / 2.0 /
                 constants::two_pi;
    return {j_a, j_b, std::sqrt(j_a * j_b)};
}

/// Noble-gas polarization that makes sqrt(J_a J_b) equal `coupling`.
inline double noble_polarization_for_coupling(const GasCell& cell, double coupling) {
    GasCell unit = cell;
    unit.noble_polarization = 1.0;
    auto rates = derive_exchange_rates(unit);
    if (!(rates.alkali > 0.0) || !(rates.noble > 0.0))
        throw ConfigError("cannot invert the coupling: J_a or J_b per unit polarization vanishes");
    return coupling * coupling / (rates.alkali * rates.noble);
}

/// ā from the Faraday light-shift formula (dimensionless; δ_e enters in rad/s).
inline double microscopic_light_shift(const OpticalParams& opt, const GasCell& cell) {
    return 2.0 * opt.electron_radius * constants::speed_of_light /
           (3.0 * cell.slowing_factor * opt.beam_area * constants::two_pi * opt.optical_detuning);
}

/// α = d n_a ā A P_c / (4 ħω_e), converted from photons/s to the model unit.
inline double microscopic_faraday_gain(const OpticalParams& opt, const GasCell& cell, double light_shift) {
    return cell.cell_diameter * cell.alkali_density * light_shift * opt.beam_area * opt.control_power /
           (4.0 * opt.photon_energy) / constants::two_pi;
}

inline OpticalParams derive_optics(OpticalParams opt, const GasCell& cell) {
    if (!(opt.beam_area > 0.0)) throw ConfigError("optics.beam_area must be positive");
    if (opt.control_power < 0.0) throw ConfigError("optics.control_power must be non-negative");
    if (!(opt.photon_energy > 0.0)) throw ConfigError("optics.photon_energy must be positive");
    if (!(opt.optical_depth > 0.0)) throw ConfigError("optics.optical_depth must be positive");
    if (!(opt.optical_halfwidth > 0.0)) throw ConfigError("optics.optical_halfwidth must be positive");
    if (std::abs(opt.optical_detuning) < 10.0 * opt.optical_halfwidth)
        throw ValidityError("far-detuned light requires |optical_detuning| >= 10 optical_halfwidth");

    opt.light_shift_rate = opt.light_shift_override.value_or(microscopic_light_shift(opt, cell));
    if (opt.faraday_gain_override) {
        opt.faraday_gain = *opt.faraday_gain_override;
    } else if (opt.scattering_rate_override) {
        opt.faraday_gain = *opt.scattering_rate_override * opt.optical_depth / opt.light_shift_rate;
    } else {
        opt.faraday_gain = microscopic_faraday_gain(opt, cell, opt.light_shift_rate);
    }
    opt.scattering_rate = opt.faraday_gain * opt.light_shift_rate / opt.optical_depth;
    return opt;
}

inline Detunings compute_detunings(double omega, const SystemParams& sys) {
    Detunings d;
    d.alkali = omega - sys.alkali_larmor;
    d.noble = omega - sys.noble_larmor;
    double j2 = sys.coupling * sys.coupling;
    double den = d.alkali * d.alkali + sys.alkali_decoherence * sys.alkali_decoherence;
    d.pulled = den > 0.0 ? d.noble - j2 * d.alkali / den : d.noble;
    return d;
}

/// |ω_a - ω_b| ≥ ratio·γ_a, the regime in which the noble-gas line sits in
/// the far tail of the alkali resonance.
inline bool far_detuned(const SystemParams& sys, double ratio = 10.0) {
    return std::abs(sys.alkali_larmor - sys.noble_larmor) >= ratio * sys.alkali_decoherence;
}

/// Fully resolved parameter set plus the pieces it was derived from.
struct ResolvedModel {
    GasCell cell;
    OpticalParams optics;
    MagneticConfig magnetic;
    ModelParams model;
    double microscopic_faraday_gain = 0.0;
    bool larmor_from_field = true;
    bool noble_polarization_inverted = false;
    std::vector<std::string> warnings;

    /// Same model with the Larmor frequencies re-derived at field `b`.
    [[nodiscard]] ResolvedModel at_field(double b) const {
        if (!larmor_from_field)
            throw ConfigError("field-dependent runs need Larmor frequencies derived from [magnetic]");
        ResolvedModel out = *this;
        out.magnetic.field = b;
        auto larmor = derive_larmor(out.magnetic);
        const auto& s = model.system;
        out.model.system = SystemParams::make(larmor.alkali, larmor.noble, s.alkali_decoherence,
                                              s.noble_decoherence, s.alkali_exchange, s.noble_exchange);
        out.warnings.clear();
        if (!far_detuned(out.model.system))
            out.warnings.push_back("|omega_a - omega_b| < 10 gamma_a at B = " + std::to_string(b) + " mG");
        return out;
    }
};

inline ResolvedModel resolve_model(const Config& cfg) {
    ResolvedModel r;

    GasCell& cell = r.cell;
    cell.alkali_density = cfg.require_number("cell.alkali_density");
    cell.noble_density = cfg.number_or("cell.noble_density", 0.0);
    cell.alkali_polarization = cfg.require_number("cell.alkali_polarization");
    cell.slowing_factor = cfg.require_number("cell.slowing_factor");
    cell.exchange_coefficient = cfg.require_number("cell.exchange_coefficient");
    cell.temperature = cfg.require_number("cell.temperature");
    if (!cfg.has("cell.noble_density")) cell.noble_pressure = cfg.require_number("cell.noble_pressure");
    cell.pressure_temperature = cfg.number_or("cell.pressure_temperature", 0.0);
    cell.cell_diameter = cfg.require_number("cell.cell_diameter");
    cell.noble_polarization = cfg.number_or("cell.noble_polarization", 0.0);
    validate(cell);

    auto target_coupling = cfg.number("system.coupling");
    auto j_a_override = cfg.number("system.alkali_exchange_rate");
    auto j_b_override = cfg.number("system.noble_exchange_rate");
    if (target_coupling && j_b_override)
        throw ConfigError("system.coupling conflicts with an explicit system.noble_exchange_rate");
    if (target_coupling && cfg.has("cell.noble_polarization") && !j_a_override)
        throw ConfigError("system.coupling and cell.noble_polarization over-determine J_b");

    double j_a = j_a_override.value_or(derive_exchange_rates(cell).alkali);
    double j_b = 0.0;
    if (j_b_override) {
        j_b = *j_b_override;
    } else if (target_coupling) {
        if (*target_coupling < 0.0) throw ConfigError("system.coupling must be non-negative");
        if (j_a_override) {
            if (!(j_a > 0.0)) throw ConfigError("cannot reach system.coupling with J_a = 0");
            j_b = *target_coupling * *target_coupling / j_a;
        } else {
            cell.noble_polarization = noble_polarization_for_coupling(cell, *target_coupling);
            if (cell.noble_polarization > 1.0)
                throw ConfigError("system.coupling requires a noble-gas polarization above 1");
            r.noble_polarization_inverted = true;
            j_b = derive_exchange_rates(cell).noble;
        }
    } else {
        j_b = derive_exchange_rates(cell).noble;
    }

    OpticalParams& opt = r.optics;
    opt.beam_area = cfg.require_number("optics.beam_area");
    opt.optical_detuning = cfg.require_number("optics.optical_detuning");
    opt.optical_halfwidth = cfg.require_number("optics.optical_halfwidth");
    opt.control_power = cfg.require_number("optics.control_power");
    opt.photon_energy = cfg.require_number("optics.photon_energy");
    opt.electron_radius = cfg.number_or("optics.electron_radius", constants::electron_radius);
    opt.optical_depth = cfg.require_number("optics.optical_depth");
    opt.light_shift_override = cfg.number("optics.light_shift_rate");
    opt.faraday_gain_override = cfg.number("optics.faraday_gain");
    opt.scattering_rate_override = cfg.number("optics.scattering_rate");
    if (opt.faraday_gain_override && opt.scattering_rate_override)
        throw ConfigError("optics.faraday_gain and optics.scattering_rate are mutually exclusive");
    opt = derive_optics(opt, cell);
    r.microscopic_faraday_gain = microscopic_faraday_gain(opt, cell, microscopic_light_shift(opt, cell));

    auto omega_a = cfg.number("system.alkali_larmor");
    auto omega_b = cfg.number("system.noble_larmor");
    MagneticConfig& mag = r.magnetic;
    mag.noble_gyromagnetic = cfg.number_or("magnetic.noble_gyromagnetic", constants::helium3_gyromagnetic);
    if (omega_a && omega_b) {
        r.larmor_from_field = false;
        mag.field = cfg.number_or("magnetic.field", 0.0);
        mag.alkali_gyromagnetic = cfg.number_or("magnetic.alkali_gyromagnetic", 0.0);
        mag.alkali_emf = cfg.number_or("magnetic.alkali_emf", 0.0);
        mag.noble_emf = cfg.number_or("magnetic.noble_emf", 0.0);
    } else {
        if (omega_a || omega_b)
            throw ConfigError("system.alkali_larmor and system.noble_larmor must be overridden together");
        mag.field = cfg.require_number("magnetic.field");
        mag.alkali_gyromagnetic = cfg.require_number("magnetic.alkali_gyromagnetic");
        mag.alkali_emf = cfg.require_number("magnetic.alkali_emf");
        mag.noble_emf = cfg.require_number("magnetic.noble_emf");
        validate(mag);
        auto larmor = derive_larmor(mag);
        omega_a = larmor.alkali;
        omega_b = larmor.noble;
    }

    r.model.system = SystemParams::make(*omega_a, *omega_b, cfg.require_number("system.alkali_decoherence"),
                                        cfg.require_number("system.noble_decoherence"), j_a, j_b);
    r.model.optics = opt;
    r.model.alkali_polarization = cell.alkali_polarization;
    if (!far_detuned(r.model.system)) r.warnings.push_back("|omega_a - omega_b| < 10 gamma_a");
    return r;
}

} // namespace spinlight
