#pragma once

// Flat "key = value" configuration with one level of [section] headers.
// Every accepted key is listed in known_keys(); anything else is rejected so
// that typos in presets fail loudly instead of silently using a default.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "spinlight/errors.hpp"

namespace spinlight {

inline const std::set<std::string, std::less<>>& known_keys() {
    static const std::set<std::string, std::less<>> keys = {
        // GasCell
        "cell.alkali_density", "cell.noble_density", "cell.alkali_polarization",
        "cell.noble_polarization", "cell.slowing_factor", "cell.exchange_coefficient",
        "cell.temperature", "cell.noble_pressure", "cell.pressure_temperature",
        "cell.cell_diameter",
        // OpticalParams
        "optics.beam_area", "optics.optical_detuning", "optics.optical_halfwidth",
        "optics.control_power", "optics.photon_energy", "optics.electron_radius",
        "optics.optical_depth", "optics.light_shift_rate", "optics.faraday_gain",
        "optics.scattering_rate",
        // MagneticConfig
        "magnetic.field", "magnetic.alkali_gyromagnetic", "magnetic.noble_gyromagnetic",
        "magnetic.alkali_emf", "magnetic.noble_emf",
        // SystemParams overrides
        "system.alkali_larmor", "system.noble_larmor", "system.alkali_decoherence",
        "system.noble_decoherence", "system.alkali_exchange_rate",
        "system.noble_exchange_rate", "system.coupling",
        // run
        "run.seed",
        // scenarios
        "spectrum.path", "spectrum.points", "spectrum.span", "spectrum.baseline_points",
        "spectrum.baseline_span", "spectrum.periods", "spectrum.samples_per_period",
        "spectrum.noise", "spectrum.settle",
        "excitation.points", "excitation.span", "excitation.pulse_duration",
        "excitation.readout_duration", "excitation.envelope", "excitation.ramp_time",
        "excitation.samples_per_period",
        "sweep.fields", "sweep.field_min", "sweep.field_max", "sweep.field_points",
        "sweep.anchors", "sweep.transient_window", "sweep.noise",
        "transient.tilt", "transient.window", "transient.prepulse_amplitude",
        "transient.prepulse_duration", "transient.samples_per_period",
        "calibration.fields", "calibration.tilt", "calibration.window",
        "calibration.samples_per_period", "calibration.noise", "calibration.min_samples",
    };
    return keys;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return value;
}

} // namespace detail

class Config {
public:
    Config() = default;

    static Config parse(std::string_view text, std::string_view origin = "<string>") {
        Config cfg;
        std::string section;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) {
                if (end == text.size()) break;
                continue;
            }
            auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no) + ": "; };
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
                section = std::string(detail::trim(line.substr(1, line.size() - 2)));
                if (section.empty()) throw ConfigError(where() + "empty section name");
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
            auto key = std::string(detail::trim(line.substr(0, eq)));
            auto value = std::string(detail::trim(line.substr(eq + 1)));
            if (section.empty()) throw ConfigError(where() + "key '" + key + "' outside a section");
            std::string full = section + "." + key;
            if (!known_keys().contains(full)) throw ConfigError(where() + "unknown key '" + full + "'");
            if (cfg.values_.contains(full)) throw ConfigError(where() + "duplicate key '" + full + "'");
            cfg.values_[full] = value;
            if (end == text.size()) break;
        }
        return cfg;
    }

    /// Loads an INI file, or a provenance JSON (detected by a leading '{')
    /// whose "config" object holds the flat key map.
    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        std::string text = buf.str();
        auto first = text.find_first_not_of(" \t\r\n");
        if (first != std::string::npos && text[first] == '{') return from_provenance(text, path.string());
        return parse(text, path.string());
    }

    static Config from_provenance(std::string_view text, std::string_view origin) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string(origin) + ": invalid JSON: " + e.what());
        }
        if (!doc.contains("config") || !doc["config"].is_object())
            throw ConfigError(std::string(origin) + ": provenance has no 'config' object");
        Config cfg;
        for (const auto& [key, value] : doc["config"].items()) {
            if (!value.is_string()) throw ConfigError(std::string(origin) + ": value of '" + key + "' must be a string");
            cfg.set(key, value.get<std::string>());
        }
        return cfg;
    }

    [[nodiscard]] bool has(std::string_view key) const { return values_.find(key) != values_.end(); }

    void set(const std::string& key, std::string value) {
        if (!known_keys().contains(key)) throw ConfigError("unknown key '" + key + "'");
        values_[key] = std::move(value);
    }

    void erase(std::string_view key) {
        if (auto it = values_.find(key); it != values_.end()) values_.erase(it);
    }

    [[nodiscard]] std::optional<double> number(std::string_view key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        auto v = detail::parse_double(it->second);
        if (!v) throw ConfigError("key '" + std::string(key) + "': '" + it->second + "' is not a number");
        return v;
    }

    [[nodiscard]] double number_or(std::string_view key, double fallback) const {
        return number(key).value_or(fallback);
    }

    [[nodiscard]] double require_number(std::string_view key) const {
        auto v = number(key);
        if (!v) throw ConfigError("missing required key '" + std::string(key) + "'");
        return *v;
    }

    [[nodiscard]] long integer_or(std::string_view key, long fallback) const {
        auto v = number(key);
        if (!v) return fallback;
        if (*v != static_cast<double>(static_cast<long>(*v)))
            throw ConfigError("key '" + std::string(key) + "' must be an integer");
        return static_cast<long>(*v);
    }

    [[nodiscard]] std::string string_or(std::string_view key, std::string fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    /// Comma-separated list of numbers; empty when the key is absent.
    [[nodiscard]] std::vector<double> list(std::string_view key) const {
        std::vector<double> out;
        auto it = values_.find(key);
        if (it == values_.end()) return out;
        std::string_view rest = it->second;
        while (true) {
            auto comma = rest.find(',');
            auto item = rest.substr(0, comma);
            auto v = detail::parse_double(item);
            if (!v) throw ConfigError("key '" + std::string(key) + "': '" + std::string(item) + "' is not a number");
            out.push_back(*v);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        return out;
    }

    [[nodiscard]] const std::map<std::string, std::string, std::less<>>& entries() const { return values_; }

    [[nodiscard]] std::string to_ini() const {
        std::string out;
        std::string current;
        for (const auto& [key, value] : values_) {
            auto dot = key.find('.');
            auto section = key.substr(0, dot);
            if (section != current) {
                if (!out.empty()) out += "\n";
                out += "[" + section + "]\n";
                current = section;
            }
            out += key.substr(dot + 1) + " = " + value + "\n";
        }
        return out;
    }

private:
    std::map<std::string, std::string, std::less<>> values_;
};

} // namespace spinlight
