#pragma once

// Command-line front end. run_cli() is the whole program; main() only
// forwards to it so the dispatcher can be exercised in-process.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinlight/experiments.hpp"

namespace spinlight {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int fit = 2;
inline constexpr int validity = 3;
inline constexpr int internal = 4;
} // namespace exit_code

/// Exclusive lock on an output directory, held for the lifetime of the object.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir) : path_(dir / ".spinlight.lock") {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST)
                throw ConfigError("output directory '" + dir.string() + "' is locked by another run (" +
                                  path_.string() + ")");
            throw ConfigError("cannot create lockfile '" + path_.string() + "': " + std::strerror(errno));
        }
        auto pid = std::to_string(::getpid()) + "\n";
        if (::write(fd_, pid.data(), pid.size()) < 0) {
            // the pid is informational only
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

struct CliInvocation {
    std::string subcommand;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

inline const char* scenario_for(const std::string& subcommand) {
    if (subcommand == "spectrum") return "spectrum-scan";
    if (subcommand == "excite") return "excitation-scan";
    if (subcommand == "sweep-field") return "field-sweep";
    if (subcommand == "transient") return "transient";
    if (subcommand == "calibrate") return "calibrate-alkali";
    return nullptr;
}

inline void print_system(std::ostream& out, const ResolvedModel& r) {
    const auto& s = r.model.system;
    auto line = line_shape(r.model);
    out << strf("omega_a  = %.10g Hz\n", s.alkali_larmor) << strf("omega_b  = %.10g Hz\n", s.noble_larmor)
        << strf("gamma_a  = %.10g Hz\n", s.alkali_decoherence)
        << strf("gamma_b  = %.10g Hz\n", s.noble_decoherence) << strf("J_a      = %.10g Hz\n", s.alkali_exchange)
        << strf("J_b      = %.10g Hz\n", s.noble_exchange) << strf("J        = %.10g Hz\n", s.coupling)
        << strf("center   = %.10g Hz (pulling %.4g Hz)\n", line.center, line.center - s.noble_larmor)
        << strf("2gamma   = %.6g mHz\n", 2e3 * line.half_width)
        << strf("C0       = %.6g, C = %.6g\n", line.amplitude, line.contrast);
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

inline void print_derived(std::ostream& out, const ResolvedModel& r) {
    const auto& s = r.model.system;
    const auto& o = r.model.optics;
    out << strf("J_a       = %.10g Hz\n", s.alkali_exchange) << strf("J_b       = %.10g Hz\n", s.noble_exchange)
        << strf("J         = %.10g Hz\n", s.coupling)
        << strf("a         = %.10g (light-shift coupling, dimensionless)\n", o.light_shift_rate)
        << strf("alpha     = %.10g Hz (Faraday gain, model units)\n", o.faraday_gain)
        << strf("alpha_mic = %.10g Hz (from control power and density)\n", r.microscopic_faraday_gain)
        << strf("gamma'_a  = %.10g Hz (scattering rate)\n", o.scattering_rate)
        << strf("n_b       = %.10g cm^-3\n", noble_density(r.cell))
        << strf("p_b       = %.10g%s\n", r.cell.noble_polarization,
                r.noble_polarization_inverted ? " (inverted from J)" : "");
    for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

inline int dispatch(const CliInvocation& inv, std::ostream& out) {
    Config cfg = Config::load(inv.config_path);
    if (inv.seed) cfg.set("run.seed", std::to_string(*inv.seed));
    if (inv.subcommand == "check-config") {
        auto r = resolve_model(cfg);
        if (!inv.quiet) {
            out << "config ok: " << inv.config_path << "\n";
            print_system(out, r);
        }
        return exit_code::ok;
    }
    if (inv.subcommand == "derive-params") {
        print_derived(out, resolve_model(cfg));
        return exit_code::ok;
    }
    const char* scenario = scenario_for(inv.subcommand);
    if (!scenario) throw ConfigError("unknown subcommand '" + inv.subcommand + "'");
    OutputLock lock(inv.out_dir);
    auto rep = run_scenario(scenario, cfg);
    auto paths = rep.write(inv.out_dir);
    if (!inv.quiet) {
        for (const auto& l : rep.summary) out << l << "\n";
        for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
        for (const auto& p : paths) out << "wrote " << p.string() << "\n";
    }
    if (!rep.converged) throw FitError("not all fits converged (results written to " + inv.out_dir + ")");
    return exit_code::ok;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"spinlight: light coupled to noble-gas spins through an alkali vapor"};
    app.require_subcommand(1, 1);
    CliInvocation inv;
    std::uint64_t seed = 0;
    const std::pair<const char*, const char*> commands[] = {
        {"spectrum", "transmission spectrum and inverted-Lorentzian fit"},
        {"excite", "pulsed excitation scan with free-precession readout"},
        {"sweep-field", "line width, contrast and transient decay versus field"},
        {"transient", "noble-gas decay after a magnetic tilt"},
        {"calibrate", "alkali gyromagnetic ratio, offset field and decoherence"},
        {"check-config", "validate a configuration and print the system"},
        {"derive-params", "print exchange rates and optical couplings"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", inv.config_path, "configuration file (INI or provenance JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        if (scenario_for(name)) sub->add_option("--out", inv.out_dir, "output directory");
        sub->add_option("--seed", seed, "seed override");
        sub->add_flag("--quiet", inv.quiet, "suppress the summary");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n') c = ' ';
        err << "error: usage: " << msg << "\n";
        return exit_code::config;
    }
    for (auto* sub : app.get_subcommands()) {
        inv.subcommand = sub->get_name();
        if (sub->count("--seed")) inv.seed = seed;
    }
    auto fail = [&](const char* kind, const std::string& what, int code) {
        std::string msg = what;
        for (char& c : msg)
            if (c == '\n') c = ' ';
        err << "error: " << kind << ": " << msg << "\n";
        return code;
    };
    try {
        return dispatch(inv, out);
    } catch (const ConfigError& e) {
        return fail(e.kind(), e.what(), exit_code::config);
    } catch (const FitError& e) {
        return fail(e.kind(), e.what(), exit_code::fit);
    } catch (const Error& e) {
        return fail(e.kind(), e.what(), exit_code::validity);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), exit_code::internal);
    }
}

} // namespace spinlight
