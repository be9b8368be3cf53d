#pragma once

#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spinlight/config.hpp"

namespace testing_support {

inline spinlight::Config preset() { return spinlight::Config::load(SPINLIGHT_PRESET); }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("spinlight_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Independent restatements of the model formulas, written directly from the
// physics rather than through the library helpers.
namespace oracle {

using cd = std::complex<double>;

struct Sys {
    double wa, wb, ga, gb, ja, jb;
    double j2() const { return ja * jb; }
};

inline double pulled(const Sys& s, double w) {
    double da = w - s.wa;
    return (w - s.wb) - s.j2() * da / (da * da + s.ga * s.ga);
}

inline double gamma(const Sys& s, double w) {
    double da = w - s.wa;
    return s.gb + s.j2() * s.ga / (da * da + s.ga * s.ga);
}

// Steady state of the co-rotating equations
//   dF/dt = (iδ_a − γ_a) F + i J_a R + i g s
//   dR/dt = (iδ_b − γ_b) R + i J_b F
// solved by Cramer's rule.
inline std::pair<cd, cd> corotating_steady(const Sys& s, double w, cd drive) {
    cd a11{-s.ga, w - s.wa}, a12{0.0, s.ja};
    cd a21{0.0, s.jb}, a22{-s.gb, w - s.wb};
    cd b1 = -cd{0.0, 1.0} * drive, b2 = 0.0;
    cd det = a11 * a22 - a12 * a21;
    return {(b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det};
}

} // namespace oracle
} // namespace testing_support
