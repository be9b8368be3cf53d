#pragma once

// Heterodyne synthesis/demodulation and the curve fits used on spectra and
// precession traces. Phasor convention: S(t) = Re[S e^{-iωt}], so a cos(ωt) +
// b sin(ωt) has phasor a + ib and HarmonicFit::phase is φ in A cos(ωt + φ).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "spinlight/errors.hpp"
#include "spinlight/steady_state.hpp"

namespace spinlight {

// ---------------------------------------------------------------- statistics

inline constexpr double kZ95 = 1.959963984540054;

/// Two-sided 95% quantile of Student's t with `dof` degrees of freedom.
inline double t95(double dof) {
    if (!(dof > 0.0)) return std::numeric_limits<double>::infinity();
    boost::math::students_t dist(dof);
    return boost::math::quantile(boost::math::complement(dist, 0.025));
}

/// Maps an angle to (−π, π].
inline double wrap_phase(double phi) {
    constexpr double pi = std::numbers::pi;
    phi = std::remainder(phi, 2.0 * pi);
    if (phi <= -pi) phi += 2.0 * pi;
    return phi;
}

// --------------------------------------------------------------- field state

struct FieldState {
    complex control{1.0, 0.0}; // E_c
    complex plus{};            // E₊
    complex minus{};           // E₋
    double omega = 0.0;
    double s1 = 0.0;           // control quadrature, carried but unused

    [[nodiscard]] complex s2() const { return std::conj(control) * minus + control * std::conj(plus); }
    [[nodiscard]] complex s3() const { return kI * (control * std::conj(plus) - std::conj(control) * minus); }

    /// Field at the cell entrance (E₋ = 0) with the given S2 phasor.
    static FieldState entrance(complex s2, double omega, complex control = {1.0, 0.0}) {
        if (std::abs(control) == 0.0) throw ValidityError("control amplitude must be non-zero");
        FieldState f;
        f.control = control;
        f.plus = std::conj(s2 / control);
        f.omega = omega;
        f.s1 = std::norm(control);
        return f;
    }
};

struct StokesSeries {
    std::vector<double> t;
    std::vector<double> s2;
    std::vector<double> s3;
};

/// S2(t) = Re[S2 e^{-iωt}] + noise, S3 likewise, on t_k = k / sample_rate.
/// Independent noise draws for S2 then S3 at every sample, in time order.
inline StokesSeries stokes_time_series(complex s2, complex s3, double omega, double duration, double sample_rate,
                                       double noise, std::uint64_t seed) {
    double nyquist_guard = 4.0 * std::abs(omega) / (2.0 * std::numbers::pi);
    if (!(sample_rate > nyquist_guard))
        throw ValidityError("sample rate must exceed 4 omega / 2pi to avoid aliasing");
    if (!(duration > 0.0)) throw ValidityError("series duration must be positive");
    if (noise < 0.0) throw ConfigError("noise must be non-negative");
    auto n = static_cast<std::size_t>(std::floor(duration * sample_rate)) + 1;
    StokesSeries out;
    out.t.resize(n);
    out.s2.resize(n);
    out.s3.resize(n);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        double t = static_cast<double>(k) / sample_rate;
        double c = std::cos(omega * t), s = std::sin(omega * t);
        out.t[k] = t;
        out.s2[k] = s2.real() * c + s2.imag() * s;
        out.s3[k] = s3.real() * c + s3.imag() * s;
        if (noise > 0.0) {
            out.s2[k] += noise * gauss(rng);
            out.s3[k] += noise * gauss(rng);
        }
    }
    return out;
}

inline StokesSeries stokes_time_series(const FieldState& field, double duration, double sample_rate, double noise,
                                       std::uint64_t seed) {
    return stokes_time_series(field.s2(), field.s3(), field.omega, duration, sample_rate, noise, seed);
}

// ------------------------------------------------------- heterodyne extraction

struct HarmonicFit {
    double amplitude = 0.0;
    double phase = 0.0; // φ in A cos(ωt + φ), (−π, π]
    double frequency = 0.0;
    double offset = 0.0;
    complex phasor;     // a + ib
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    double amplitude_ci = 0.0; // 95% half-widths
    double phase_ci = 0.0;
    double offset_ci = 0.0;
    double var_a = 0.0, var_b = 0.0, cov_ab = 0.0;
};

/// Least-squares fit of a cos(ωt) + b sin(ωt) + c at known ω.
inline HarmonicFit heterodyne_extract(const std::vector<double>& t, const std::vector<double>& y, double omega) {
    std::size_t n = t.size();
    if (n != y.size()) throw FitError("heterodyne_extract: time and value lengths differ");
    if (n < 4) throw FitError("heterodyne_extract: under-determined input");
    double span = t.back() - t.front();
    if (!(omega > 0.0) || span * omega < 3.0 * 2.0 * std::numbers::pi * (1.0 - 1e-9))
        throw FitError("heterodyne_extract: series must cover at least 3 periods");

    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd b(n);
    for (std::size_t k = 0; k < n; ++k) {
        a(k, 0) = std::cos(omega * t[k]);
        a(k, 1) = std::sin(omega * t[k]);
        a(k, 2) = 1.0;
        b(k) = y[k];
    }
    Eigen::Matrix3d ata = a.transpose() * a;
    Eigen::LDLT<Eigen::Matrix3d> ldlt(ata);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
        throw FitError("heterodyne_extract: design matrix is rank deficient");
    Eigen::Vector3d p = ldlt.solve(a.transpose() * b);
    Eigen::VectorXd r = b - a * p;
    double rss = r.squaredNorm();
    double dof = static_cast<double>(n) - 3.0;
    double s2 = rss / dof;
    Eigen::Matrix3d cov = ldlt.solve(Eigen::Matrix3d::Identity()) * s2;

    HarmonicFit h;
    h.frequency = omega;
    h.phasor = {p(0), p(1)};
    h.offset = p(2);
    h.amplitude = std::hypot(p(0), p(1));
    h.phase = h.amplitude > 0.0 ? wrap_phase(std::atan2(-p(1), p(0))) : 0.0;
    h.residual_rms = std::sqrt(rss / static_cast<double>(n));
    h.n_points = n;
    h.var_a = cov(0, 0);
    h.var_b = cov(1, 1);
    h.cov_ab = cov(0, 1);
    double q = t95(dof);
    if (h.amplitude > 0.0) {
        double ca = p(0) / h.amplitude, sb = p(1) / h.amplitude;
        double var_amp = ca * ca * cov(0, 0) + sb * sb * cov(1, 1) + 2.0 * ca * sb * cov(0, 1);
        double a2 = h.amplitude * h.amplitude;
        double var_phase = (p(1) * p(1) * cov(0, 0) + p(0) * p(0) * cov(1, 1) - 2.0 * p(0) * p(1) * cov(0, 1)) /
                           (a2 * a2);
        h.amplitude_ci = q * std::sqrt(std::max(var_amp, 0.0));
        h.phase_ci = q * std::sqrt(std::max(var_phase, 0.0));
    } else {
        h.amplitude_ci = q * std::sqrt(std::max(0.5 * (cov(0, 0) + cov(1, 1)), 0.0));
        h.phase_ci = std::numbers::pi;
    }
    h.offset_ci = q * std::sqrt(std::max(cov(2, 2), 0.0));
    return h;
}

// ------------------------------------------------------------------------ FFT

/// In-place iterative radix-2 FFT (forward sign e^{-2πi kn/N}); size must be a
/// power of two.
inline void fft(std::vector<complex>& a) {
    std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        complex wl{std::cos(ang), std::sin(ang)};
        for (std::size_t i = 0; i < n; i += len) {
            complex w{1.0, 0.0};
            for (std::size_t k = 0; k < len / 2; ++k) {
                complex u = a[i + k], v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Angular frequency of the strongest periodogram peak of a uniformly sampled,
/// mean-removed series (zero-padded 4×, parabolic peak interpolation).
/// Returns 0 when the peak sits in the DC bin.
inline double dominant_frequency(const std::vector<double>& y, double dt) {
    std::size_t n = y.size();
    std::size_t m = 1;
    while (m < 4 * n) m <<= 1;
    double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<complex> buf(m);
    for (std::size_t k = 0; k < n; ++k) buf[k] = y[k] - mean;
    fft(buf);
    std::size_t best = 0;
    double best_power = -1.0;
    for (std::size_t k = 0; k <= m / 2; ++k) {
        double p = std::norm(buf[k]);
        if (p > best_power) {
            best_power = p;
            best = k;
        }
    }
    if (best == 0) return 0.0;
    double shift = 0.0;
    if (best + 1 <= m / 2) {
        double l = std::log(std::norm(buf[best - 1]) + 1e-300), c = std::log(best_power + 1e-300),
               r = std::log(std::norm(buf[best + 1]) + 1e-300);
        double den = l - 2.0 * c + r;
        if (den < 0.0) shift = std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
    }
    return 2.0 * std::numbers::pi * (static_cast<double>(best) + shift) / (static_cast<double>(m) * dt);
}

// -------------------------------------------------------- Levenberg-Marquardt

struct LmOptions {
    int max_iterations = 500;
    double xtol = 1e-13;
    double ftol = 1e-15;
    double gtol = 1e-15;
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;   // scaled by s² when sigma is unknown
    Eigen::VectorXd ci;           // 95% half-widths
    double chi2 = 0.0;            // weighted residual sum of squares
    double residual_rms = 0.0;    // unweighted
    int iterations = 0;
    bool converged = false;
    bool rank_deficient = false;
    double dof = 0.0;
};

/// Model callback: fills f (n) and the Jacobian jac (n×m) at params p.
using ModelFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd& jac)>;

/// Weighted nonlinear least squares. With `sigma` the covariance is (JᵀWJ)⁻¹
/// and CIs use the normal quantile; without it the covariance is scaled by the
/// reduced chi-square and CIs use Student's t on n − m degrees of freedom.
inline LmResult levenberg_marquardt(const ModelFn& model, Eigen::VectorXd p, const Eigen::VectorXd& y,
                                    const std::optional<Eigen::VectorXd>& sigma, const LmOptions& opt = {}) {
    const Eigen::Index n = y.size(), m = p.size();
    if (n < m) throw FitError("fit is under-determined");
    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (sigma) {
        if (sigma->size() != n) throw FitError("sigma length differs from data length");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!((*sigma)(i) > 0.0)) throw FitError("sigma must be positive");
            w(i) = 1.0 / (*sigma)(i);
        }
    }
    Eigen::VectorXd f(n);
    Eigen::MatrixXd jac(n, m);
    auto eval = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jr) {
        model(q, f, jac);
        r = (y - f).cwiseProduct(w);
        if (jr) *jr = jac.array().colwise() * w.array();
    };

    Eigen::VectorXd r(n);
    Eigen::MatrixXd jr(n, m);
    eval(p, r, &jr);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    LmResult res;
    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it + 1;
        Eigen::MatrixXd jtj = jr.transpose() * jr;
        Eigen::VectorXd g = jr.transpose() * r;
        if (g.cwiseAbs().maxCoeff() <= opt.gtol * std::max(cost, 1e-300)) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-300);
        bool improved = false;
        for (int inner = 0; inner < 60; ++inner) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * diag;
            Eigen::VectorXd step = a.ldlt().solve(g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            Eigen::VectorXd trial = p + step;
            Eigen::VectorXd rt(n);
            eval(trial, rt, nullptr);
            double cost_t = rt.allFinite() ? rt.squaredNorm() : std::numeric_limits<double>::infinity();
            if (cost_t <= cost) {
                double rel_f = (cost - cost_t) / std::max(cost, 1e-300);
                double rel_x = step.norm() / (p.norm() + opt.xtol);
                p = trial;
                cost = cost_t;
                eval(p, r, &jr);
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (rel_x <= opt.xtol || rel_f <= opt.ftol) res.converged = true;
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e16) break;
        }
        if (!improved) {
            // no downhill step exists at any damping: a stationary point
            res.converged = true;
            break;
        }
        if (res.converged) break;
    }

    res.params = p;
    res.chi2 = cost;
    res.dof = static_cast<double>(n - m);
    model(p, f, jac);
    res.residual_rms = std::sqrt((y - f).squaredNorm() / static_cast<double>(n));
    // rank and inverse on the column-equilibrated normal matrix, so that
    // parameters of very different magnitude do not look degenerate
    Eigen::MatrixXd jtj = jr.transpose() * jr;
    Eigen::VectorXd d = jtj.diagonal().cwiseSqrt();
    bool zero_column = (d.array() <= 0.0).any() || !d.allFinite();
    Eigen::VectorXd dinv = zero_column ? Eigen::VectorXd::Ones(m) : Eigen::VectorXd(d.cwiseInverse());
    Eigen::MatrixXd scaled = dinv.asDiagonal() * jtj * dinv.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(scaled);
    lu.setThreshold(1e-12);
    if (zero_column || !lu.isInvertible() || lu.rank() < m) {
        res.rank_deficient = true;
        res.covariance = Eigen::MatrixXd::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
        res.ci = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
        return res;
    }
    res.covariance = dinv.asDiagonal() * lu.inverse() * dinv.asDiagonal();
    double q = kZ95;
    if (!sigma) {
        double s2 = res.dof > 0.0 ? cost / res.dof : 0.0;
        res.covariance *= s2;
        q = t95(res.dof);
    }
    res.ci = res.covariance.diagonal().cwiseMax(0.0).cwiseSqrt() * q;
    return res;
}

/// Estimate ± 95% half-width → (low, high).
struct Interval {
    double low = 0.0;
    double high = 0.0;
    [[nodiscard]] bool contains(double v) const { return v >= low && v <= high; }
};

inline Interval interval(double value, double half) { return {value - half, value + half}; }

// ------------------------------------------------------- inverted Lorentzian

struct LineFit {
    double center = 0.0;
    double half_width = 0.0;
    double contrast = 0.0;
    double baseline = 1.0;
    double center_ci = 0.0, half_width_ci = 0.0, contrast_ci = 0.0, baseline_ci = 0.0;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    int iterations = 0;
    bool converged = false;
    bool degenerate = false;
    std::string message;
};

namespace detail {

/// Half-maximum crossing width of a dip (or peak) around index `k0` by linear
/// interpolation; falls back to a fraction of the span.
inline double half_crossing_width(const std::vector<double>& x, const std::vector<double>& depth, std::size_t k0) {
    double half = 0.5 * depth[k0];
    double left = x.front(), right = x.back();
    for (std::size_t k = k0; k > 0; --k) {
        if (depth[k - 1] <= half) {
            double f = (depth[k] - half) / (depth[k] - depth[k - 1]);
            left = x[k] - f * (x[k] - x[k - 1]);
            break;
        }
    }
    for (std::size_t k = k0; k + 1 < x.size(); ++k) {
        if (depth[k + 1] <= half) {
            double f = (depth[k] - half) / (depth[k] - depth[k + 1]);
            right = x[k] + f * (x[k + 1] - x[k]);
            break;
        }
    }
    double w = 0.5 * (right - left);
    return w > 0.0 ? w : 0.1 * (x.back() - x.front());
}

inline std::vector<std::size_t> sort_order(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    return idx;
}

} // namespace detail

/// Fits y = b (1 − C γ² / ((x − x₀)² + γ²)). Flat data is flagged degenerate.
inline LineFit fit_inverted_lorentzian(const std::vector<double>& x_in, const std::vector<double>& y_in,
                                       const std::vector<double>& sigma_in = {}, const LmOptions& opt = {}) {
    std::size_t n = x_in.size();
    if (n != y_in.size()) throw FitError("fit_inverted_lorentzian: x and y lengths differ");
    if (!sigma_in.empty() && sigma_in.size() != n) throw FitError("fit_inverted_lorentzian: sigma length differs");
    if (n < 5) throw FitError("fit_inverted_lorentzian: needs at least 5 points");
    auto order = detail::sort_order(x_in);
    std::vector<double> x(n), y(n), sg;
    for (std::size_t k = 0; k < n; ++k) {
        x[k] = x_in[order[k]];
        y[k] = y_in[order[k]];
        if (!sigma_in.empty()) sg.push_back(sigma_in[order[k]]);
    }

    LineFit out;
    out.n_points = n;
    std::size_t kmin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    double ymax = *std::max_element(y.begin(), y.end());
    double depth = ymax - y[kmin];
    double noise = 0.0;
    if (!sg.empty()) {
        std::vector<double> s = sg;
        std::nth_element(s.begin(), s.begin() + static_cast<long>(s.size() / 2), s.end());
        noise = s[s.size() / 2];
    }
    if (!(ymax > 0.0) || depth <= 1e-12 * std::abs(ymax) || depth <= 4.0 * noise) {
        out.degenerate = true;
        out.baseline = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        out.residual_rms = 0.0;
        for (double v : y) out.residual_rms += (v - out.baseline) * (v - out.baseline);
        out.residual_rms = std::sqrt(out.residual_rms / static_cast<double>(n));
        out.message = "no resolvable dip: contrast and width are unidentifiable";
        return out;
    }
    std::vector<double> dip(n);
    for (std::size_t k = 0; k < n; ++k) dip[k] = ymax - y[k];
    double gamma0 = detail::half_crossing_width(x, dip, kmin);

    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    std::optional<Eigen::VectorXd> sv;
    if (!sg.empty()) sv = Eigen::Map<const Eigen::VectorXd>(sg.data(), static_cast<Eigen::Index>(n));
    ModelFn model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd& j) {
        double b = p(0), c = p(1), x0 = p(2), g = p(3);
        for (std::size_t k = 0; k < n; ++k) {
            double u = x[k] - x0;
            double den = u * u + g * g;
            double l = g * g / den;
            auto i = static_cast<Eigen::Index>(k);
            f(i) = b * (1.0 - c * l);
            j(i, 0) = 1.0 - c * l;
            j(i, 1) = -b * l;
            j(i, 2) = -b * c * g * g * 2.0 * u / (den * den);
            j(i, 3) = -b * c * 2.0 * g * u * u / (den * den);
        }
    };
    Eigen::VectorXd p0(4);
    p0 << ymax, depth / ymax, x[kmin], gamma0;
    auto res = levenberg_marquardt(model, p0, yv, sv, opt);

    out.baseline = res.params(0);
    out.contrast = res.params(1);
    out.center = res.params(2);
    out.half_width = std::abs(res.params(3));
    out.baseline_ci = res.ci(0);
    out.contrast_ci = res.ci(1);
    out.center_ci = res.ci(2);
    out.half_width_ci = res.ci(3);
    out.residual_rms = res.residual_rms;
    out.iterations = res.iterations;
    out.converged = res.converged && !res.rank_deficient;
    if (res.rank_deficient) out.message = "singular normal matrix at the solution";
    if (out.contrast - out.contrast_ci <= 0.0 && !sg.empty()) {
        out.degenerate = true;
        out.message = "contrast is consistent with zero";
    }
    if (!res.converged) out.message = "iteration cap reached; parameters are the last iterate";
    return out;
}

// ----------------------------------------------------------- Lorentzian peak

struct PeakFit {
    double center = 0.0;
    double half_width = 0.0;
    double height = 0.0;
    double center_ci = 0.0, half_width_ci = 0.0, height_ci = 0.0;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    bool converged = false;
};

/// Fits y = H γ² / ((x − x₀)² + γ²).
inline PeakFit fit_lorentzian_peak(const std::vector<double>& x_in, const std::vector<double>& y_in,
                                   const LmOptions& opt = {}) {
    std::size_t n = x_in.size();
    if (n != y_in.size() || n < 4) throw FitError("fit_lorentzian_peak: needs at least 4 (x, y) pairs");
    auto order = detail::sort_order(x_in);
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
        x[k] = x_in[order[k]];
        y[k] = y_in[order[k]];
    }
    std::size_t kmax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    if (!(y[kmax] > 0.0)) throw FitError("fit_lorentzian_peak: no positive peak");
    double g0 = detail::half_crossing_width(x, y, kmax);
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    ModelFn model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd& j) {
        double h = p(0), x0 = p(1), g = p(2);
        for (std::size_t k = 0; k < n; ++k) {
            double u = x[k] - x0;
            double den = u * u + g * g;
            double l = g * g / den;
            auto i = static_cast<Eigen::Index>(k);
            f(i) = h * l;
            j(i, 0) = l;
            j(i, 1) = h * g * g * 2.0 * u / (den * den);
            j(i, 2) = h * 2.0 * g * u * u / (den * den);
        }
    };
    Eigen::VectorXd p0(3);
    p0 << y[kmax], x[kmax], g0;
    auto res = levenberg_marquardt(model, p0, yv, std::nullopt, opt);
    PeakFit out;
    out.height = res.params(0);
    out.center = res.params(1);
    out.half_width = std::abs(res.params(2));
    out.height_ci = res.ci(0);
    out.center_ci = res.ci(1);
    out.half_width_ci = res.ci(2);
    out.residual_rms = res.residual_rms;
    out.n_points = n;
    out.converged = res.converged && !res.rank_deficient;
    return out;
}

// --------------------------------------------------------- decaying sinusoid

struct DecayFit {
    double frequency = 0.0; // ω
    double decay = 0.0;     // γ
    double amplitude = 0.0; // A at t0
    double phase = 0.0;     // φ at t0
    double offset = 0.0;
    double frequency_ci = 0.0, decay_ci = 0.0, amplitude_ci = 0.0, phase_ci = 0.0, offset_ci = 0.0;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
    int iterations = 0;
    bool converged = false;
    bool degenerate_phase = false;
    std::vector<std::string> warnings;
};

struct DecayFitOptions {
    double t0 = std::numeric_limits<double>::quiet_NaN(); // reference time; NaN means first sample
    std::optional<double> sigma;                           // known per-sample noise
    LmOptions lm;
};

/// Fits y = A e^{−γ(t−t0)} cos(ω(t−t0) + φ) + c on a uniform grid.
/// ω starts from the periodogram peak, γ from a variable-projection scan.
inline DecayFit fit_decaying_sinusoid(const std::vector<double>& t, const std::vector<double>& y,
                                      const DecayFitOptions& o = {}) {
    std::size_t n = t.size();
    if (n != y.size()) throw FitError("fit_decaying_sinusoid: time and value lengths differ");
    if (n < 8) throw FitError("fit_decaying_sinusoid: needs at least 8 samples");
    double t0 = std::isnan(o.t0) ? t.front() : o.t0;
    double span = t.back() - t.front();
    double dt = span / static_cast<double>(n - 1);
    if (!(dt > 0.0)) throw FitError("fit_decaying_sinusoid: times must increase");
    std::vector<double> tau(n);
    for (std::size_t k = 0; k < n; ++k) tau[k] = t[k] - t0;

    double omega0 = dominant_frequency(y, dt);
    bool oscillating = omega0 * span > 2.0 * std::numbers::pi;
    DecayFit out;
    out.n_points = n;

    // variable projection over γ on a log grid
    auto linear_fit = [&](double omega, double gamma, Eigen::VectorXd& coef) {
        Eigen::Index m = oscillating ? 3 : 2;
        Eigen::MatrixXd a(static_cast<Eigen::Index>(n), m);
        Eigen::VectorXd b(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) {
            auto i = static_cast<Eigen::Index>(k);
            double e = std::exp(-gamma * tau[k]);
            if (oscillating) {
                a(i, 0) = e * std::cos(omega * tau[k]);
                a(i, 1) = e * std::sin(omega * tau[k]);
                a(i, 2) = 1.0;
            } else {
                a(i, 0) = e;
                a(i, 1) = 1.0;
            }
            b(i) = y[k];
        }
        coef = a.colPivHouseholderQr().solve(b);
        return (b - a * coef).squaredNorm();
    };
    double best_gamma = 1.0 / span, best_rss = std::numeric_limits<double>::infinity();
    Eigen::VectorXd coef, best_coef;
    for (int k = 0; k <= 120; ++k) {
        double g = 1e-3 / span * std::pow(10.0, 5.0 * k / 120.0);
        double rss = linear_fit(omega0, g, coef);
        if (rss < best_rss) {
            best_rss = rss;
            best_gamma = g;
            best_coef = coef;
        }
    }

    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    std::optional<Eigen::VectorXd> sv;
    if (o.sigma) sv = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), *o.sigma);

    if (!oscillating) {
        // A e^{−γτ} + c; phase is meaningless
        ModelFn model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd& j) {
            for (std::size_t k = 0; k < n; ++k) {
                auto i = static_cast<Eigen::Index>(k);
                double e = std::exp(-p(1) * tau[k]);
                f(i) = p(0) * e + p(2);
                j(i, 0) = e;
                j(i, 1) = -p(0) * tau[k] * e;
                j(i, 2) = 1.0;
            }
        };
        Eigen::VectorXd p0(3);
        p0 << best_coef(0), best_gamma, best_coef(1);
        auto res = levenberg_marquardt(model, p0, yv, sv, o.lm);
        out.amplitude = std::abs(res.params(0));
        out.phase = res.params(0) < 0.0 ? std::numbers::pi : 0.0;
        out.decay = res.params(1);
        out.offset = res.params(2);
        out.amplitude_ci = res.ci(0);
        out.decay_ci = res.ci(1);
        out.offset_ci = res.ci(2);
        out.residual_rms = res.residual_rms;
        out.iterations = res.iterations;
        out.converged = res.converged && !res.rank_deficient;
        out.degenerate_phase = true;
        out.warnings.push_back("no oscillation resolved: fitted a pure exponential, phase is degenerate");
    } else {
        // parameters: a, b (quadratures at t0), ω, γ, c
        ModelFn model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& f, Eigen::MatrixXd& j) {
            double a = p(0), b = p(1), w = p(2), g = p(3);
            for (std::size_t k = 0; k < n; ++k) {
                auto i = static_cast<Eigen::Index>(k);
                double e = std::exp(-g * tau[k]);
                double c = std::cos(w * tau[k]), s = std::sin(w * tau[k]);
                double osc = a * c + b * s;
                f(i) = e * osc + p(4);
                j(i, 0) = e * c;
                j(i, 1) = e * s;
                j(i, 2) = e * tau[k] * (-a * s + b * c);
                j(i, 3) = -tau[k] * e * osc;
                j(i, 4) = 1.0;
            }
        };
        Eigen::VectorXd p0(5);
        p0 << best_coef(0), best_coef(1), omega0, best_gamma, best_coef(2);
        auto res = levenberg_marquardt(model, p0, yv, sv, o.lm);
        double a = res.params(0), b = res.params(1);
        out.frequency = res.params(2);
        out.decay = res.params(3);
        out.offset = res.params(4);
        out.amplitude = std::hypot(a, b);
        out.phase = wrap_phase(std::atan2(-b, a));
        if (out.frequency < 0.0) {
            out.frequency = -out.frequency;
            out.phase = wrap_phase(-out.phase);
        }
        out.frequency_ci = res.ci(2);
        out.decay_ci = res.ci(3);
        out.offset_ci = res.ci(4);
        if (!res.rank_deficient && out.amplitude > 0.0) {
            double q = o.sigma ? kZ95 : t95(res.dof);
            const auto& cv = res.covariance;
            double ca = a / out.amplitude, sb = b / out.amplitude;
            double var_amp = ca * ca * cv(0, 0) + sb * sb * cv(1, 1) + 2.0 * ca * sb * cv(0, 1);
            double a2 = out.amplitude * out.amplitude;
            double var_ph = (b * b * cv(0, 0) + a * a * cv(1, 1) - 2.0 * a * b * cv(0, 1)) / (a2 * a2);
            out.amplitude_ci = q * std::sqrt(std::max(var_amp, 0.0));
            out.phase_ci = q * std::sqrt(std::max(var_ph, 0.0));
        } else {
            out.amplitude_ci = std::numeric_limits<double>::infinity();
            out.phase_ci = std::numbers::pi;
        }
        out.residual_rms = res.residual_rms;
        out.iterations = res.iterations;
        out.converged = res.converged && !res.rank_deficient;
    }
    if (out.decay * span < 0.5)
        out.warnings.push_back("decay rate times window is below 0.5: decay and amplitude are poorly separated");
    return out;
}

// ------------------------------------------------------------------- linear

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;   // y at x = 0
    double x_intercept = 0.0; // x at y = 0
    double slope_ci = 0.0, intercept_ci = 0.0, x_intercept_ci = 0.0;
    bool x_intercept_defined = true;
    double residual_rms = 0.0;
    std::size_t n_points = 0;
};

/// Least squares y = m x + q. With sigma the fit is weighted and CIs use the
/// normal quantile; otherwise the residual variance and Student's t (n − 2).
inline LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& sigma = {}) {
    std::size_t n = x.size();
    if (n != y.size()) throw FitError("fit_linear: x and y lengths differ");
    if (!sigma.empty() && sigma.size() != n) throw FitError("fit_linear: sigma length differs");
    if (n < 2) throw FitError("fit_linear: needs at least 2 points");
    double sw = 0, sx = 0, sy = 0;
    std::vector<double> w(n, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!sigma.empty()) {
            if (!(sigma[k] > 0.0)) throw FitError("fit_linear: sigma must be positive");
            w[k] = 1.0 / (sigma[k] * sigma[k]);
        }
        sw += w[k];
        sx += w[k] * x[k];
        sy += w[k] * y[k];
    }
    double xm = sx / sw, ym = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += w[k] * (x[k] - xm) * (x[k] - xm);
        sxy += w[k] * (x[k] - xm) * (y[k] - ym);
    }
    double xscale = 0.0;
    for (double v : x) xscale = std::max(xscale, std::abs(v - xm));
    if (!(sxx > 1e-24 * sw * std::max(xscale * xscale, 1e-300)) || xscale == 0.0)
        throw FitError("fit_linear: rank deficient (fewer than 2 distinct x values)");

    LinearFit f;
    f.n_points = n;
    f.slope = sxy / sxx;
    f.intercept = ym - f.slope * xm;
    double rss = 0.0, rss_u = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double r = y[k] - (f.slope * x[k] + f.intercept);
        rss += w[k] * r * r;
        rss_u += r * r;
    }
    f.residual_rms = std::sqrt(rss_u / static_cast<double>(n));
    double scale = 1.0, q = kZ95;
    if (sigma.empty()) {
        double dof = static_cast<double>(n) - 2.0;
        scale = dof > 0.0 ? rss / dof : 0.0;
        q = t95(dof);
        if (dof <= 0.0) q = 0.0; // exact two-point line: no spread to report
    }
    double var_m = scale / sxx;
    double var_q = scale * (1.0 / sw + xm * xm / sxx);
    double cov_mq = -scale * xm / sxx;
    f.slope_ci = q * std::sqrt(var_m);
    f.intercept_ci = q * std::sqrt(var_q);
    if (f.slope == 0.0) {
        f.x_intercept_defined = false;
        f.x_intercept = std::numeric_limits<double>::quiet_NaN();
        f.x_intercept_ci = std::numeric_limits<double>::quiet_NaN();
    } else {
        // x0 = −q/m; gradient (q/m², −1/m)
        f.x_intercept = -f.intercept / f.slope;
        double gm = f.intercept / (f.slope * f.slope), gq = -1.0 / f.slope;
        double var_x0 = gm * gm * var_m + gq * gq * var_q + 2.0 * gm * gq * cov_mq;
        f.x_intercept_ci = q * std::sqrt(std::max(var_x0, 0.0));
    }
    return f;
}

} // namespace spinlight
