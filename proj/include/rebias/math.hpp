#pragma once

// Scalar normal-distribution helpers and numerically careful reductions
// shared by the model core, the fitters and the simulator.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>

namespace rebias {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

inline double normal_pdf(double x, double variance) {
    return std::exp(-0.5 * x * x / variance) / std::sqrt(2.0 * M_PI * variance);
}

inline double log_normal_pdf(double x, double variance) {
    return -0.5 * (kLogTwoPi + std::log(variance) + x * x / variance);
}

// Standard normal CDF via erfc; accurate in both tails.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z * M_SQRT1_2);
}

// Inverse standard normal CDF, Wichura's AS 241 (PPND16). Relative error
// below 1e-15 everywhere in (0,1), far inside the 1e-9 contract used for
// interval z-values.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    double r, x;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        x = q *
            (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                  6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
              1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
            (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                  3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
              4.2313330701600911252e1) * r + 1.0);
        return x;
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -x : x;
}

// (1 - alpha/2) standard normal quantile, the half-width multiplier of a
// two-sided level-(1-alpha) Wald interval.
inline double z_value(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("z_value: alpha must be in (0,1)");
    return normal_quantile(1.0 - alpha / 2.0);
}

inline double log_sum_exp(std::span<const double> logs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logs) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double v : logs) s += std::exp(v - mx);
    return mx + std::log(s);
}

// Kahan-compensated accumulator; keeps reductions deterministic and tight
// when summing many near-equal terms.
class KahanSum {
public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double mean_of(std::span<const double> xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value() / static_cast<double>(xs.size());
}

// Sample variance with 1/(n-1); requires n >= 2.
inline double sample_variance(std::span<const double> xs) {
    const double m = mean_of(xs);
    KahanSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(xs.size() - 1);
}

inline double sample_covariance(std::span<const double> xs, std::span<const double> ys) {
    const double mx = mean_of(xs), my = mean_of(ys);
    KahanSum s;
    for (std::size_t i = 0; i < xs.size(); ++i) s.add((xs[i] - mx) * (ys[i] - my));
    return s.value() / static_cast<double>(xs.size() - 1);
}

}  // namespace rebias
