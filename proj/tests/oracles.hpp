#pragma once

// Test-only oracles, kept independent of the library's closed-form paths:
// an adaptive-quadrature evaluation of the conditional CDF through its
// integral representation, a fine discretization of a normal prior, and a
// Kolmogorov-Smirnov distance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rebias/math.hpp"
#include "rebias/types.hpp"

namespace rebias::testing {

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                                   double fa, double fm, double fb, double whole, double eps,
                                   int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::fabs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double eps) {
    if (a >= b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

// Mixture density of b_hat at x when the bias has the given atoms/weights
// and the noise variance is var.
inline double mixture_density(const std::vector<double>& atoms, const std::vector<double>& weights,
                              double x, double var) {
    double s = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k)
        s += weights[k] * normal_pdf(x - atoms[k], var);
    return s;
}

// Conditional CDF F(z | l) of (debiased - theta) given b_hat = l under a
// discrete prior, evaluated by adaptive quadrature of the u-integral
//   F(z|l) = C / f(l) * int_{-inf}^{z} exp(-u^2/(2 st2)) f_G(l - g*u; nu) du,
// with st2 the debiased variance, g = gamma*tau/sigma_tilde and
// nu = tau^2 (1 - gamma^2). This is an independent route: no posterior
// weights, no erf-based mixture CDF.
inline double cdf_by_quadrature(const std::vector<double>& atoms,
                                const std::vector<double>& weights, const TaskSummary& task,
                                double z) {
    const double st = task.sigma_tilde();
    const double st2 = st * st;
    const double gamma = task.gamma();
    const double nu = task.tau * task.tau * (1.0 - gamma * gamma);
    const double g = gamma * task.tau / st;
    const double l = task.b_hat;

    const auto integrand = [&](double u) {
        return std::exp(-0.5 * u * u / st2) * mixture_density(atoms, weights, l - g * u, nu);
    };

    double u_lo = std::min(-45.0 * st, z - 5.0 * st);
    std::vector<double> cuts = {u_lo, z};
    if (g != 0.0) {
        for (double b : atoms) {
            const double u_star = (l - b) / g;
            const double half_width = 8.0 * std::sqrt(nu) / std::fabs(g);
            for (double c : {u_star - half_width, u_star, u_star + half_width})
                if (c > u_lo && c < z) cuts.push_back(c);
        }
    }
    std::sort(cuts.begin(), cuts.end());

    const double f_l = mixture_density(atoms, weights, l, task.tau * task.tau);
    const double c_const = 1.0 / std::sqrt(2.0 * M_PI * st2);
    const double eps = 1e-13 * f_l / c_const + 1e-300;

    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        integral += adaptive_simpson(integrand, cuts[i], cuts[i + 1], eps);
    return c_const * integral / f_l;
}

// 2001-atom discretization of N(mu, a) on mu +/- 8 sd with phi-proportional
// weights; used to check that the normal-prior closed forms agree with the
// generic discrete machinery.
inline std::pair<std::vector<double>, std::vector<double>> discretized_normal(double mu, double a,
                                                                              int n = 2001) {
    const double sd = std::sqrt(a);
    std::vector<double> atoms(n), weights(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        atoms[i] = mu + sd * (-8.0 + 16.0 * static_cast<double>(i) / (n - 1));
        weights[i] = normal_pdf(atoms[i] - mu, a);
        total += weights[i];
    }
    for (double& w : weights) w /= total;
    return {atoms, weights};
}

// Kolmogorov-Smirnov distance of a sample against Uniform(0,1).
inline double ks_uniform(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        d = std::max({d, std::fabs(xs[i] - lo), std::fabs(xs[i] - hi)});
    }
    return d;
}

}  // namespace rebias::testing
