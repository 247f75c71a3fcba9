#pragma once

// Estimation of the bias distribution from (b_hat_i, tau_i) pairs: the
// grid-restricted nonparametric MLE with a first-order optimality
// certificate, and the normal-family marginal MLE over (mu, log A).

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rebias/types.hpp"

namespace rebias {

struct NpmleConfig {
    int grid_size = 50;  // GWAS runs conventionally use 300
    std::optional<double> grid_lo;
    std::optional<double> grid_hi;
    int max_iters = 10000;
    double tol_loglik = 1e-9;  // relative change of the mean log-likelihood
    double tol_kkt = 1e-4;

    void validate() const {
        if (grid_size < 2) throw ConfigError("npmle: grid_size must be >= 2");
        if (max_iters < 1) throw ConfigError("npmle: max_iters must be >= 1");
        if (!(tol_loglik > 0.0) || !(tol_kkt > 0.0))
            throw ConfigError("npmle: tolerances must be > 0");
        if (grid_lo && grid_hi && !(*grid_lo < *grid_hi))
            throw ConfigError("npmle: grid_lo must be < grid_hi");
    }
};

struct FitDiagnostics {
    double final_loglik = 0.0;  // mean marginal log-likelihood at the returned weights
    int iterations = 0;
    double kkt_sup = 0.0;  // max over the grid of the mixture gradient D(g_k)
    bool converged = false;
};

// Maximizes (1/n) sum_i log sum_k w_k phi(b_hat_i - g_k; tau_i^2) over
// simplex weights on an equally spaced grid (default span: the data range)
// by multiplicative EM updates. Convergence requires both a relative
// log-likelihood change below tol_loglik and the KKT certificate
// D(g_k) <= tol_kkt on the whole grid with |D(g_k)| <= tol_kkt on the
// support; otherwise the best iterate is returned with converged=false.
// Atoms with weight < 1e-10 are pruned from the returned prior.
// loglik_trace, when given, records the objective at every iterate.
std::pair<DiscretePrior, FitDiagnostics> fit_npmle(std::span<const double> b_hats,
                                                   std::span<const double> taus,
                                                   const NpmleConfig& cfg = {},
                                                   std::vector<double>* loglik_trace = nullptr);

// Marginal MLE of (mu, A) for a normal bias prior: mu profiles out exactly
// as a precision-weighted mean; A is found by golden-section over log A on
// [log 1e-12, log(10 var(b_hat))] refined by bisection on the profile score,
// to 1e-10 in log A. A boundary solution returns A = 0 exactly.
// *degenerate (optional) is set when all b_hat coincide.
NormalPrior fit_normal(std::span<const double> b_hats, std::span<const double> taus,
                       bool* degenerate = nullptr);

// Average marginal density of b_hat implied by the prior across the tasks'
// noise levels, evaluated on a grid of l values.
std::vector<std::pair<double, double>> implied_marginal_curve(const Prior& prior,
                                                              std::span<const double> taus,
                                                              std::span<const double> l_grid);

}  // namespace rebias
