#pragma once

// Family-based GWAS adapter: converts (direct-effect, parental-effect)
// summary statistics into the biased/bias-estimate pair, computes rebiased
// p-values at theta0 = 0 and applies Benjamini-Hochberg.

#include <string>
#include <utility>
#include <vector>

#include "rebias/fit.hpp"
#include "rebias/types.hpp"

namespace rebias {

struct GwasRecord {
    std::string snp_id;
    double theta_ub_hat = 0.0;  // direct-effect estimate (unbiased for theta)
    double b_hat = 0.0;         // parental/bias coefficient
    double sigma_tilde = 0.0;   // SD of the direct-effect estimate
    double tau = 0.0;           // SD of b_hat
    double gamma = 0.0;         // corr(direct-effect estimate, b_hat)
};

// Recovers the biased-estimator coordinates: theta_b_hat = theta_ub_hat +
// b_hat, sigma^2 = sigma_tilde^2 + tau^2 + 2 gamma sigma_tilde tau, rho =
// (tau + gamma sigma_tilde)/sigma. Throws NonPositiveVariance when the
// summary statistics are inconsistent (sigma^2 <= 0 or implied |rho| >= 1).
TaskSummary convert(const GwasRecord& rec);

// Benjamini-Hochberg step-up at level q: ids of the k smallest p-values
// where k is the largest index with p_(k) <= k q / n; ties broken by a
// stable sort on (p, id).
std::vector<std::string> bh_discoveries(const std::vector<std::pair<std::string, double>>& p_values,
                                        double q);

enum class PriorKind { Normal, NPMLE };

struct GwasReport {
    struct Row {
        std::string snp_id;
        double p_rebias = 1.0;
        double p_direct = 1.0;      // z-test on the direct-effect estimate
        double p_population = 1.0;  // z-test on the population-effect estimate
        bool disc_rebias = false;
        bool disc_direct = false;
        bool disc_population = false;
    };
    std::vector<Row> rows;
    Prior fitted_prior = NormalPrior{};
    FitDiagnostics diagnostics;  // meaningful for the NPMLE prior
    double q = 0.0;
    std::size_t n_rebias = 0;
    std::size_t n_direct = 0;
    std::size_t n_population = 0;
};

// Full pipeline: convert records, fit the bias prior on (b_hat, tau),
// compute rebiased p-values at theta0 = 0, run BH at level q, and attach
// the two z-test baselines. npmle_cfg applies when prior_kind == NPMLE
// (GWAS runs conventionally use grid_size = 300).
GwasReport rebias_gwas_pipeline(const std::vector<GwasRecord>& records, PriorKind prior_kind,
                                double q, const NpmleConfig& npmle_cfg = {.grid_size = 300});

}  // namespace rebias
