#pragma once

// Model core: posterior bias weights, rebiased point estimates, the
// conditional law of (debiased - theta) given b_hat, equal-tailed rebiased
// intervals and two-sided rebiased p-values, for normal and discrete bias
// priors at any correlation rho.

#include <span>
#include <vector>

#include "rebias/types.hpp"

namespace rebias {

// Finite Gaussian mixture law of (debiased - theta) given b_hat: component
// centers with a common spread, weighted by the bias posterior.
struct ConditionalLaw {
    std::vector<double> centers;
    std::vector<double> weights;
    double spread = 0.0;

    double cdf(double z) const;

    // Inverse CDF by bracketing + bisection; the returned z satisfies
    // |cdf(z) - p| <= 1e-10. Throws BracketFailure if the bracket cannot be
    // grown to enclose p within 60 doublings.
    double quantile(double p) const;

    // Posterior-weighted mean of the component centers.
    double mean() const;
};

// Posterior of the bias given b_hat under a discrete prior, computed in log
// space (log-sum-exp) so tiny tau cannot underflow the densities.
std::vector<double> posterior_weights(const DiscretePrior& prior, const TaskSummary& task);

// Posterior mean of the bias given b_hat.
double posterior_mean(const Prior& prior, const TaskSummary& task);

// Rebiased point estimate: debiased - c*(b_hat - posterior_mean) with
// c = rho*sigma/tau - 1. At rho = 0 this is theta_b_hat - posterior_mean.
double rebias_point(const Prior& prior, const TaskSummary& task);

ConditionalLaw conditional_law(const Prior& prior, const TaskSummary& task);

// Equal-tailed rebiased interval [debiased - q_{1-alpha/2}, debiased - q_{alpha/2}].
IntervalReport rebias_interval(const Prior& prior, const TaskSummary& task, double alpha);
IntervalReport rebias_interval(const Prior& prior, const TaskSummary& task, double alpha,
                               Method method);

// Two-sided rebiased p-value 2*min{F(debiased - theta0 | b_hat), 1 - F(...)}.
double rebias_pvalue(const Prior& prior, const TaskSummary& task, double theta0);

// Marginal density of b_hat at l implied by the prior, with noise SD tau.
double marginal_density(const Prior& prior, double tau, double l);

// Plain Wald interval center +/- z_{alpha} * sd; used by the Classical,
// PredMean and Debiased baselines.
IntervalReport wald_interval(const std::string& id, double center, double sd, double alpha,
                             Method method);

}  // namespace rebias
