#pragma once

// Prediction-powered inference adapter: converts labeled/unlabeled
// prediction data into the (biased estimate, bias estimate) summary via the
// power-tuned construction, and provides the Classical and Pred-Mean
// baseline intervals.

#include <string>
#include <utility>
#include <vector>

#include "rebias/types.hpp"

namespace rebias {

struct PPITask {
    std::string id;
    std::vector<double> labeled_y;
    std::vector<double> labeled_pred;  // aligned with labeled_y
    std::vector<double> unlabeled_pred;

    std::size_t m() const { return labeled_y.size(); }
    std::size_t M() const { return unlabeled_pred.size(); }
};

struct PPIMoments {
    double v2 = 0.0;  // Var h(X)
    double w2 = 0.0;  // Var Y
    double c = 0.0;   // Cov(h(X), Y)
    std::size_t m = 0;
    std::size_t M = 0;
};

enum class V2Source { Labeled, Unlabeled };

// Sample moments with 1/(m-1); v2 from the labeled predictions or, when the
// unlabeled pool is larger, from the unlabeled ones.
PPIMoments estimate_moments(const PPITask& task, V2Source v2_source = V2Source::Labeled);

// Variance of the power-tuned estimator at combination weight lambda:
// w2/m + lambda^2 v2 (1/M + 1/m) - 2 lambda c / m.
double pt_variance(const PPIMoments& mom, double lambda);

// Variance-minimizing weight lambda* = M/(m+M) * c/v2.
double power_tuning_lambda(const PPIMoments& mom);

// Maps the task to the summary pair: theta_b_hat is the unlabeled
// prediction mean; b_hat is its power-tuned bias estimate. The implied
// debiased estimate equals the PT estimator. Rejects moment combinations
// that would produce sigma = 0, tau = 0 or |rho| >= 1.
TaskSummary to_task_summary(const PPITask& task, const PPIMoments& mom, double lambda);

// Classical (labeled-mean) and Pred-Mean (unlabeled prediction mean) Wald
// intervals; the Pred-Mean variance comes from the unlabeled sample.
std::pair<IntervalReport, IntervalReport> baseline_intervals(const PPITask& task, double alpha);

}  // namespace rebias
