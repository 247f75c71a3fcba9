#include "rebias/ppi.hpp"

#include <cmath>

#include "rebias/math.hpp"
#include "rebias/model.hpp"

namespace rebias {

PPIMoments estimate_moments(const PPITask& task, V2Source v2_source) {
    if (task.labeled_y.size() != task.labeled_pred.size())
        throw InvalidMoments("ppi task '" + task.id + "': labeled_y/labeled_pred length mismatch");
    if (task.m() < 2) throw InsufficientData("ppi task '" + task.id + "': need m >= 2");
    if (task.M() < 2) throw InsufficientData("ppi task '" + task.id + "': need M >= 2");

    PPIMoments mom;
    mom.m = task.m();
    mom.M = task.M();
    mom.w2 = sample_variance(task.labeled_y);
    mom.c = sample_covariance(task.labeled_pred, task.labeled_y);
    mom.v2 = (v2_source == V2Source::Labeled) ? sample_variance(task.labeled_pred)
                                              : sample_variance(task.unlabeled_pred);
    return mom;
}

double pt_variance(const PPIMoments& mom, double lambda) {
    const double m = static_cast<double>(mom.m);
    const double M = static_cast<double>(mom.M);
    return mom.w2 / m + lambda * lambda * mom.v2 * (1.0 / M + 1.0 / m) -
           2.0 * lambda * mom.c / m;
}

double power_tuning_lambda(const PPIMoments& mom) {
    if (!(mom.v2 > 0.0))
        throw ZeroPredictorVariance("power_tuning_lambda: predictor variance is zero");
    const double m = static_cast<double>(mom.m);
    const double M = static_cast<double>(mom.M);
    return M / (m + M) * mom.c / mom.v2;
}

TaskSummary to_task_summary(const PPITask& task, const PPIMoments& mom, double lambda) {
    if (!(mom.v2 > 0.0))
        throw InvalidMoments("ppi task '" + task.id + "': v2 must be > 0 for the summary pair");
    const double m = static_cast<double>(mom.m);
    const double M = static_cast<double>(mom.M);
    const double resid = lambda * lambda * mom.v2 - 2.0 * lambda * mom.c + mom.w2;
    if (!(resid > 0.0))
        throw InvalidMoments("ppi task '" + task.id +
                             "': labeled residual variance must be > 0");

    const double pred_mean_unlabeled = mean_of(task.unlabeled_pred);
    const double pred_mean_labeled = mean_of(task.labeled_pred);
    const double y_mean = mean_of(task.labeled_y);

    TaskSummary out;
    out.id = task.id;
    out.theta_b_hat = pred_mean_unlabeled;
    out.b_hat =
        (1.0 - lambda) * pred_mean_unlabeled + lambda * pred_mean_labeled - y_mean;
    const double s2 = mom.v2 / M;
    out.sigma = std::sqrt(s2);
    out.tau = std::sqrt((1.0 - lambda) * (1.0 - lambda) * s2 + resid / m);
    out.rho = (1.0 - lambda) * out.sigma / out.tau;
    out.validate();
    return out;
}

std::pair<IntervalReport, IntervalReport> baseline_intervals(const PPITask& task, double alpha) {
    if (task.m() < 2) throw InsufficientData("ppi task '" + task.id + "': need m >= 2");
    if (task.M() < 2) throw InsufficientData("ppi task '" + task.id + "': need M >= 2");
    const double w2 = sample_variance(task.labeled_y);
    const double v2_unlabeled = sample_variance(task.unlabeled_pred);
    IntervalReport classical =
        wald_interval(task.id, mean_of(task.labeled_y),
                      std::sqrt(w2 / static_cast<double>(task.m())), alpha, Method::Classical);
    IntervalReport pred_mean = wald_interval(
        task.id, mean_of(task.unlabeled_pred),
        std::sqrt(v2_unlabeled / static_cast<double>(task.M())), alpha, Method::PredMean);
    return {classical, pred_mean};
}

}  // namespace rebias
