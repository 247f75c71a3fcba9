#include "rebias/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rebias/math.hpp"

namespace rebias {

DiscretePrior::DiscretePrior(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
        throw InvalidPrior("discrete prior needs matching, non-empty atoms and weights");
    double sum = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (!std::isfinite(atoms[i]) || !std::isfinite(weights[i]) || weights[i] < 0.0)
            throw InvalidPrior("discrete prior: atoms must be finite, weights finite and >= 0");
        sum += weights[i];
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw InvalidPrior("discrete prior: weights must sum to 1");

    std::vector<std::size_t> order(atoms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });

    atoms_.reserve(atoms.size());
    weights_.reserve(atoms.size());
    for (std::size_t idx : order) {
        if (weights[idx] == 0.0) continue;
        if (!atoms_.empty() && atoms[idx] == atoms_.back()) {
            weights_.back() += weights[idx];  // merge duplicate atoms
        } else {
            atoms_.push_back(atoms[idx]);
            weights_.push_back(weights[idx]);
        }
    }
    if (atoms_.empty()) throw InvalidPrior("discrete prior: all weights are zero");
    for (double& w : weights_) w /= sum;
}

double DiscretePrior::mean() const {
    KahanSum s;
    for (std::size_t k = 0; k < atoms_.size(); ++k) s.add(weights_[k] * atoms_[k]);
    return s.value();
}

const char* method_name(Method m) {
    switch (m) {
        case Method::Classical: return "classical";
        case Method::PredMean: return "pred_mean";
        case Method::Debiased: return "debiased";
        case Method::RBNormal: return "rb_normal";
        case Method::RBNPMLE: return "rb_npmle";
        case Method::Oracle: return "oracle";
    }
    return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
    for (Method m : {Method::Classical, Method::PredMean, Method::Debiased, Method::RBNormal,
                     Method::RBNPMLE, Method::Oracle})
        if (name == method_name(m)) return m;
    return std::nullopt;
}

double ConditionalLaw::cdf(double z) const {
    KahanSum s;
    for (std::size_t k = 0; k < centers.size(); ++k)
        s.add(weights[k] * normal_cdf((z - centers[k]) / spread));
    return std::min(1.0, std::max(0.0, s.value()));
}

double ConditionalLaw::mean() const {
    KahanSum s;
    for (std::size_t k = 0; k < centers.size(); ++k) s.add(weights[k] * centers[k]);
    return s.value();
}

double ConditionalLaw::quantile(double p) const {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("ConditionalLaw::quantile: p must be in (0,1)");
    const auto [cmin_it, cmax_it] = std::minmax_element(centers.begin(), centers.end());
    double lo = *cmin_it - 40.0 * spread;
    double hi = *cmax_it + 40.0 * spread;

    int doublings = 0;
    double step = 40.0 * spread;
    while (cdf(lo) > p) {
        step *= 2.0;
        lo = *cmin_it - step;
        if (++doublings > 60) throw BracketFailure("quantile: lower bracket expansion failed");
    }
    step = 40.0 * spread;
    while (cdf(hi) < p) {
        step *= 2.0;
        hi = *cmax_it + step;
        if (++doublings > 60) throw BracketFailure("quantile: upper bracket expansion failed");
    }

    constexpr double kCdfTol = 1e-10;
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 400; ++iter) {
        mid = 0.5 * (lo + hi);
        const double f = cdf(mid);
        if (std::fabs(f - p) <= kCdfTol) return mid;
        (f < p ? lo : hi) = mid;
        if (hi - lo <= std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(mid)))
            break;
    }
    return mid;
}

std::vector<double> posterior_weights(const DiscretePrior& prior, const TaskSummary& task) {
    task.validate();
    const auto& atoms = prior.atoms();
    const auto& w = prior.weights();
    const double tau2 = task.tau * task.tau;

    std::vector<double> logs(atoms.size());
    for (std::size_t k = 0; k < atoms.size(); ++k)
        logs[k] = std::log(w[k]) + log_normal_pdf(task.b_hat - atoms[k], tau2);
    const double lse = log_sum_exp(logs);

    std::vector<double> post(atoms.size());
    for (std::size_t k = 0; k < atoms.size(); ++k) post[k] = std::exp(logs[k] - lse);
    return post;
}

double posterior_mean(const Prior& prior, const TaskSummary& task) {
    task.validate();
    if (const auto* np = std::get_if<NormalPrior>(&prior)) {
        np->validate();
        if (np->a == 0.0) return np->mu;
        const double tau2 = task.tau * task.tau;
        return np->mu + np->a / (np->a + tau2) * (task.b_hat - np->mu);
    }
    const auto& dp = std::get<DiscretePrior>(prior);
    const auto post = posterior_weights(dp, task);
    KahanSum s;
    for (std::size_t k = 0; k < post.size(); ++k) s.add(post[k] * dp.atoms()[k]);
    return s.value();
}

double rebias_point(const Prior& prior, const TaskSummary& task) {
    const double m = posterior_mean(prior, task);
    return task.debiased() - task.slope() * (task.b_hat - m);
}

ConditionalLaw conditional_law(const Prior& prior, const TaskSummary& task) {
    task.validate();
    ConditionalLaw law;
    if (const auto* np = std::get_if<NormalPrior>(&prior)) {
        np->validate();
        const double s2 = task.sigma * task.sigma;
        const double tau2 = task.tau * task.tau;
        const double cov = task.rho * task.sigma * task.tau;  // Cov(theta_b_hat, b_hat)
        law.centers = {(cov - tau2) / (tau2 + np->a) * (task.b_hat - np->mu)};
        law.weights = {1.0};
        const double var = s2 + tau2 - 2.0 * cov - (cov - tau2) * (cov - tau2) / (tau2 + np->a);
        law.spread = std::sqrt(var);
        return law;
    }
    const auto& dp = std::get<DiscretePrior>(prior);
    law.weights = posterior_weights(dp, task);
    law.centers.resize(dp.size());
    const double c = task.slope();
    for (std::size_t k = 0; k < dp.size(); ++k)
        law.centers[k] = c * (task.b_hat - dp.atoms()[k]);
    law.spread = task.sigma * std::sqrt(1.0 - task.rho * task.rho);
    return law;
}

IntervalReport rebias_interval(const Prior& prior, const TaskSummary& task, double alpha) {
    const Method m =
        std::holds_alternative<NormalPrior>(prior) ? Method::RBNormal : Method::RBNPMLE;
    return rebias_interval(prior, task, alpha, m);
}

IntervalReport rebias_interval(const Prior& prior, const TaskSummary& task, double alpha,
                               Method method) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::domain_error("rebias_interval: alpha must be in (0,1)");
    const ConditionalLaw law = conditional_law(prior, task);
    const double q_hi = law.quantile(1.0 - alpha / 2.0);
    const double q_lo = law.quantile(alpha / 2.0);
    const double db = task.debiased();
    IntervalReport rep;
    rep.id = task.id;
    rep.point = rebias_point(prior, task);
    rep.lo = db - q_hi;
    rep.hi = db - q_lo;
    rep.alpha = alpha;
    rep.method = method;
    return rep;
}

double rebias_pvalue(const Prior& prior, const TaskSummary& task, double theta0) {
    const ConditionalLaw law = conditional_law(prior, task);
    const double f = law.cdf(task.debiased() - theta0);
    return 2.0 * std::min(f, 1.0 - f);
}

double marginal_density(const Prior& prior, double tau, double l) {
    if (!(tau > 0.0)) throw InvalidTask("marginal_density: tau must be > 0");
    const double tau2 = tau * tau;
    if (const auto* np = std::get_if<NormalPrior>(&prior)) {
        np->validate();
        return normal_pdf(l - np->mu, np->a + tau2);
    }
    const auto& dp = std::get<DiscretePrior>(prior);
    std::vector<double> logs(dp.size());
    for (std::size_t k = 0; k < dp.size(); ++k)
        logs[k] = std::log(dp.weights()[k]) + log_normal_pdf(l - dp.atoms()[k], tau2);
    return std::exp(log_sum_exp(logs));
}

IntervalReport wald_interval(const std::string& id, double center, double sd, double alpha,
                             Method method) {
    const double half = z_value(alpha) * sd;
    IntervalReport rep;
    rep.id = id;
    rep.point = center;
    rep.lo = center - half;
    rep.hi = center + half;
    rep.alpha = alpha;
    rep.method = method;
    return rep;
}

}  // namespace rebias
