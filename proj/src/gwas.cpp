#include "rebias/gwas.hpp"

#include <algorithm>
#include <cmath>

#include "rebias/math.hpp"
#include "rebias/model.hpp"

namespace rebias {

TaskSummary convert(const GwasRecord& rec) {
    if (!std::isfinite(rec.theta_ub_hat) || !std::isfinite(rec.b_hat) ||
        !std::isfinite(rec.sigma_tilde) || !std::isfinite(rec.tau) || !std::isfinite(rec.gamma))
        throw InvalidTask("snp '" + rec.snp_id + "': non-finite field");
    if (!(rec.sigma_tilde > 0.0) || !(rec.tau > 0.0))
        throw InvalidTask("snp '" + rec.snp_id + "': sigma_tilde and tau must be > 0");

    const double sigma_sq = rec.sigma_tilde * rec.sigma_tilde + rec.tau * rec.tau +
                            2.0 * rec.gamma * rec.sigma_tilde * rec.tau;
    if (!(sigma_sq > 0.0))
        throw NonPositiveVariance("snp '" + rec.snp_id +
                                  "': implied population-effect variance is not positive");
    const double sigma = std::sqrt(sigma_sq);
    const double rho = (rec.tau + rec.gamma * rec.sigma_tilde) / sigma;
    if (!(std::fabs(rho) < 1.0))
        throw NonPositiveVariance("snp '" + rec.snp_id +
                                  "': implied correlation is outside (-1,1)");

    TaskSummary out;
    out.id = rec.snp_id;
    out.theta_b_hat = rec.theta_ub_hat + rec.b_hat;
    out.b_hat = rec.b_hat;
    out.sigma = sigma;
    out.tau = rec.tau;
    out.rho = rho;
    out.validate();
    return out;
}

std::vector<std::string> bh_discoveries(const std::vector<std::pair<std::string, double>>& p_values,
                                        double q) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("bh_discoveries: q must be in (0,1)");
    for (const auto& [id, p] : p_values)
        if (!(p >= 0.0 && p <= 1.0))
            throw InvalidTask("bh_discoveries: p-value for '" + id + "' outside [0,1]");

    std::vector<std::pair<std::string, double>> sorted(p_values);
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });

    const std::size_t n = sorted.size();
    std::size_t k = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (sorted[i - 1].second <= static_cast<double>(i) * q / static_cast<double>(n)) k = i;
    }
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(sorted[i].first);
    return out;
}

GwasReport rebias_gwas_pipeline(const std::vector<GwasRecord>& records, PriorKind prior_kind,
                                double q, const NpmleConfig& npmle_cfg) {
    if (records.size() < 2) throw EmptyInput("gwas pipeline: need at least 2 records");

    std::vector<TaskSummary> tasks;
    tasks.reserve(records.size());
    std::vector<double> b_hats, taus;
    b_hats.reserve(records.size());
    taus.reserve(records.size());
    for (const auto& rec : records) {
        tasks.push_back(convert(rec));
        b_hats.push_back(rec.b_hat);
        taus.push_back(rec.tau);
    }

    GwasReport report;
    report.q = q;
    if (prior_kind == PriorKind::Normal) {
        report.fitted_prior = fit_normal(b_hats, taus);
    } else {
        auto [prior, diag] = fit_npmle(b_hats, taus, npmle_cfg);
        report.fitted_prior = std::move(prior);
        report.diagnostics = diag;
    }

    std::vector<std::pair<std::string, double>> p_rb, p_dir, p_pop;
    report.rows.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        GwasReport::Row row;
        row.snp_id = rec.snp_id;
        row.p_rebias = rebias_pvalue(report.fitted_prior, tasks[i], 0.0);
        row.p_direct = 2.0 * normal_cdf(-std::fabs(rec.theta_ub_hat) / rec.sigma_tilde);
        row.p_population = 2.0 * normal_cdf(-std::fabs(tasks[i].theta_b_hat) / tasks[i].sigma);
        p_rb.emplace_back(rec.snp_id, row.p_rebias);
        p_dir.emplace_back(rec.snp_id, row.p_direct);
        p_pop.emplace_back(rec.snp_id, row.p_population);
        report.rows.push_back(std::move(row));
    }

    auto flag = [&](const std::vector<std::string>& ids, auto member) {
        std::size_t count = 0;
        // ids come back sorted by (p, id); map onto rows by id
        std::vector<std::string> sorted_ids(ids);
        std::sort(sorted_ids.begin(), sorted_ids.end());
        for (auto& row : report.rows) {
            if (std::binary_search(sorted_ids.begin(), sorted_ids.end(), row.snp_id)) {
                row.*member = true;
                ++count;
            }
        }
        return count;
    };
    report.n_rebias = flag(bh_discoveries(p_rb, q), &GwasReport::Row::disc_rebias);
    report.n_direct = flag(bh_discoveries(p_dir, q), &GwasReport::Row::disc_direct);
    report.n_population = flag(bh_discoveries(p_pop, q), &GwasReport::Row::disc_population);
    return report;
}

}  // namespace rebias
