#include "rebias/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rebias/math.hpp"
#include "rebias/model.hpp"

namespace rebias {

namespace {

void check_fit_inputs(std::span<const double> b_hats, std::span<const double> taus,
                      std::size_t min_n) {
    if (b_hats.empty() || b_hats.size() < min_n) throw EmptyInput("fit: too few observations");
    if (b_hats.size() != taus.size()) throw EmptyInput("fit: b_hats/taus length mismatch");
    for (std::size_t i = 0; i < b_hats.size(); ++i) {
        if (!std::isfinite(b_hats[i]) || !std::isfinite(taus[i]) || !(taus[i] > 0.0))
            throw InvalidTask("fit: b_hat must be finite and tau > 0");
    }
}

}  // namespace

namespace {

// One mixture pass at weights w over the row-scaled density matrix:
// objective (mean log-likelihood), multiplicative-EM successor, and the
// gradient D(g_k) + 1 = (1/n) sum_i phi_ik / f_i.
struct EmWorkspace {
    const std::vector<double>& scaled;  // n x grid_n, row-major
    std::size_t n;
    std::size_t grid_n;
    double base_loglik;  // (1/n) sum_i rowmax_i

    struct Pass {
        double loglik = 0.0;
        std::vector<double> grad;  // D + 1
        std::vector<double> next;  // EM successor, renormalized
    };

    Pass run(const std::vector<double>& w) const {
        Pass pass;
        pass.grad.assign(grid_n, 0.0);
        const double inv_n = 1.0 / static_cast<double>(n);
        KahanSum loglik_sum;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = scaled.data() + i * grid_n;
            double f = 0.0;
            for (std::size_t k = 0; k < grid_n; ++k) f += w[k] * row[k];
            loglik_sum.add(std::log(f));
            const double r = inv_n / f;
            for (std::size_t k = 0; k < grid_n; ++k) pass.grad[k] += row[k] * r;
        }
        pass.loglik = base_loglik + loglik_sum.value() * inv_n;
        pass.next.resize(grid_n);
        double sum = 0.0;
        for (std::size_t k = 0; k < grid_n; ++k) {
            pass.next[k] = w[k] * pass.grad[k];
            sum += pass.next[k];
        }
        for (std::size_t k = 0; k < grid_n; ++k) pass.next[k] /= sum;
        return pass;
    }

    double loglik_only(const std::vector<double>& w) const {
        const double inv_n = 1.0 / static_cast<double>(n);
        KahanSum loglik_sum;
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = scaled.data() + i * grid_n;
            double f = 0.0;
            for (std::size_t k = 0; k < grid_n; ++k) f += w[k] * row[k];
            loglik_sum.add(std::log(f));
        }
        return base_loglik + loglik_sum.value() * inv_n;
    }
};

void normalize_simplex(std::vector<double>& w) {
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
}

}  // namespace

// The base iteration is the multiplicative EM fixed-point update. Plain EM
// satisfies the certificate but its linear tail can take >1e5 iterations, so
// each cycle also tries a SQUAREM-style extrapolated candidate and keeps it
// only when an exact objective evaluation shows no decrease; fixed points
// and monotone ascent are unchanged. Two guarded moves handle support
// bookkeeping: zero-truncation of tiny atoms with provably negative
// gradient, and reseeding of a zeroed grid point should it ever carry the
// KKT supremum. Every accepted move must not lower the objective.
std::pair<DiscretePrior, FitDiagnostics> fit_npmle(std::span<const double> b_hats,
                                                   std::span<const double> taus,
                                                   const NpmleConfig& cfg,
                                                   std::vector<double>* loglik_trace) {
    cfg.validate();
    check_fit_inputs(b_hats, taus, 1);
    const std::size_t n = b_hats.size();

    const auto [lo_it, hi_it] = std::minmax_element(b_hats.begin(), b_hats.end());
    const double lo = cfg.grid_lo.value_or(*lo_it);
    const double hi = cfg.grid_hi.value_or(*hi_it);
    if (!(lo <= hi)) throw ConfigError("npmle: grid_lo must be <= grid_hi");

    const std::size_t grid_n = (lo == hi) ? 1 : static_cast<std::size_t>(cfg.grid_size);
    std::vector<double> grid(grid_n);
    for (std::size_t k = 0; k < grid_n; ++k)
        grid[k] = (grid_n == 1) ? lo
                                : lo + (hi - lo) * static_cast<double>(k) /
                                           static_cast<double>(grid_n - 1);

    // Scaled density matrix s_ik = exp(log phi_ik - rowmax_i): every row has
    // a unit entry, so mixture values stay well above the underflow floor no
    // matter how small tau is. Row maxima fold back into the log-likelihood.
    std::vector<double> scaled(n * grid_n);
    double base_loglik = 0.0;
    {
        KahanSum base;
        for (std::size_t i = 0; i < n; ++i) {
            const double tau2 = taus[i] * taus[i];
            double mx = -std::numeric_limits<double>::infinity();
            double* row = scaled.data() + i * grid_n;
            for (std::size_t k = 0; k < grid_n; ++k) {
                row[k] = log_normal_pdf(b_hats[i] - grid[k], tau2);
                mx = std::max(mx, row[k]);
            }
            base.add(mx);
            for (std::size_t k = 0; k < grid_n; ++k) row[k] = std::exp(row[k] - mx);
        }
        base_loglik = base.value() / static_cast<double>(n);
    }
    const EmWorkspace ws{scaled, n, grid_n, base_loglik};

    constexpr double kSupportFloor = 1e-10;
    std::vector<double> w(grid_n, 1.0 / static_cast<double>(grid_n));
    FitDiagnostics diag;
    double prev_anchor_loglik = -std::numeric_limits<double>::infinity();
    double alpha_cap = 16.0;
    int passes = 0;

    auto budget_left = [&]() { return passes < cfg.max_iters; };

    while (true) {
        const EmWorkspace::Pass at_w = ws.run(w);
        ++passes;
        if (loglik_trace) loglik_trace->push_back(at_w.loglik);

        double kkt_sup = -std::numeric_limits<double>::infinity();
        double support_dev = 0.0;
        std::size_t kkt_argmax = 0;
        for (std::size_t k = 0; k < grid_n; ++k) {
            const double d = at_w.grad[k] - 1.0;
            if (d > kkt_sup) {
                kkt_sup = d;
                kkt_argmax = k;
            }
            if (w[k] >= kSupportFloor) support_dev = std::max(support_dev, std::fabs(d));
        }

        diag.final_loglik = at_w.loglik;
        diag.iterations = passes;
        diag.kkt_sup = kkt_sup;

        const double rel_change =
            std::fabs(at_w.loglik - prev_anchor_loglik) / (1.0 + std::fabs(at_w.loglik));
        const bool certificate_ok = kkt_sup <= cfg.tol_kkt && support_dev <= cfg.tol_kkt;
        if (rel_change < cfg.tol_loglik && certificate_ok) {
            diag.converged = true;
            break;
        }
        if (!budget_left()) break;
        prev_anchor_loglik = at_w.loglik;

        // Once the certificate holds and the objective is nearly flat, the
        // extrapolated jumps just keep re-arming the plateau test; polish
        // with plain EM steps instead so it can trigger.
        if (certificate_ok && rel_change < 1e3 * cfg.tol_loglik) {
            w = at_w.next;
            continue;
        }

        // A zeroed grid point cannot be revived by the multiplicative map,
        // and a light one grows only at rate (1 + D) per step; blend mass
        // straight into the argmax atom when it carries an above-tolerance
        // gradient.
        if (kkt_sup > cfg.tol_kkt && w[kkt_argmax] < 1e-3) {
            bool reseeded = false;
            double delta = 1e-3;
            for (int attempt = 0; attempt < 16 && budget_left(); ++attempt, delta *= 0.25) {
                std::vector<double> cand(w);
                for (double& x : cand) x *= 1.0 - delta;
                cand[kkt_argmax] += delta;
                const double cand_loglik = ws.loglik_only(cand);
                ++passes;
                if (cand_loglik >= at_w.loglik) {
                    w = std::move(cand);
                    reseeded = true;
                    break;
                }
            }
            if (reseeded) continue;
        }

        // Dropping a tiny atom whose gradient is clearly negative is an
        // ascent direction; keep the move only if the exact objective
        // confirms it. This clears the support side of the certificate
        // without waiting out the multiplicative decay.
        if (budget_left()) {
            std::vector<double> cand(w);
            bool any = false;
            for (std::size_t k = 0; k < grid_n; ++k) {
                if (cand[k] > 0.0 && cand[k] < 1e-3 && at_w.grad[k] - 1.0 < -0.5 * cfg.tol_kkt) {
                    cand[k] = 0.0;
                    any = true;
                }
            }
            if (any) {
                normalize_simplex(cand);
                const double cand_loglik = ws.loglik_only(cand);
                ++passes;
                if (cand_loglik >= at_w.loglik) {
                    w = std::move(cand);
                    continue;
                }
            }
        }

        // Endgame unsticking: the grid gradient is at tolerance everywhere,
        // yet a support atom keeps a below-tolerance gradient and drains far
        // too slowly through the multiplicative map. Transferring its mass
        // toward the highest-gradient grid point is a first-order ascent
        // direction on the fixed grid; halve the transfer until the exact
        // objective confirms it.
        if (kkt_sup <= cfg.tol_kkt && support_dev > cfg.tol_kkt && budget_left()) {
            std::size_t worst = grid_n;
            double worst_d = -cfg.tol_kkt;
            for (std::size_t k = 0; k < grid_n; ++k) {
                const double d = at_w.grad[k] - 1.0;
                if (w[k] >= kSupportFloor && d < worst_d) {
                    worst_d = d;
                    worst = k;
                }
            }
            if (worst < grid_n && worst != kkt_argmax) {
                bool moved = false;
                double delta = w[worst];
                for (int attempt = 0; attempt < 8 && budget_left(); ++attempt, delta *= 0.5) {
                    std::vector<double> cand(w);
                    cand[worst] -= delta;
                    cand[kkt_argmax] += delta;
                    const double cand_loglik = ws.loglik_only(cand);
                    ++passes;
                    if (cand_loglik >= at_w.loglik) {
                        w = std::move(cand);
                        moved = true;
                        break;
                    }
                }
                if (moved) continue;
            }
        }

        std::vector<double> w1 = at_w.next;
        if (!budget_left()) {
            w = std::move(w1);
            continue;
        }
        const EmWorkspace::Pass at_w1 = ws.run(w1);
        ++passes;
        std::vector<double> w2 = at_w1.next;

        // SQUAREM extrapolation through (w, w1, w2), kept only if the exact
        // objective does not decrease relative to the plain EM pair.
        double rr = 0.0, vv = 0.0;
        for (std::size_t k = 0; k < grid_n; ++k) {
            const double r = w1[k] - w[k];
            const double v = w2[k] - 2.0 * w1[k] + w[k];
            rr += r * r;
            vv += v * v;
        }
        if (vv == 0.0 || !budget_left()) {
            w = std::move(w2);
            continue;
        }
        const double alpha = std::max(-alpha_cap, std::min(-1.0, -std::sqrt(rr / vv)));
        std::vector<double> cand(grid_n);
        for (std::size_t k = 0; k < grid_n; ++k) {
            const double r = w1[k] - w[k];
            const double v = w2[k] - 2.0 * w1[k] + w[k];
            cand[k] = std::max(0.0, w[k] - 2.0 * alpha * r + alpha * alpha * v);
        }
        normalize_simplex(cand);
        const double cand_loglik = ws.loglik_only(cand);
        ++passes;
        if (cand_loglik >= at_w1.loglik) {
            w = std::move(cand);
            alpha_cap = std::min(alpha_cap * 4.0, 65536.0);
        } else {
            w = std::move(w2);
            alpha_cap = std::max(8.0, alpha_cap * 0.25);
        }
    }

    std::vector<double> atoms_out, weights_out;
    double kept = 0.0;
    for (std::size_t k = 0; k < grid_n; ++k) {
        if (w[k] < kSupportFloor) continue;
        atoms_out.push_back(grid[k]);
        weights_out.push_back(w[k]);
        kept += w[k];
    }
    for (double& wk : weights_out) wk /= kept;
    return {DiscretePrior(std::move(atoms_out), std::move(weights_out)), diag};
}

namespace {

// Precision-weighted mean: the exact profile maximizer of mu given A.
double profile_mu(std::span<const double> b_hats, std::span<const double> taus, double a) {
    KahanSum num, den;
    for (std::size_t i = 0; i < b_hats.size(); ++i) {
        const double prec = 1.0 / (a + taus[i] * taus[i]);
        num.add(b_hats[i] * prec);
        den.add(prec);
    }
    return num.value() / den.value();
}

double profile_loglik(std::span<const double> b_hats, std::span<const double> taus, double a) {
    const double mu = profile_mu(b_hats, taus, a);
    KahanSum s;
    for (std::size_t i = 0; i < b_hats.size(); ++i) {
        const double v = a + taus[i] * taus[i];
        const double d = b_hats[i] - mu;
        s.add(-0.5 * (kLogTwoPi + std::log(v) + d * d / v));
    }
    return s.value();
}

// d/dA of the profile log-likelihood (mu profiled out, envelope theorem).
double profile_score(std::span<const double> b_hats, std::span<const double> taus, double a) {
    const double mu = profile_mu(b_hats, taus, a);
    KahanSum s;
    for (std::size_t i = 0; i < b_hats.size(); ++i) {
        const double v = a + taus[i] * taus[i];
        const double d = b_hats[i] - mu;
        s.add(0.5 * (d * d / (v * v) - 1.0 / v));
    }
    return s.value();
}

}  // namespace

NormalPrior fit_normal(std::span<const double> b_hats, std::span<const double> taus,
                       bool* degenerate) {
    check_fit_inputs(b_hats, taus, 2);
    if (degenerate) *degenerate = false;

    double var = 0.0;
    {
        const double m = mean_of(b_hats);
        KahanSum s;
        for (double b : b_hats) s.add((b - m) * (b - m));
        var = s.value() / static_cast<double>(b_hats.size());
    }
    if (var == 0.0) {
        if (degenerate) *degenerate = true;
        return NormalPrior{b_hats[0], 0.0};
    }

    const double t_lo = std::log(1e-12);
    const double t_hi = std::log(10.0 * var);

    // Boundary: profile decreasing already at the smallest admissible A.
    if (profile_score(b_hats, taus, std::exp(t_lo)) <= 0.0)
        return NormalPrior{profile_mu(b_hats, taus, 0.0), 0.0};
    if (profile_score(b_hats, taus, std::exp(t_hi)) >= 0.0) {
        const double a = std::exp(t_hi);
        return NormalPrior{profile_mu(b_hats, taus, a), a};
    }

    // Golden-section localizes the maximum of the profile likelihood in
    // log A; bisection on the score sign change then sharpens to 1e-10.
    constexpr double kGolden = 0.6180339887498949;
    double a_t = t_lo, b_t = t_hi;
    double x1 = b_t - kGolden * (b_t - a_t);
    double x2 = a_t + kGolden * (b_t - a_t);
    double f1 = profile_loglik(b_hats, taus, std::exp(x1));
    double f2 = profile_loglik(b_hats, taus, std::exp(x2));
    while (b_t - a_t > 1e-6) {
        if (f1 < f2) {
            a_t = x1;
            x1 = x2;
            f1 = f2;
            x2 = a_t + kGolden * (b_t - a_t);
            f2 = profile_loglik(b_hats, taus, std::exp(x2));
        } else {
            b_t = x2;
            x2 = x1;
            f2 = f1;
            x1 = b_t - kGolden * (b_t - a_t);
            f1 = profile_loglik(b_hats, taus, std::exp(x1));
        }
    }

    double s_lo = profile_score(b_hats, taus, std::exp(a_t));
    double s_hi = profile_score(b_hats, taus, std::exp(b_t));
    double t_star = 0.5 * (a_t + b_t);
    if (s_lo > 0.0 && s_hi < 0.0) {
        while (b_t - a_t > 1e-10) {
            t_star = 0.5 * (a_t + b_t);
            const double s = profile_score(b_hats, taus, std::exp(t_star));
            if (s > 0.0) {
                a_t = t_star;
                s_lo = s;
            } else {
                b_t = t_star;
                s_hi = s;
            }
        }
        t_star = 0.5 * (a_t + b_t);
    }
    const double a_star = std::exp(t_star);
    return NormalPrior{profile_mu(b_hats, taus, a_star), a_star};
}

std::vector<std::pair<double, double>> implied_marginal_curve(const Prior& prior,
                                                              std::span<const double> taus,
                                                              std::span<const double> l_grid) {
    if (taus.empty()) throw EmptyInput("implied_marginal_curve: no tasks");
    std::vector<std::pair<double, double>> curve;
    curve.reserve(l_grid.size());
    for (double l : l_grid) {
        KahanSum s;
        for (double tau : taus) s.add(marginal_density(prior, tau, l));
        curve.emplace_back(l, s.value() / static_cast<double>(taus.size()));
    }
    return curve;
}

}  // namespace rebias
