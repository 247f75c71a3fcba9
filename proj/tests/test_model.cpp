#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rebias/math.hpp"
#include "rebias/model.hpp"
#include "rebias/rng.hpp"

using namespace rebias;
using rebias::testing::cdf_by_quadrature;
using rebias::testing::discretized_normal;
using rebias::testing::ks_uniform;

namespace {

TaskSummary make_task(double theta_b, double b_hat, double sigma, double tau, double rho,
                      const std::string& id = "t") {
    TaskSummary t;
    t.id = id;
    t.theta_b_hat = theta_b;
    t.b_hat = b_hat;
    t.sigma = sigma;
    t.tau = tau;
    t.rho = rho;
    return t;
}

}  // namespace

TEST_CASE("discrete prior construction normalizes and prunes") {
    DiscretePrior p({1.0, -1.0, 0.5}, {0.25, 0.5, 0.25});
    REQUIRE(p.atoms() == std::vector<double>{-1.0, 0.5, 1.0});
    CHECK(p.weights()[0] == Catch::Approx(0.5));
    DiscretePrior pruned({0.0, 2.0}, {1.0, 0.0});
    CHECK(pruned.size() == 1);
    CHECK_THROWS_AS(DiscretePrior({0.0, 1.0}, {0.3, 0.3}), InvalidPrior);
    CHECK_THROWS_AS(DiscretePrior({0.0}, {-1.0}), InvalidPrior);
}

TEST_CASE("task summary validation catches bad fields") {
    CHECK_THROWS_AS(make_task(0, 0, -1.0, 1.0, 0.0).validate(), InvalidTask);
    CHECK_THROWS_AS(make_task(0, 0, 1.0, 0.0, 0.0).validate(), InvalidTask);
    CHECK_THROWS_AS(make_task(0, 0, 1.0, 1.0, 1.0).validate(), InvalidTask);
    CHECK_THROWS_AS(make_task(NAN, 0, 1.0, 1.0, 0.0).validate(), InvalidTask);
    const TaskSummary ok = make_task(1.0, 0.2, 0.5, 0.25, 0.3);
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.sigma_tilde_sq() == Catch::Approx(0.25 + 0.0625 - 2 * 0.3 * 0.5 * 0.25));
    CHECK(ok.slope() == Catch::Approx(0.3 * 0.5 / 0.25 - 1.0));
    CHECK(std::fabs(ok.gamma()) < 1.0);
}

TEST_CASE("posterior weights: symmetry, point mass, shifted case") {
    const DiscretePrior two({-1.0, 1.0}, {0.5, 0.5});
    auto w = posterior_weights(two, make_task(0, 0.0, 1.0, 1.0, 0.0));
    CHECK(w[0] == Catch::Approx(0.5).margin(1e-12));
    CHECK(w[1] == Catch::Approx(0.5).margin(1e-12));

    auto w1 = posterior_weights(DiscretePrior::point_mass(2.0), make_task(0, 7.3, 1.0, 0.4, 0.0));
    REQUIRE(w1.size() == 1);
    CHECK(w1[0] == Catch::Approx(1.0).margin(1e-15));

    // phi(2) and phi(0) normalized: 1/(1+e^2) and its complement
    auto ws = posterior_weights(two, make_task(0, 1.0, 1.0, 1.0, 0.0));
    CHECK(ws[0] == Catch::Approx(0.11920292202211757).margin(1e-10));
    CHECK(ws[1] == Catch::Approx(0.88079707797788243).margin(1e-10));

    CHECK_THROWS_AS(posterior_weights(two, make_task(0, NAN, 1, 1, 0)), InvalidTask);
}

TEST_CASE("posterior mean: shrinkage, degenerate prior, two-atom case") {
    CHECK(posterior_mean(NormalPrior{0.0, 1.0}, make_task(0, 2.0, 1.0, 1.0, 0.0)) ==
          Catch::Approx(1.0).margin(1e-12));
    CHECK(posterior_mean(NormalPrior{0.3, 0.0}, make_task(0, 5.0, 1.0, 1.0, 0.0)) ==
          Catch::Approx(0.3).margin(1e-15));
    CHECK(posterior_mean(Prior(DiscretePrior({-1.0, 1.0}, {0.5, 0.5})),
                         make_task(0, 1.0, 1.0, 1.0, 0.0)) ==
          Catch::Approx(0.76159415595576485).margin(1e-10));
}

TEST_CASE("rebias point estimate") {
    // delta_0 prior at rho=0 undoes the debiasing entirely
    CHECK(rebias_point(Prior(DiscretePrior::point_mass(0.0)),
                       make_task(2.5, 0.7, 1.0, 1.0, 0.0)) == Catch::Approx(2.5).margin(1e-12));
    // enormous prior variance reproduces the debiased estimate
    CHECK(rebias_point(NormalPrior{0.0, 1e12}, make_task(2.5, 0.7, 1.0, 1.0, 0.0)) ==
          Catch::Approx(1.8).margin(1e-9));
    // hand-evaluated shrinkage: debiased + tau^2/(A+tau^2) * b_hat
    CHECK(rebias_point(NormalPrior{0.0, 1.0}, make_task(2.0, 2.0, 1.0, 1.0, 0.0)) ==
          Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("conditional law: point-mass prior specializations") {
    const TaskSummary t = make_task(0.0, 0.4, 2.0, 1.0, 0.0);
    const ConditionalLaw law = conditional_law(Prior(DiscretePrior::point_mass(1.3)), t);
    REQUIRE(law.centers.size() == 1);
    CHECK(law.spread == Catch::Approx(2.0));
    for (double z : {-2.0, 0.0, 0.9, 3.1})
        CHECK(law.cdf(z) == Catch::Approx(normal_cdf((z - (1.3 - 0.4)) / 2.0)).margin(1e-12));

    const ConditionalLaw at_mean =
        conditional_law(Prior(DiscretePrior::point_mass(2.0)), make_task(0, 0.0, 1.0, 1.0, 0.0));
    CHECK(at_mean.cdf(2.0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("conditional law matches the quadrature oracle (two atoms, rho=0)") {
    const std::vector<double> atoms = {0.0, 4.0};
    const std::vector<double> weights = {0.5, 0.5};
    const TaskSummary t = make_task(0.0, 2.0, 1.0, 1.0, 0.0);
    const ConditionalLaw law = conditional_law(Prior(DiscretePrior(atoms, weights)), t);
    for (int z = -3; z <= 3; ++z) {
        const double closed = law.cdf(z);
        const double quad = cdf_by_quadrature(atoms, weights, t, z);
        CHECK(closed == Catch::Approx(quad).margin(1e-8));
    }
}

TEST_CASE("conditional law matches the quadrature oracle on random instances") {
    std::mt19937 gen(31);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 15; ++rep) {
        const int n_atoms = 1 + static_cast<int>(unif(gen) * 5);
        std::vector<double> atoms, raw;
        for (int k = 0; k < n_atoms; ++k) {
            atoms.push_back(-3.0 + 6.0 * unif(gen));
            raw.push_back(0.05 + unif(gen));
        }
        double total = 0.0;
        for (double r : raw) total += r;
        for (double& r : raw) r /= total;
        std::sort(atoms.begin(), atoms.end());
        const DiscretePrior prior(atoms, raw);

        const TaskSummary t = make_task(0.0, -3.0 + 6.0 * unif(gen), 0.4 + 2.0 * unif(gen),
                                        0.4 + 2.0 * unif(gen), -0.9 + 1.8 * unif(gen));
        const ConditionalLaw law = conditional_law(Prior(prior), t);
        for (int i = 0; i <= 8; ++i) {
            const double z = -10.0 + 20.0 * i / 8.0;
            CHECK(law.cdf(z) ==
                  Catch::Approx(cdf_by_quadrature(prior.atoms(), prior.weights(), t, z))
                      .margin(1e-8));
        }
    }
}

TEST_CASE("cdf limits and symmetry") {
    ConditionalLaw law{{-1.0, 1.0}, {0.5, 0.5}, 1.0};
    CHECK(law.cdf(1.0 + 40.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(law.cdf(-1.0 - 40.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(law.cdf(0.0) == Catch::Approx(0.5).margin(1e-14));
    ConditionalLaw single{{0.0}, {1.0}, 1.0};
    CHECK(single.cdf(0.0) == Catch::Approx(0.5).margin(1e-14));
}

TEST_CASE("quantile: median, normal reference, symmetry, identity") {
    ConditionalLaw single{{3.7}, {1.0}, 0.25};
    CHECK(single.quantile(0.5) == Catch::Approx(3.7).margin(1e-8));

    ConditionalLaw std_normal{{0.0}, {1.0}, 1.0};
    CHECK(std_normal.quantile(0.975) == Catch::Approx(1.959964).margin(1e-6));

    ConditionalLaw sym{{-2.0, 2.0}, {0.5, 0.5}, 0.7};
    for (double p : {0.01, 0.1, 0.3}) {
        CHECK(sym.quantile(p) == Catch::Approx(-sym.quantile(1.0 - p)).margin(1e-8));
    }

    ConditionalLaw mix{{-1.0, 0.5, 4.0}, {0.2, 0.5, 0.3}, 0.8};
    for (double p : {0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999}) {
        const double z = mix.quantile(p);
        CHECK(mix.cdf(z) == Catch::Approx(p).margin(1e-8));
    }
}

TEST_CASE("rebias interval: degenerate prior gives the biased Wald interval") {
    const TaskSummary t = make_task(0.3, 0.9, 1.0, 1.0, 0.0);
    const IntervalReport rep = rebias_interval(NormalPrior{0.0, 0.0}, t, 0.05);
    CHECK(rep.point == Catch::Approx(0.3).margin(1e-10));
    CHECK(rep.lo == Catch::Approx(0.3 - 1.959964).margin(1e-5));
    CHECK(rep.hi == Catch::Approx(0.3 + 1.959964).margin(1e-5));
    CHECK(rep.lo <= rep.point);
    CHECK(rep.point <= rep.hi);
}

TEST_CASE("rebias interval: normal-prior closed form") {
    const TaskSummary t = make_task(0.0, 0.0, 1.0, 1.0, 0.0);  // debiased = 0, b_hat = 0
    const IntervalReport rep = rebias_interval(NormalPrior{0.0, 3.0}, t, 0.05);
    const double half = z_value(0.05) * std::sqrt(1.75);
    CHECK(rep.lo == Catch::Approx(-half).margin(1e-8));
    CHECK(rep.hi == Catch::Approx(half).margin(1e-8));
    CHECK(half == Catch::Approx(2.5930).margin(5e-4));
}

TEST_CASE("rebias interval endpoints satisfy the defining quantile equations") {
    const DiscretePrior prior({-0.8, 0.1, 1.4}, {0.3, 0.4, 0.3});
    const TaskSummary t = make_task(1.1, 0.3, 0.9, 0.7, 0.25);
    const ConditionalLaw law = conditional_law(Prior(prior), t);
    for (double alpha : {0.05, 0.2}) {
        const IntervalReport rep = rebias_interval(Prior(prior), t, alpha);
        CHECK(law.cdf(t.debiased() - rep.lo) == Catch::Approx(1.0 - alpha / 2).margin(1e-8));
        CHECK(law.cdf(t.debiased() - rep.hi) == Catch::Approx(alpha / 2).margin(1e-8));
    }
}

TEST_CASE("normal-prior general-rho interval matches the explicit formula") {
    const TaskSummary t = make_task(2.0, 0.5, 1.2, 0.8, 0.4);
    const NormalPrior prior{-0.1, 0.6};
    const IntervalReport rep = rebias_interval(prior, t, 0.1);
    const double cov = t.rho * t.sigma * t.tau;
    const double tau2 = t.tau * t.tau;
    const double var = t.sigma * t.sigma + tau2 - 2.0 * cov -
                       (cov - tau2) * (cov - tau2) / (tau2 + prior.a);
    const double center =
        t.debiased() - (cov - tau2) / (tau2 + prior.a) * (t.b_hat - prior.mu);
    CHECK(rep.point == Catch::Approx(center).margin(1e-10));
    CHECK(rep.lo == Catch::Approx(center - z_value(0.1) * std::sqrt(var)).margin(1e-8));
    CHECK(rep.hi == Catch::Approx(center + z_value(0.1) * std::sqrt(var)).margin(1e-8));
}

TEST_CASE("rebias p-value: center, reference tail, closed form") {
    const Prior delta0 = Prior(DiscretePrior::point_mass(0.0));
    CHECK(rebias_pvalue(delta0, make_task(0.7, 0.0, 1.0, 1.0, 0.0), 0.7) ==
          Catch::Approx(1.0).margin(1e-12));
    CHECK(rebias_pvalue(delta0, make_task(1.959964, 0.0, 1.0, 1.0, 0.0), 0.0) ==
          Catch::Approx(0.05).margin(1e-6));

    // normal-prior closed form at rho=0
    const NormalPrior np{0.2, 0.9};
    const TaskSummary t = make_task(1.4, -0.3, 0.7, 1.1, 0.0);
    const double tau2 = t.tau * t.tau;
    const double shrink = tau2 / (np.a + tau2);
    const double sd = std::sqrt(t.sigma * t.sigma + np.a * tau2 / (np.a + tau2));
    const double theta0 = 0.5;
    const double expected =
        2.0 * normal_cdf(-std::fabs(t.debiased() + shrink * (t.b_hat - np.mu) - theta0) / sd);
    CHECK(rebias_pvalue(np, t, theta0) == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("test inversion duality for both prior families") {
    std::mt19937 gen(71);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const TaskSummary t = make_task(-1.0 + 2.0 * unif(gen), -1.0 + 2.0 * unif(gen),
                                        0.3 + 1.5 * unif(gen), 0.3 + 1.5 * unif(gen),
                                        -0.85 + 1.7 * unif(gen));
        Prior prior = (rep % 2 == 0)
                          ? Prior(NormalPrior{unif(gen) - 0.5, 2.0 * unif(gen)})
                          : Prior(DiscretePrior({-1.5, 0.2, 2.0}, {0.25, 0.5, 0.25}));
        for (double alpha : {0.05, 0.2}) {
            const IntervalReport rep_int = rebias_interval(prior, t, alpha);
            const double w = rep_int.width();
            for (int i = 0; i <= 20; ++i) {
                const double theta0 = rep_int.lo - 0.5 * w + 2.0 * w * i / 20.0;
                if (std::fabs(theta0 - rep_int.lo) < 1e-6 ||
                    std::fabs(theta0 - rep_int.hi) < 1e-6)
                    continue;
                const bool inside = theta0 > rep_int.lo && theta0 < rep_int.hi;
                const bool accepted = rebias_pvalue(prior, t, theta0) >= alpha;
                CHECK(inside == accepted);
            }
        }
    }
}

TEST_CASE("marginal density: reference values and symmetry") {
    CHECK(marginal_density(Prior(DiscretePrior::point_mass(0.0)), 1.0, 0.0) ==
          Catch::Approx(0.3989423).margin(1e-7));
    CHECK(marginal_density(NormalPrior{0.0, 3.0}, 1.0, 0.0) ==
          Catch::Approx(0.1994711).margin(1e-7));
    const Prior sym = Prior(DiscretePrior({-1.0, 1.0}, {0.5, 0.5}));
    for (double l : {0.3, 1.7, 2.9})
        CHECK(marginal_density(sym, 0.8, l) == Catch::Approx(marginal_density(sym, 0.8, -l)));
}

TEST_CASE("normal prior agrees with a fine discretization of itself") {
    const NormalPrior np{0.15, 0.8};
    const auto [atoms, weights] = discretized_normal(np.mu, np.a);
    const Prior discrete = Prior(DiscretePrior(atoms, weights));
    const TaskSummary t = make_task(1.0, 0.6, 0.9, 1.2, 0.35);

    CHECK(posterior_mean(np, t) == Catch::Approx(posterior_mean(discrete, t)).margin(1e-4));
    CHECK(rebias_pvalue(np, t, 0.4) ==
          Catch::Approx(rebias_pvalue(discrete, t, 0.4)).margin(1e-4));
    const IntervalReport a = rebias_interval(np, t, 0.05);
    const IntervalReport b = rebias_interval(discrete, t, 0.05);
    CHECK(a.lo == Catch::Approx(b.lo).margin(1e-4));
    CHECK(a.hi == Catch::Approx(b.hi).margin(1e-4));
}

TEST_CASE("oracle p-values are uniform under the generative model") {
    const DiscretePrior prior({-1.0, 0.2, 1.5}, {0.3, 0.45, 0.25});
    const double sigma = 1.1, tau = 0.9, rho = 0.0;
    const CounterRng rng(4242);
    const int n = 5000;
    std::vector<double> pvals;
    pvals.reserve(n);
    for (int i = 0; i < n; ++i) {
        const auto ti = static_cast<std::uint64_t>(i);
        const double u = rng.uniform(0, ti, 0);
        double b = prior.atoms().back();
        double acc = 0.0;
        for (std::size_t k = 0; k < prior.size(); ++k) {
            acc += prior.weights()[k];
            if (u <= acc) {
                b = prior.atoms()[k];
                break;
            }
        }
        const double theta = 0.7;
        const double e1 = rng.normal(0, ti, 1);
        const double e2 = rng.normal(0, ti, 2);
        TaskSummary t = make_task(theta + b + sigma * e1,
                                  b + tau * (rho * e1 + std::sqrt(1 - rho * rho) * e2), sigma,
                                  tau, rho);
        pvals.push_back(rebias_pvalue(Prior(prior), t, theta));
    }
    CHECK(ks_uniform(pvals) < 0.025);
}

TEST_CASE("interval width grows with prior variance and stays bracketed") {
    const TaskSummary t = make_task(0.4, 0.8, 0.6, 1.3, 0.0);
    const double z = z_value(0.05);
    double prev_width = 0.0;
    for (double a : {0.0, 0.01, 0.1, 0.5, 2.0, 10.0, 1e4}) {
        const double w = rebias_interval(NormalPrior{0.0, a}, t, 0.05).width();
        CHECK(w >= prev_width - 1e-12);
        CHECK(w >= 2.0 * z * t.sigma - 1e-10);
        CHECK(w <= 2.0 * z * std::sqrt(t.sigma * t.sigma + t.tau * t.tau) + 1e-10);
        prev_width = w;
    }
}

TEST_CASE("quantile reports a corrupted law instead of looping") {
    ConditionalLaw law{{0.0}, {1.0}, 1.0};
    law.weights[0] = 0.0;  // cdf is identically 0, no bracket can enclose p
    CHECK_THROWS_AS(law.quantile(0.5), BracketFailure);
}
