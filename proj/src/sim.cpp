#include "rebias/sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rebias/math.hpp"
#include "rebias/model.hpp"
#include "rebias/rng.hpp"

namespace rebias {

void SimConfig::validate() const {
    if (n < 1 || replicates < 1) throw ConfigError("sim: n and K must be >= 1");
    if (alphas.empty()) throw ConfigError("sim: at least one alpha required");
    for (double a : alphas)
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("sim: alphas must be in (0,1)");
    if (methods.empty()) throw ConfigError("sim: at least one method required");
    if (moments.empty() ||
        (moments.size() != 1 && moments.size() != static_cast<std::size_t>(n)))
        throw ConfigError("sim: moments must hold one triple or one per task");
    for (const auto& mt : moments) {
        TaskSummary probe{"probe", 0.0, 0.0, mt.sigma, mt.tau, mt.rho};
        probe.validate();
    }
    const bool wants_classical =
        std::find(methods.begin(), methods.end(), Method::Classical) != methods.end() ||
        ratio_baseline == Method::Classical;
    if (wants_classical && !classical_sd)
        throw ConfigError("sim: the Classical method needs classical_sd");
    if (classical_sd && !(*classical_sd > 0.0))
        throw ConfigError("sim: classical_sd must be > 0");
    if (ratio_baseline && *ratio_baseline != Method::Classical &&
        *ratio_baseline != Method::Debiased)
        throw ConfigError("sim: ratio_baseline must be classical or debiased");
    if (theta0_sd < 0.0) throw ConfigError("sim: theta0_sd must be >= 0");
    npmle.validate();
}

Method SimConfig::baseline() const {
    if (ratio_baseline) return *ratio_baseline;
    if (std::find(methods.begin(), methods.end(), Method::Classical) != methods.end())
        return Method::Classical;
    return Method::Debiased;
}

namespace {

// Variate slots per (replicate, task); fixed so draws never shift when
// methods are added or removed.
enum Slot : std::uint32_t {
    kSlotTheta0 = 0,
    kSlotBias = 1,
    kSlotEps1 = 2,
    kSlotEps2 = 3,
    kSlotClassical = 4
};

double draw_bias(const Prior& prior, const CounterRng& rng, std::uint64_t rep,
                 std::uint64_t task) {
    if (const auto* np = std::get_if<NormalPrior>(&prior))
        return np->mu + std::sqrt(np->a) * rng.normal(rep, task, kSlotBias);
    const auto& dp = std::get<DiscretePrior>(prior);
    const double u = rng.uniform(rep, task, kSlotBias);
    double acc = 0.0;
    for (std::size_t k = 0; k < dp.size(); ++k) {
        acc += dp.weights()[k];
        if (u <= acc) return dp.atoms()[k];
    }
    return dp.atoms().back();
}

}  // namespace

std::vector<SimDraw> generate_replicate(const SimConfig& cfg, int replicate_index) {
    cfg.validate();
    const CounterRng rng(cfg.seed);
    const auto rep = static_cast<std::uint64_t>(replicate_index);

    std::vector<SimDraw> out;
    out.reserve(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        const auto ti = static_cast<std::uint64_t>(i);
        const MomentTriple& mt = cfg.moment_for(i);

        const double theta0 = cfg.theta0_mean + cfg.theta0_sd * rng.normal(rep, ti, kSlotTheta0);
        const double b = draw_bias(cfg.true_prior, rng, rep, ti);
        const double theta = theta0 - b;

        const double e1 = rng.normal(rep, ti, kSlotEps1);
        const double e2 = rng.normal(rep, ti, kSlotEps2);

        SimDraw draw;
        draw.task.id = "r" + std::to_string(replicate_index) + "_t" + std::to_string(i);
        draw.task.sigma = mt.sigma;
        draw.task.tau = mt.tau;
        draw.task.rho = mt.rho;
        draw.task.theta_b_hat = theta + b + mt.sigma * e1;
        draw.task.b_hat = b + mt.tau * (mt.rho * e1 + std::sqrt(1.0 - mt.rho * mt.rho) * e2);
        draw.theta = theta;
        if (cfg.classical_sd)
            draw.classical_hat = theta + *cfg.classical_sd * rng.normal(rep, ti, kSlotClassical);
        out.push_back(std::move(draw));
    }
    return out;
}

namespace {

struct CellAccum {
    KahanSum covered, width, ratio;
};

struct ReplicateStats {
    bool failed = false;
    // methods-major, alphas-minor triples of replicate means
    std::vector<double> coverage, width, ratio;
};

IntervalReport method_interval(Method method, const SimConfig& cfg, const SimDraw& draw,
                               double alpha, const Prior* rb_normal, const Prior* rb_npmle) {
    switch (method) {
        case Method::Classical:
            return wald_interval(draw.task.id, draw.classical_hat, *cfg.classical_sd, alpha,
                                 Method::Classical);
        case Method::PredMean:
            return wald_interval(draw.task.id, draw.task.theta_b_hat, draw.task.sigma, alpha,
                                 Method::PredMean);
        case Method::Debiased:
            return wald_interval(draw.task.id, draw.task.debiased(), draw.task.sigma_tilde(),
                                 alpha, Method::Debiased);
        case Method::Oracle:
            return rebias_interval(cfg.true_prior, draw.task, alpha, Method::Oracle);
        case Method::RBNormal:
            return rebias_interval(*rb_normal, draw.task, alpha, Method::RBNormal);
        case Method::RBNPMLE:
            return rebias_interval(*rb_npmle, draw.task, alpha, Method::RBNPMLE);
    }
    throw ConfigError("sim: unknown method");
}

ReplicateStats run_replicate(const SimConfig& cfg, int replicate_index) {
    ReplicateStats stats;
    const std::size_t n_methods = cfg.methods.size();
    const std::size_t n_alphas = cfg.alphas.size();
    stats.coverage.assign(n_methods * n_alphas, 0.0);
    stats.width.assign(n_methods * n_alphas, 0.0);
    stats.ratio.assign(n_methods * n_alphas, 0.0);

    const auto draws = generate_replicate(cfg, replicate_index);

    const bool want_normal =
        std::find(cfg.methods.begin(), cfg.methods.end(), Method::RBNormal) != cfg.methods.end();
    const bool want_npmle =
        std::find(cfg.methods.begin(), cfg.methods.end(), Method::RBNPMLE) != cfg.methods.end();

    std::optional<Prior> rb_normal, rb_npmle;
    if (want_normal || want_npmle) {
        std::vector<double> b_hats, taus;
        b_hats.reserve(draws.size());
        taus.reserve(draws.size());
        for (const auto& d : draws) {
            b_hats.push_back(d.task.b_hat);
            taus.push_back(d.task.tau);
        }
        if (want_normal) rb_normal = Prior(fit_normal(b_hats, taus));
        if (want_npmle) {
            auto [prior, diag] = fit_npmle(b_hats, taus, cfg.npmle);
            if (!diag.converged)
                throw Error("replicate " + std::to_string(replicate_index) +
                            ": NPMLE did not converge (kkt_sup=" + std::to_string(diag.kkt_sup) +
                            ")");
            rb_npmle = Prior(std::move(prior));
        }
    }

    const Method baseline = cfg.baseline();
    std::vector<CellAccum> acc(n_methods * n_alphas);
    const Prior* pn = rb_normal ? &*rb_normal : nullptr;
    const Prior* pd = rb_npmle ? &*rb_npmle : nullptr;

    for (const auto& draw : draws) {
        for (std::size_t ai = 0; ai < n_alphas; ++ai) {
            const double alpha = cfg.alphas[ai];
            const double base_width =
                method_interval(baseline, cfg, draw, alpha, pn, pd).width();
            for (std::size_t mi = 0; mi < n_methods; ++mi) {
                const IntervalReport rep =
                    method_interval(cfg.methods[mi], cfg, draw, alpha, pn, pd);
                CellAccum& cell = acc[mi * n_alphas + ai];
                cell.covered.add(rep.covers(draw.theta) ? 1.0 : 0.0);
                cell.width.add(rep.width());
                cell.ratio.add(rep.width() / base_width);
            }
        }
    }

    const double inv_n = 1.0 / static_cast<double>(draws.size());
    for (std::size_t j = 0; j < acc.size(); ++j) {
        stats.coverage[j] = acc[j].covered.value() * inv_n;
        stats.width[j] = acc[j].width.value() * inv_n;
        stats.ratio[j] = acc[j].ratio.value() * inv_n;
    }
    return stats;
}

void aggregate(const std::vector<double>& per_rep, double& mean_out, double& se_out) {
    const std::size_t k = per_rep.size();
    KahanSum s;
    for (double v : per_rep) s.add(v);
    const double mean = s.value() / static_cast<double>(k);
    KahanSum sq;
    for (double v : per_rep) sq.add((v - mean) * (v - mean));
    const double sd = (k > 1) ? std::sqrt(sq.value() / static_cast<double>(k - 1)) : 0.0;
    mean_out = mean;
    se_out = sd / std::sqrt(static_cast<double>(k));
}

}  // namespace

SimResult run_simulation(const SimConfig& cfg) {
    cfg.validate();
    const std::size_t n_methods = cfg.methods.size();
    const std::size_t n_alphas = cfg.alphas.size();

    std::vector<ReplicateStats> all(static_cast<std::size_t>(cfg.replicates));
    const int n_threads = std::max(1, std::min(cfg.threads, cfg.replicates));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= cfg.replicates) return;
            try {
                all[static_cast<std::size_t>(r)] = run_replicate(cfg, r);
            } catch (const std::exception&) {
                all[static_cast<std::size_t>(r)].failed = true;
            }
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SimResult result;
    result.methods = cfg.methods;
    result.alphas = cfg.alphas;
    result.baseline = cfg.baseline();
    result.cells.resize(n_methods * n_alphas);

    std::vector<double> scratch;
    for (std::size_t j = 0; j < result.cells.size(); ++j) {
        MetricCell& cell = result.cells[j];
        auto collect = [&](const auto& member) {
            scratch.clear();
            for (const auto& rep : all)
                if (!rep.failed) scratch.push_back((rep.*member)[j]);
        };
        collect(&ReplicateStats::coverage);
        if (scratch.empty()) throw Error("sim: every replicate failed");
        aggregate(scratch, cell.coverage, cell.coverage_se);
        collect(&ReplicateStats::width);
        aggregate(scratch, cell.width, cell.width_se);
        collect(&ReplicateStats::ratio);
        aggregate(scratch, cell.width_ratio, cell.width_ratio_se);
    }
    for (const auto& rep : all) (rep.failed ? result.replicates_failed : result.replicates_done)++;
    return result;
}

const MetricCell& SimResult::cell(Method m, double alpha) const {
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        if (methods[mi] != m) continue;
        for (std::size_t ai = 0; ai < alphas.size(); ++ai)
            if (alphas[ai] == alpha) return cell(mi, ai);
    }
    throw Error("SimResult: no cell for requested method/alpha");
}

namespace {

std::string format_sig(double x, int digits) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, digits);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string emit_report(const SimResult& result, ReportFormat format) {
    if (format == ReportFormat::CSV) {
        std::string out =
            "method,alpha,coverage,coverage_se,width,width_se,width_ratio,width_ratio_se\n";
        for (std::size_t mi = 0; mi < result.methods.size(); ++mi) {
            for (std::size_t ai = 0; ai < result.alphas.size(); ++ai) {
                const MetricCell& c = result.cell(mi, ai);
                out += method_name(result.methods[mi]);
                out += ',';
                out += format_sig(result.alphas[ai], 6);
                for (double v : {c.coverage, c.coverage_se, c.width, c.width_se, c.width_ratio,
                                 c.width_ratio_se}) {
                    out += ',';
                    out += format_sig(v, 6);
                }
                out += '\n';
            }
        }
        return out;
    }

    nlohmann::json j;
    j["baseline"] = method_name(result.baseline);
    j["replicates_done"] = result.replicates_done;
    j["replicates_failed"] = result.replicates_failed;
    j["alphas"] = result.alphas;
    j["methods"] = nlohmann::json::array();
    for (Method m : result.methods) j["methods"].push_back(method_name(m));
    auto& cells = j["cells"] = nlohmann::json::array();
    for (std::size_t mi = 0; mi < result.methods.size(); ++mi) {
        for (std::size_t ai = 0; ai < result.alphas.size(); ++ai) {
            const MetricCell& c = result.cell(mi, ai);
            cells.push_back({{"method", method_name(result.methods[mi])},
                             {"alpha", result.alphas[ai]},
                             {"coverage", c.coverage},
                             {"coverage_se", c.coverage_se},
                             {"width", c.width},
                             {"width_se", c.width_se},
                             {"width_ratio", c.width_ratio},
                             {"width_ratio_se", c.width_ratio_se}});
        }
    }
    return j.dump(2) + "\n";
}

SimResult parse_report_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    SimResult result;
    const auto baseline = method_from_name(j.at("baseline").get<std::string>());
    if (!baseline) throw ParseError("report: unknown baseline method", 0);
    result.baseline = *baseline;
    result.replicates_done = j.at("replicates_done").get<int>();
    result.replicates_failed = j.at("replicates_failed").get<int>();
    result.alphas = j.at("alphas").get<std::vector<double>>();
    for (const auto& name : j.at("methods")) {
        const auto m = method_from_name(name.get<std::string>());
        if (!m) throw ParseError("report: unknown method " + name.get<std::string>(), 0);
        result.methods.push_back(*m);
    }
    result.cells.resize(result.methods.size() * result.alphas.size());
    std::size_t idx = 0;
    for (const auto& c : j.at("cells")) {
        if (idx >= result.cells.size()) throw ParseError("report: too many cells", 0);
        MetricCell& cell = result.cells[idx++];
        cell.coverage = c.at("coverage").get<double>();
        cell.coverage_se = c.at("coverage_se").get<double>();
        cell.width = c.at("width").get<double>();
        cell.width_se = c.at("width_se").get<double>();
        cell.width_ratio = c.at("width_ratio").get<double>();
        cell.width_ratio_se = c.at("width_ratio_se").get<double>();
    }
    if (idx != result.cells.size()) throw ParseError("report: missing cells", 0);
    return result;
}

}  // namespace rebias
