// rebias CLI: prior fitting, rebiasing task tables, Monte Carlo simulation,
// and the PPI / family-GWAS pipelines. Outputs are machine-readable CSV/JSON
// with a run manifest next to each primary output.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rebias/fit.hpp"
#include "rebias/gwas.hpp"
#include "rebias/math.hpp"
#include "rebias/model.hpp"
#include "rebias/ppi.hpp"
#include "rebias/sim.hpp"
#include "rebias/table_io.hpp"
#include "rebias/types.hpp"

namespace {

constexpr const char* kVersion = "rebias 0.1.0";

// Exit codes: 0 ok, 2 input parse, 3 fit not converged, 4 invalid prior
// file, 5 replicate failure under --strict, 6 inconsistent GWAS record.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kParse = 2,
    kNotConverged = 3,
    kBadPrior = 4,
    kStrictReplicate = 5,
    kBadRecord = 6
};

using Clock = std::chrono::steady_clock;

struct ManifestWriter {
    rebias::RunManifest manifest;
    Clock::time_point start = Clock::now();

    void write(const std::string& primary_output) {
        manifest.version = kVersion;
        manifest.wall_time_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
        rebias::write_text_file(primary_output + ".manifest.json",
                                rebias::manifest_to_json(manifest).dump(2) + "\n");
    }
};

std::string strip_json_ext(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
        return path.substr(0, path.size() - 5);
    return path;
}

std::string csv_escape_free(const std::string& id) {
    if (id.find(',') != std::string::npos || id.find('\n') != std::string::npos)
        throw rebias::Error("id contains a delimiter: '" + id + "'");
    return id;
}

std::string interval_row(const rebias::IntervalReport& rep) {
    std::string row = csv_escape_free(rep.id);
    row += ',';
    row += rebias::format_double(rep.alpha);
    row += ',';
    row += rebias::method_name(rep.method);
    for (double v : {rep.point, rep.lo, rep.hi}) {
        row += ',';
        row += rebias::format_double(v);
    }
    row += ',';
    if (rep.p_value) row += rebias::format_double(*rep.p_value);
    row += '\n';
    return row;
}

// ---------------------------------------------------------------- fit ----

struct FitArgs {
    std::string input, output;
    std::string prior_kind = "npmle";
    std::string curve_path, diag_path;
    rebias::NpmleConfig npmle;
};

int run_fit(const FitArgs& args) {
    ManifestWriter mw;
    mw.manifest.command = "fit";
    mw.manifest.input_paths = {args.input};

    const auto rows = rebias::read_fit_input_csv(args.input);
    if (rows.empty()) throw rebias::EmptyInput("fit: input has no rows");
    std::vector<double> b_hats, taus;
    for (const auto& r : rows) {
        b_hats.push_back(r.b_hat);
        taus.push_back(r.tau);
    }

    rebias::Prior prior = rebias::NormalPrior{};
    nlohmann::json diag_json;
    bool converged = true;
    if (args.prior_kind == "normal") {
        bool degenerate = false;
        prior = rebias::fit_normal(b_hats, taus, &degenerate);
        if (degenerate)
            std::cerr << "warning: all b_hat identical; variance pinned to 0\n";
        diag_json["kind"] = "normal";
        diag_json["degenerate"] = degenerate;
    } else {
        auto [fitted, diag] = rebias::fit_npmle(b_hats, taus, args.npmle);
        prior = std::move(fitted);
        diag_json["kind"] = "npmle";
        diag_json["final_loglik"] = diag.final_loglik;
        diag_json["iterations"] = diag.iterations;
        diag_json["kkt_sup"] = diag.kkt_sup;
        diag_json["converged"] = diag.converged;
        converged = diag.converged;
    }

    rebias::write_text_file(args.output, rebias::prior_to_json(prior).dump(2) + "\n");

    const std::string stem = strip_json_ext(args.output);
    const std::string diag_path =
        args.diag_path.empty() ? stem + ".diagnostics.json" : args.diag_path;
    rebias::write_text_file(diag_path, diag_json.dump(2) + "\n");

    // Implied-marginal overlay grid: the data range padded by 3 max tau.
    const auto [blo, bhi] = std::minmax_element(b_hats.begin(), b_hats.end());
    const double pad = 3.0 * *std::max_element(taus.begin(), taus.end());
    std::vector<double> grid(201);
    for (std::size_t i = 0; i < grid.size(); ++i)
        grid[i] = (*blo - pad) +
                  (*bhi - *blo + 2.0 * pad) * static_cast<double>(i) /
                      static_cast<double>(grid.size() - 1);
    const auto curve = rebias::implied_marginal_curve(prior, taus, grid);
    std::string curve_csv = "l,density\n";
    for (const auto& [l, d] : curve)
        curve_csv += rebias::format_double(l) + "," + rebias::format_double(d) + "\n";
    const std::string curve_path =
        args.curve_path.empty() ? stem + ".marginal.csv" : args.curve_path;
    rebias::write_text_file(curve_path, curve_csv);

    mw.manifest.config = {{"prior", args.prior_kind},
                          {"grid_size", args.npmle.grid_size},
                          {"max_iters", args.npmle.max_iters},
                          {"tol_loglik", args.npmle.tol_loglik},
                          {"tol_kkt", args.npmle.tol_kkt}};
    mw.manifest.output_paths = {args.output, diag_path, curve_path};
    mw.write(args.output);

    if (!converged) {
        std::cerr << "error: NPMLE did not converge within max_iters\n";
        return kNotConverged;
    }
    return kOk;
}

// ------------------------------------------------------------- rebias ----

struct RebiasArgs {
    std::string input, output;
    std::string prior_path;
    std::string fit_inline;  // "", "normal", "npmle"
    std::vector<double> alphas{0.05};
    std::optional<double> theta0;
    rebias::NpmleConfig npmle;
};

int run_rebias(const RebiasArgs& args) {
    ManifestWriter mw;
    mw.manifest.command = "rebias";
    mw.manifest.input_paths = {args.input};

    const auto tasks = rebias::read_task_summary_csv(args.input);
    if (tasks.empty()) throw rebias::EmptyInput("rebias: input has no rows");

    rebias::Prior prior = rebias::NormalPrior{};
    if (!args.fit_inline.empty()) {
        std::vector<double> b_hats, taus;
        for (const auto& t : tasks) {
            b_hats.push_back(t.b_hat);
            taus.push_back(t.tau);
        }
        if (args.fit_inline == "normal") {
            prior = rebias::fit_normal(b_hats, taus);
        } else {
            auto [fitted, diag] = rebias::fit_npmle(b_hats, taus, args.npmle);
            if (!diag.converged) {
                std::cerr << "error: inline NPMLE fit did not converge\n";
                return kNotConverged;
            }
            prior = std::move(fitted);
        }
    } else {
        prior = rebias::read_prior_json(args.prior_path);
        mw.manifest.input_paths.push_back(args.prior_path);
    }

    const rebias::Method method = std::holds_alternative<rebias::NormalPrior>(prior)
                                      ? rebias::Method::RBNormal
                                      : rebias::Method::RBNPMLE;
    std::string csv = "id,alpha,method,point,lo,hi,p_value\n";
    for (const auto& task : tasks) {
        for (double alpha : args.alphas) {
            rebias::IntervalReport rep = rebias::rebias_interval(prior, task, alpha, method);
            if (args.theta0) rep.p_value = rebias::rebias_pvalue(prior, task, *args.theta0);
            csv += interval_row(rep);
        }
    }
    rebias::write_text_file(args.output, csv);

    mw.manifest.config = {{"alphas", args.alphas},
                          {"fit_inline", args.fit_inline},
                          {"prior", args.prior_path}};
    if (args.theta0) mw.manifest.config["null"] = *args.theta0;
    mw.manifest.output_paths = {args.output};
    mw.write(args.output);
    return kOk;
}

// ----------------------------------------------------------- simulate ----

struct SimulateArgs {
    std::string config_path, output_prefix;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool strict = false;
};

int run_simulate(const SimulateArgs& args) {
    ManifestWriter mw;
    mw.manifest.command = "simulate";
    mw.manifest.input_paths = {args.config_path};

    const nlohmann::json config_json = rebias::load_config_file(args.config_path);
    rebias::SimConfig cfg = rebias::sim_config_from_json(config_json);
    if (args.seed) {
        cfg.seed = *args.seed;
    } else if (!config_json.contains("seed")) {
        std::cerr << "error: simulate needs a seed (--seed or a seed key in the config)\n";
        return kFailure;
    }
    cfg.threads = args.threads;

    const rebias::SimResult result = rebias::run_simulation(cfg);

    const std::string csv_path = args.output_prefix + ".csv";
    const std::string json_path = args.output_prefix + ".json";
    rebias::write_text_file(csv_path, rebias::emit_report(result, rebias::ReportFormat::CSV));
    rebias::write_text_file(json_path, rebias::emit_report(result, rebias::ReportFormat::JSON));

    mw.manifest.config = rebias::sim_config_to_json(cfg);
    mw.manifest.seed = cfg.seed;
    mw.manifest.output_paths = {csv_path, json_path};
    mw.write(csv_path);

    if (result.replicates_failed > 0) {
        std::cerr << "warning: " << result.replicates_failed << " of "
                  << (result.replicates_done + result.replicates_failed)
                  << " replicates failed\n";
        if (args.strict) return kStrictReplicate;
    }
    return kOk;
}

// ---------------------------------------------------------------- ppi ----

struct PpiArgs {
    std::string input, output;
    double alpha = 0.05;
    std::string v2_source = "labeled";
    std::string prior_kind = "both";
    std::string prior_out;
    rebias::NpmleConfig npmle;
};

int run_ppi(const PpiArgs& args) {
    ManifestWriter mw;
    mw.manifest.command = "ppi";
    mw.manifest.input_paths = {args.input};

    const auto tasks = rebias::read_ppi_long_csv(args.input);
    if (tasks.empty()) throw rebias::EmptyInput("ppi: input has no tasks");
    const rebias::V2Source v2src = (args.v2_source == "unlabeled")
                                       ? rebias::V2Source::Unlabeled
                                       : rebias::V2Source::Labeled;

    struct Prepared {
        const rebias::PPITask* task;
        rebias::PPIMoments mom;
        double lambda = 0.0;
        std::optional<rebias::TaskSummary> summary;
    };
    std::vector<Prepared> prepared;
    for (const auto& task : tasks) {
        if (task.m() < 2 || task.M() < 2) {
            std::cerr << "warning: task '" << task.id << "' skipped (needs m >= 2 and M >= 2)\n";
            continue;
        }
        Prepared p{&task, rebias::estimate_moments(task, v2src), 0.0, std::nullopt};
        try {
            p.lambda = rebias::power_tuning_lambda(p.mom);
        } catch (const rebias::ZeroPredictorVariance&) {
            std::cerr << "warning: task '" << task.id
                      << "' has zero predictor variance; falling back to lambda = 0\n";
            p.lambda = 0.0;
        }
        try {
            p.summary = rebias::to_task_summary(task, p.mom, p.lambda);
        } catch (const rebias::Error& e) {
            std::cerr << "warning: task '" << task.id
                      << "': rebiased methods unavailable (" << e.what() << ")\n";
        }
        prepared.push_back(std::move(p));
    }
    if (prepared.empty()) throw rebias::EmptyInput("ppi: no usable tasks");

    const bool want_normal = args.prior_kind == "normal" || args.prior_kind == "both";
    const bool want_npmle = args.prior_kind == "npmle" || args.prior_kind == "both";
    std::vector<double> b_hats, taus;
    for (const auto& p : prepared) {
        if (!p.summary) continue;
        b_hats.push_back(p.summary->b_hat);
        taus.push_back(p.summary->tau);
    }

    std::optional<rebias::Prior> prior_normal, prior_npmle;
    nlohmann::json priors_json;
    if (!b_hats.empty()) {
        if (want_normal && b_hats.size() >= 2) {
            prior_normal = rebias::Prior(rebias::fit_normal(b_hats, taus));
            priors_json["normal"] = rebias::prior_to_json(*prior_normal);
        }
        if (want_npmle) {
            auto [fitted, diag] = rebias::fit_npmle(b_hats, taus, args.npmle);
            if (!diag.converged) {
                std::cerr << "error: NPMLE fit did not converge\n";
                return kNotConverged;
            }
            prior_npmle = rebias::Prior(std::move(fitted));
            priors_json["npmle"] = rebias::prior_to_json(*prior_npmle);
        }
    }

    std::string csv = "id,alpha,method,point,lo,hi,p_value\n";
    for (const auto& p : prepared) {
        const auto [classical, pred_mean] = rebias::baseline_intervals(*p.task, args.alpha);
        csv += interval_row(classical);
        csv += interval_row(pred_mean);
        if (p.summary) {
            csv += interval_row(rebias::wald_interval(p.task->id, p.summary->debiased(),
                                                      p.summary->sigma_tilde(), args.alpha,
                                                      rebias::Method::Debiased));
            if (prior_normal)
                csv += interval_row(rebias::rebias_interval(*prior_normal, *p.summary,
                                                            args.alpha,
                                                            rebias::Method::RBNormal));
            if (prior_npmle)
                csv += interval_row(rebias::rebias_interval(*prior_npmle, *p.summary,
                                                            args.alpha,
                                                            rebias::Method::RBNPMLE));
        } else {
            // PT collapses onto the classical mean when lambda had to be 0.
            const double pt_sd = std::sqrt(rebias::pt_variance(p.mom, p.lambda));
            csv += interval_row(rebias::wald_interval(p.task->id,
                                                      rebias::mean_of(p.task->labeled_y), pt_sd,
                                                      args.alpha, rebias::Method::Debiased));
        }
    }
    rebias::write_text_file(args.output, csv);

    std::vector<std::string> outputs = {args.output};
    if (!args.prior_out.empty()) {
        rebias::write_text_file(args.prior_out, priors_json.dump(2) + "\n");
        outputs.push_back(args.prior_out);
    }

    mw.manifest.config = {{"alpha", args.alpha},
                          {"v2_source", args.v2_source},
                          {"prior", args.prior_kind}};
    mw.manifest.output_paths = outputs;
    mw.write(args.output);
    return kOk;
}

// --------------------------------------------------------------- gwas ----

struct GwasArgs {
    std::string input, output, summary;
    double q = 0.05;
    std::string prior_kind = "npmle";
    bool skip_bad = false;
    bool debug = false;
    rebias::NpmleConfig npmle{.grid_size = 300};
};

int run_gwas(const GwasArgs& args) {
    ManifestWriter mw;
    mw.manifest.command = "gwas";
    mw.manifest.input_paths = {args.input};

    const auto raw = rebias::read_gwas_tsv(args.input);
    std::vector<rebias::GwasRecord> records;
    std::size_t dropped = 0;
    for (const auto& rec : raw) {
        try {
            const rebias::TaskSummary converted = rebias::convert(rec);
            if (args.debug)
                std::cerr << "debug: " << rec.snp_id << " sigma=" << converted.sigma
                          << " rho=" << converted.rho << "\n";
            records.push_back(rec);
        } catch (const rebias::NonPositiveVariance& e) {
            if (!args.skip_bad) {
                std::cerr << "error: " << e.what() << " (use --skip-bad to drop such rows)\n";
                return kBadRecord;
            }
            std::cerr << "warning: dropped " << rec.snp_id << ": " << e.what() << "\n";
            ++dropped;
        }
    }

    const rebias::PriorKind kind = (args.prior_kind == "normal") ? rebias::PriorKind::Normal
                                                                 : rebias::PriorKind::NPMLE;
    const rebias::GwasReport report =
        rebias::rebias_gwas_pipeline(records, kind, args.q, args.npmle);

    std::string csv =
        "snp_id,p_rebias,p_direct,p_population,disc_rebias,disc_direct,disc_population\n";
    for (const auto& row : report.rows) {
        csv += csv_escape_free(row.snp_id);
        for (double p : {row.p_rebias, row.p_direct, row.p_population})
            csv += "," + rebias::format_double(p);
        for (bool d : {row.disc_rebias, row.disc_direct, row.disc_population})
            csv += d ? ",1" : ",0";
        csv += '\n';
    }
    rebias::write_text_file(args.output, csv);

    nlohmann::json summary = {{"q", args.q},
                              {"n_records", report.rows.size()},
                              {"n_dropped", dropped},
                              {"discoveries",
                               {{"rebias", report.n_rebias},
                                {"direct", report.n_direct},
                                {"population", report.n_population}}},
                              {"prior", rebias::prior_to_json(report.fitted_prior)}};
    std::vector<std::string> outputs = {args.output};
    if (!args.summary.empty()) {
        rebias::write_text_file(args.summary, summary.dump(2) + "\n");
        outputs.push_back(args.summary);
    }

    mw.manifest.config = {{"q", args.q},
                          {"prior", args.prior_kind},
                          {"skip_bad", args.skip_bad},
                          {"grid_size", args.npmle.grid_size}};
    mw.manifest.output_paths = outputs;
    mw.write(args.output);
    return kOk;
}

void add_npmle_flags(CLI::App* cmd, rebias::NpmleConfig& cfg) {
    cmd->add_option("--grid-size", cfg.grid_size, "NPMLE grid points");
    cmd->add_option("--grid-lo", cfg.grid_lo, "NPMLE grid lower endpoint (default: min b_hat)");
    cmd->add_option("--grid-hi", cfg.grid_hi, "NPMLE grid upper endpoint (default: max b_hat)");
    cmd->add_option("--max-iters", cfg.max_iters, "NPMLE iteration budget");
    cmd->add_option("--tol-loglik", cfg.tol_loglik, "relative log-likelihood tolerance");
    cmd->add_option("--tol-kkt", cfg.tol_kkt, "KKT certificate tolerance");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Empirical Bayes rebiasing for paired (biased, bias-estimate) summaries"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit = app.add_subcommand("fit", "fit the bias prior from (id,b_hat,tau) CSV");
    fit->add_option("--input", fit_args.input, "input CSV")->required();
    fit->add_option("--output", fit_args.output, "prior JSON output")->required();
    fit->add_option("--prior", fit_args.prior_kind, "prior family")
        ->check(CLI::IsMember({"npmle", "normal"}));
    fit->add_option("--marginal-curve", fit_args.curve_path, "marginal-density CSV path");
    fit->add_option("--diagnostics", fit_args.diag_path, "diagnostics JSON path");
    add_npmle_flags(fit, fit_args.npmle);

    RebiasArgs rb_args;
    CLI::App* rb = app.add_subcommand("rebias", "rebias a task-summary CSV");
    rb->add_option("--input", rb_args.input, "task summary CSV")->required();
    rb->add_option("--output", rb_args.output, "intervals CSV")->required();
    rb->add_option("--prior", rb_args.prior_path, "prior JSON file");
    rb->add_option("--fit-inline", rb_args.fit_inline, "fit the prior from the input")
        ->check(CLI::IsMember({"npmle", "normal"}));
    rb->add_option("--alpha", rb_args.alphas, "miscoverage levels")->delimiter(',');
    rb->add_option("--null", rb_args.theta0, "null value theta0 for p-values");
    add_npmle_flags(rb, rb_args.npmle);

    SimulateArgs sim_args;
    CLI::App* sim = app.add_subcommand("simulate", "run the Monte Carlo coverage study");
    sim->add_option("--config", sim_args.config_path, "SimConfig JSON or TOML")->required();
    sim->add_option("--output-prefix", sim_args.output_prefix, "output path prefix")->required();
    sim->add_option("--seed", sim_args.seed, "RNG seed (overrides the config)");
    sim->add_option("--threads", sim_args.threads, "worker threads (results are identical)");
    sim->add_flag("--strict", sim_args.strict, "fail on any replicate hard-failure");

    PpiArgs ppi_args;
    CLI::App* ppi = app.add_subcommand("ppi", "prediction-powered inference pipeline");
    ppi->add_option("--input", ppi_args.input, "long CSV (task_id,split,y,pred)")->required();
    ppi->add_option("--output", ppi_args.output, "intervals CSV")->required();
    ppi->add_option("--alpha", ppi_args.alpha, "miscoverage level");
    ppi->add_option("--v2-source", ppi_args.v2_source, "predictor-variance source")
        ->check(CLI::IsMember({"labeled", "unlabeled"}));
    ppi->add_option("--prior", ppi_args.prior_kind, "rebiasing prior family")
        ->check(CLI::IsMember({"normal", "npmle", "both"}));
    ppi->add_option("--prior-out", ppi_args.prior_out, "fitted prior JSON sidecar");
    add_npmle_flags(ppi, ppi_args.npmle);

    GwasArgs gwas_args;
    CLI::App* gwas = app.add_subcommand("gwas", "family-based GWAS discovery pipeline");
    gwas->add_option("--input", gwas_args.input, "summary-statistics TSV")->required();
    gwas->add_option("--output", gwas_args.output, "discovery CSV")->required();
    gwas->add_option("--summary", gwas_args.summary, "counts JSON");
    gwas->add_option("--q", gwas_args.q, "BH false discovery rate");
    gwas->add_option("--prior", gwas_args.prior_kind, "prior family")
        ->check(CLI::IsMember({"normal", "npmle"}));
    gwas->add_flag("--skip-bad", gwas_args.skip_bad, "drop inconsistent records");
    gwas->add_flag("--debug", gwas_args.debug, "print per-record conversions to stderr");
    add_npmle_flags(gwas, gwas_args.npmle);

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit->parsed()) return run_fit(fit_args);
        if (rb->parsed()) {
            if (rb_args.fit_inline.empty() == rb_args.prior_path.empty()) {
                std::cerr << "error: give exactly one of --prior or --fit-inline\n";
                return kFailure;
            }
            return run_rebias(rb_args);
        }
        if (sim->parsed()) return run_simulate(sim_args);
        if (ppi->parsed()) return run_ppi(ppi_args);
        if (gwas->parsed()) return run_gwas(gwas_args);
    } catch (const rebias::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kParse;
    } catch (const rebias::InvalidPrior& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadPrior;
    } catch (const rebias::NonPositiveVariance& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadRecord;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
