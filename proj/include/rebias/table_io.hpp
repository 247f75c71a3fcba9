#pragma once

// File I/O used by the CLI: strict delimited-table readers (malformed rows
// abort with their line number), prior JSON serialization, SimConfig
// loading from JSON or a TOML subset, and run manifests. All numeric
// formatting is locale-independent.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rebias/gwas.hpp"
#include "rebias/ppi.hpp"
#include "rebias/sim.hpp"
#include "rebias/types.hpp"

namespace rebias {

// Locale-independent float formatting (std::to_chars). digits <= 0 emits
// the shortest exact round-trip representation.
std::string format_double(double x, int digits = 0);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

struct FitInputRow {
    std::string id;
    double b_hat = 0.0;
    double tau = 0.0;
};

// CSV with header id,b_hat,tau.
std::vector<FitInputRow> read_fit_input_csv(const std::string& path);

// CSV with header id,theta_b_hat,b_hat,sigma,tau,rho.
std::vector<TaskSummary> read_task_summary_csv(const std::string& path);

// Long CSV with header task_id,split,y,pred; split is labeled/unlabeled and
// y must be empty exactly on unlabeled rows. Tasks keep first-appearance
// order.
std::vector<PPITask> read_ppi_long_csv(const std::string& path);

// TSV with header snp_id,beta_direct,beta_parental,se_direct,se_parental,corr.
std::vector<GwasRecord> read_gwas_tsv(const std::string& path);

// {"kind":"normal","mu":...,"a":...} or
// {"kind":"discrete","atoms":[...],"weights":[...]}.
nlohmann::json prior_to_json(const Prior& prior);
Prior prior_from_json(const nlohmann::json& j);
Prior read_prior_json(const std::string& path);

nlohmann::json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);

// Parses the TOML subset used for config files (sections, key = scalar,
// single-line scalar arrays) into the same JSON shape.
nlohmann::json toml_subset_to_json(const std::string& text);

// Loads a config by extension: .json -> JSON, .toml -> TOML subset.
nlohmann::json load_config_file(const std::string& path);

struct RunManifest {
    std::string command;
    nlohmann::json config;  // hashed into config_hash
    std::optional<std::uint64_t> seed;
    std::vector<std::string> input_paths;
    std::vector<std::string> output_paths;
    std::string version;
    std::int64_t wall_time_ms = 0;
};

std::uint64_t fnv1a64(const std::string& bytes);
nlohmann::json manifest_to_json(const RunManifest& m);

}  // namespace rebias
