#include "rebias/table_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace rebias {

std::string format_double(double x, int digits) {
    char buf[64];
    auto res = (digits > 0)
                   ? std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, digits)
                   : std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_number(const std::string& field, std::size_t line_no, const std::string& what) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ParseError("invalid number for " + what + ": '" + field + "'", line_no);
    return value;
}

// Strict line-by-line table reader: exact header, exact field count, no
// quoting. Trailing \r is tolerated; blank trailing line is tolerated.
class TableReader {
public:
    TableReader(const std::string& path, char delim, const std::vector<std::string>& header)
        : path_(path), delim_(delim) {
        text_ = read_text_file(path);
        std::string line;
        if (!next_raw_line(line)) throw ParseError("empty file: " + path, 1);
        const auto fields = split_fields(line, delim_);
        if (fields != header) {
            std::string expect;
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (i) expect += delim_;
                expect += header[i];
            }
            throw ParseError("bad header in " + path + " (expected '" + expect + "', got '" +
                                 line + "')",
                             1);
        }
        n_fields_ = header.size();
    }

    bool next_row(std::vector<std::string>& fields) {
        std::string line;
        for (;;) {
            if (!next_raw_line(line)) return false;
            if (line.empty() && pos_ >= text_.size()) return false;  // trailing newline
            break;
        }
        fields = split_fields(line, delim_);
        if (fields.size() != n_fields_)
            throw ParseError("expected " + std::to_string(n_fields_) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no_);
        return true;
    }

    std::size_t line_no() const { return line_no_; }

private:
    bool next_raw_line(std::string& line) {
        if (pos_ >= text_.size()) return false;
        const std::size_t nl = text_.find('\n', pos_);
        if (nl == std::string::npos) {
            line = text_.substr(pos_);
            pos_ = text_.size();
        } else {
            line = text_.substr(pos_, nl - pos_);
            pos_ = nl + 1;
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no_;
        return true;
    }

    std::string path_;
    std::string text_;
    char delim_;
    std::size_t n_fields_ = 0;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

}  // namespace

std::vector<FitInputRow> read_fit_input_csv(const std::string& path) {
    TableReader reader(path, ',', {"id", "b_hat", "tau"});
    std::vector<FitInputRow> rows;
    std::vector<std::string> f;
    while (reader.next_row(f)) {
        FitInputRow row;
        row.id = f[0];
        row.b_hat = parse_number(f[1], reader.line_no(), "b_hat");
        row.tau = parse_number(f[2], reader.line_no(), "tau");
        if (!(row.tau > 0.0)) throw ParseError("tau must be > 0", reader.line_no());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<TaskSummary> read_task_summary_csv(const std::string& path) {
    TableReader reader(path, ',', {"id", "theta_b_hat", "b_hat", "sigma", "tau", "rho"});
    std::vector<TaskSummary> rows;
    std::vector<std::string> f;
    while (reader.next_row(f)) {
        TaskSummary t;
        t.id = f[0];
        t.theta_b_hat = parse_number(f[1], reader.line_no(), "theta_b_hat");
        t.b_hat = parse_number(f[2], reader.line_no(), "b_hat");
        t.sigma = parse_number(f[3], reader.line_no(), "sigma");
        t.tau = parse_number(f[4], reader.line_no(), "tau");
        t.rho = parse_number(f[5], reader.line_no(), "rho");
        try {
            t.validate();
        } catch (const InvalidTask& e) {
            throw ParseError(e.what(), reader.line_no());
        }
        rows.push_back(std::move(t));
    }
    return rows;
}

std::vector<PPITask> read_ppi_long_csv(const std::string& path) {
    TableReader reader(path, ',', {"task_id", "split", "y", "pred"});
    std::vector<PPITask> tasks;
    std::vector<std::string> f;
    auto task_of = [&](const std::string& id) -> PPITask& {
        for (auto& t : tasks)
            if (t.id == id) return t;
        tasks.push_back(PPITask{id, {}, {}, {}});
        return tasks.back();
    };
    while (reader.next_row(f)) {
        PPITask& task = task_of(f[0]);
        const double pred = parse_number(f[3], reader.line_no(), "pred");
        if (f[1] == "labeled") {
            if (f[2].empty()) throw ParseError("labeled row is missing y", reader.line_no());
            task.labeled_y.push_back(parse_number(f[2], reader.line_no(), "y"));
            task.labeled_pred.push_back(pred);
        } else if (f[1] == "unlabeled") {
            if (!f[2].empty())
                throw ParseError("unlabeled row must have empty y", reader.line_no());
            task.unlabeled_pred.push_back(pred);
        } else {
            throw ParseError("split must be labeled or unlabeled, got '" + f[1] + "'",
                             reader.line_no());
        }
    }
    return tasks;
}

std::vector<GwasRecord> read_gwas_tsv(const std::string& path) {
    TableReader reader(path, '\t',
                       {"snp_id", "beta_direct", "beta_parental", "se_direct", "se_parental",
                        "corr"});
    std::vector<GwasRecord> rows;
    std::vector<std::string> f;
    while (reader.next_row(f)) {
        GwasRecord rec;
        rec.snp_id = f[0];
        rec.theta_ub_hat = parse_number(f[1], reader.line_no(), "beta_direct");
        rec.b_hat = parse_number(f[2], reader.line_no(), "beta_parental");
        rec.sigma_tilde = parse_number(f[3], reader.line_no(), "se_direct");
        rec.tau = parse_number(f[4], reader.line_no(), "se_parental");
        rec.gamma = parse_number(f[5], reader.line_no(), "corr");
        if (!(rec.sigma_tilde > 0.0) || !(rec.tau > 0.0))
            throw ParseError("standard errors must be > 0", reader.line_no());
        rows.push_back(std::move(rec));
    }
    return rows;
}

nlohmann::json prior_to_json(const Prior& prior) {
    nlohmann::json j;
    if (const auto* np = std::get_if<NormalPrior>(&prior)) {
        j["kind"] = "normal";
        j["mu"] = np->mu;
        j["a"] = np->a;
    } else {
        const auto& dp = std::get<DiscretePrior>(prior);
        j["kind"] = "discrete";
        j["atoms"] = dp.atoms();
        j["weights"] = dp.weights();
    }
    return j;
}

Prior prior_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw InvalidPrior("prior JSON: missing kind");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "normal") {
        NormalPrior np{j.at("mu").get<double>(), j.at("a").get<double>()};
        np.validate();
        return np;
    }
    if (kind == "discrete") {
        return DiscretePrior(j.at("atoms").get<std::vector<double>>(),
                             j.at("weights").get<std::vector<double>>());
    }
    throw InvalidPrior("prior JSON: unknown kind '" + kind + "'");
}

Prior read_prior_json(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidPrior("prior file " + path + ": " + e.what());
    }
    return prior_from_json(j);
}

namespace {

MomentTriple moment_from_json(const nlohmann::json& j) {
    return MomentTriple{j.at("sigma").get<double>(), j.at("tau").get<double>(),
                        j.at("rho").get<double>()};
}

}  // namespace

nlohmann::json sim_config_to_json(const SimConfig& cfg) {
    nlohmann::json j;
    j["n"] = cfg.n;
    j["K"] = cfg.replicates;
    j["seed"] = cfg.seed;
    j["true_prior"] = prior_to_json(cfg.true_prior);
    j["theta0_mean"] = cfg.theta0_mean;
    j["theta0_sd"] = cfg.theta0_sd;
    if (cfg.moments.size() == 1) {
        j["moments"] = {{"sigma", cfg.moments[0].sigma},
                        {"tau", cfg.moments[0].tau},
                        {"rho", cfg.moments[0].rho}};
    } else {
        auto& arr = j["moments"] = nlohmann::json::array();
        for (const auto& mt : cfg.moments)
            arr.push_back({{"sigma", mt.sigma}, {"tau", mt.tau}, {"rho", mt.rho}});
    }
    j["alphas"] = cfg.alphas;
    auto& ms = j["methods"] = nlohmann::json::array();
    for (Method m : cfg.methods) ms.push_back(method_name(m));
    if (cfg.classical_sd) j["classical_sd"] = *cfg.classical_sd;
    if (cfg.ratio_baseline) j["ratio_baseline"] = method_name(*cfg.ratio_baseline);
    j["npmle"] = {{"grid_size", cfg.npmle.grid_size},
                  {"max_iters", cfg.npmle.max_iters},
                  {"tol_loglik", cfg.npmle.tol_loglik},
                  {"tol_kkt", cfg.npmle.tol_kkt}};
    if (cfg.npmle.grid_lo) j["npmle"]["grid_lo"] = *cfg.npmle.grid_lo;
    if (cfg.npmle.grid_hi) j["npmle"]["grid_hi"] = *cfg.npmle.grid_hi;
    return j;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig cfg;
    try {
        cfg.n = j.at("n").get<int>();
        cfg.replicates = j.contains("K") ? j.at("K").get<int>() : j.at("replicates").get<int>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.true_prior = prior_from_json(j.at("true_prior"));
        if (j.contains("theta0_mean")) cfg.theta0_mean = j.at("theta0_mean").get<double>();
        if (j.contains("theta0_sd")) cfg.theta0_sd = j.at("theta0_sd").get<double>();
        const auto& mj = j.at("moments");
        if (mj.is_array()) {
            for (const auto& one : mj) cfg.moments.push_back(moment_from_json(one));
        } else {
            cfg.moments.push_back(moment_from_json(mj));
        }
        cfg.alphas = j.at("alphas").get<std::vector<double>>();
        for (const auto& name : j.at("methods")) {
            const auto m = method_from_name(name.get<std::string>());
            if (!m) throw ConfigError("sim config: unknown method '" +
                                      name.get<std::string>() + "'");
            cfg.methods.push_back(*m);
        }
        if (j.contains("classical_sd")) cfg.classical_sd = j.at("classical_sd").get<double>();
        if (j.contains("ratio_baseline")) {
            const auto m = method_from_name(j.at("ratio_baseline").get<std::string>());
            if (!m) throw ConfigError("sim config: unknown ratio_baseline");
            cfg.ratio_baseline = *m;
        }
        if (j.contains("npmle")) {
            const auto& nj = j.at("npmle");
            if (nj.contains("grid_size")) cfg.npmle.grid_size = nj.at("grid_size").get<int>();
            if (nj.contains("grid_lo")) cfg.npmle.grid_lo = nj.at("grid_lo").get<double>();
            if (nj.contains("grid_hi")) cfg.npmle.grid_hi = nj.at("grid_hi").get<double>();
            if (nj.contains("max_iters")) cfg.npmle.max_iters = nj.at("max_iters").get<int>();
            if (nj.contains("tol_loglik"))
                cfg.npmle.tol_loglik = nj.at("tol_loglik").get<double>();
            if (nj.contains("tol_kkt")) cfg.npmle.tol_kkt = nj.at("tol_kkt").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sim config: ") + e.what());
    }
    return cfg;
}

namespace {

struct TomlCursor {
    const std::string& text;
    std::size_t pos = 0;
    std::size_t line_no = 0;

    bool next_line(std::string& line) {
        if (pos >= text.size()) return false;
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            line = text.substr(pos);
            pos = text.size();
        } else {
            line = text.substr(pos, nl - pos);
            pos = nl + 1;
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        return true;
    }
};

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// Drops a trailing # comment that is outside any string literal.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

nlohmann::json toml_scalar(const std::string& raw, std::size_t line_no) {
    const std::string v = strip(raw);
    if (v.empty()) throw ParseError("toml: empty value", line_no);
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ParseError("toml: unterminated string", line_no);
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    // integers stay integral so seeds and counts load exactly
    if (v.find_first_of(".eE") == std::string::npos) {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
        if (ec == std::errc() && p == v.data() + v.size()) return i;
    }
    double d = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ParseError("toml: cannot parse value '" + v + "'", line_no);
    return d;
}

}  // namespace

nlohmann::json toml_subset_to_json(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* current = &root;
    TomlCursor cur{text};
    std::string line;
    while (cur.next_line(line)) {
        line = strip(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("toml: bad table header", cur.line_no);
            const std::string name = strip(line.substr(1, line.size() - 2));
            if (name.empty()) throw ParseError("toml: empty table name", cur.line_no);
            current = &root[name];
            if (current->is_null()) *current = nlohmann::json::object();
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("toml: expected key = value", cur.line_no);
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty()) throw ParseError("toml: empty key", cur.line_no);
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']')
                throw ParseError("toml: arrays must close on the same line", cur.line_no);
            nlohmann::json arr = nlohmann::json::array();
            const std::string inner = strip(value.substr(1, value.size() - 2));
            if (!inner.empty()) {
                for (const std::string& item : split_fields(inner, ','))
                    arr.push_back(toml_scalar(item, cur.line_no));
            }
            (*current)[key] = std::move(arr);
        } else {
            (*current)[key] = toml_scalar(value, cur.line_no);
        }
    }
    return root;
}

nlohmann::json load_config_file(const std::string& path) {
    const std::string text = read_text_file(path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml")
        return toml_subset_to_json(text);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(m.config.dump())));
    nlohmann::json j;
    j["command"] = m.command;
    j["config_hash"] = std::string(hash);
    if (m.seed) j["seed"] = *m.seed;
    j["input_paths"] = m.input_paths;
    j["output_paths"] = m.output_paths;
    j["versions"] = m.version;
    j["wall_time_ms"] = m.wall_time_ms;
    return j;
}

}  // namespace rebias
