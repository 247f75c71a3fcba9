#pragma once

// Domain types shared across the library: the per-task summary pair, the
// bias prior, and interval/p-value reports.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rebias {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidTask : Error { using Error::Error; };
struct InvalidPrior : Error { using Error::Error; };
struct BracketFailure : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct ZeroPredictorVariance : Error { using Error::Error; };
struct InvalidMoments : Error { using Error::Error; };
struct NonPositiveVariance : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct ParseError : Error {
    ParseError(const std::string& what, std::size_t line_number)
        : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
    std::size_t line = 0;
};

// One task's observed pair: a biased estimate of theta with standard
// deviation sigma, and an unbiased estimate of its bias with standard
// deviation tau; rho is their correlation.
struct TaskSummary {
    std::string id;
    double theta_b_hat = 0.0;
    double b_hat = 0.0;
    double sigma = 0.0;
    double tau = 0.0;
    double rho = 0.0;

    // Debiased estimate theta_b_hat - b_hat; unbiased for theta.
    double debiased() const { return theta_b_hat - b_hat; }

    // Variance of the debiased estimate.
    double sigma_tilde_sq() const { return sigma * sigma + tau * tau - 2.0 * rho * sigma * tau; }
    double sigma_tilde() const { return std::sqrt(sigma_tilde_sq()); }

    // Correlation of the debiased estimate with b_hat; in (-1,1) whenever
    // |rho| < 1.
    double gamma() const { return (rho * sigma - tau) / sigma_tilde(); }

    // Regression slope of (debiased - theta) on (b_hat - b); equals -1 at
    // rho = 0.
    double slope() const { return rho * sigma / tau - 1.0; }

    void validate() const {
        if (!std::isfinite(theta_b_hat) || !std::isfinite(b_hat) || !std::isfinite(sigma) ||
            !std::isfinite(tau) || !std::isfinite(rho))
            throw InvalidTask("task '" + id + "': non-finite field");
        if (!(sigma > 0.0)) throw InvalidTask("task '" + id + "': sigma must be > 0");
        if (!(tau > 0.0)) throw InvalidTask("task '" + id + "': tau must be > 0");
        if (!(std::fabs(rho) < 1.0)) throw InvalidTask("task '" + id + "': |rho| must be < 1");
        if (!(sigma_tilde_sq() > 0.0))
            throw InvalidTask("task '" + id + "': degenerate debiased variance");
    }
};

struct NormalPrior {
    double mu = 0.0;
    double a = 0.0;  // variance of the bias; a = 0 is a point mass at mu

    void validate() const {
        if (!std::isfinite(mu) || !std::isfinite(a) || a < 0.0)
            throw InvalidPrior("normal prior requires finite mu and a >= 0");
    }
};

// Discrete bias distribution: strictly increasing atoms carrying simplex
// weights. Construction sorts, merges duplicate atoms, prunes zero weights
// and renormalizes; inputs whose weights stray from the simplex by more
// than 1e-6 are rejected.
class DiscretePrior {
public:
    DiscretePrior(std::vector<double> atoms, std::vector<double> weights);

    static DiscretePrior point_mass(double atom) { return DiscretePrior({atom}, {1.0}); }

    const std::vector<double>& atoms() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }
    std::size_t size() const { return atoms_.size(); }

    double mean() const;

private:
    std::vector<double> atoms_;
    std::vector<double> weights_;
};

using Prior = std::variant<NormalPrior, DiscretePrior>;

enum class Method { Classical, PredMean, Debiased, RBNormal, RBNPMLE, Oracle };

const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

struct IntervalReport {
    std::string id;
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double alpha = 0.0;
    std::optional<double> p_value;
    Method method = Method::Debiased;

    double width() const { return hi - lo; }
    bool covers(double theta) const { return lo <= theta && theta <= hi; }
};

}  // namespace rebias
