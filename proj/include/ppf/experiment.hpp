#pragma once

#include "ppf/filters.hpp"
#include "ppf/partitioning.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ppf {

enum class FilterKind { Kalman, Sir, Ppf, Appf };

FilterKind parse_filter(const std::string& s);
std::string to_string(FilterKind f);

struct ExperimentConfig {
    // model
    double sigma = 1.0;
    double rho = 0.28;
    double beta = 8.0 / 3.0;
    double g = 0.5;
    int a0 = 0;
    double T = 0.5;
    Vec3 initial_mean = Vec3::Ones();

    // filter
    FilterKind filter = FilterKind::Ppf;
    PropagatorKind propagator = PropagatorKind::KlvFlow;
    int cubature_degree = 5;
    std::string cubature_file;  // empty: built-in degree 3 or the shipped degree-5 table
    int init_nodes = 8;         // Gauss-Hermite nodes per axis for the initial cubature measure
    Eigen::Index particles = 10000;  // SIR sample size
    std::uint64_t seed = 1;
    int cycles = 1;

    // partition
    PartitionKind partition = PartitionKind::Adaptive;
    double gamma = 6.0;  // Kusuoka exponent
    int steps = 8;       // Kusuoka step count
    LikelihoodScale likelihood_scale = LikelihoodScale::Peak;
    double floor_fraction = 1.0 / 1048576.0;

    // recombination
    bool recombination = true;
    int recomb_degree = 5;
    PatchMode patch_mode = PatchMode::Adaptive;
    int patch_depth = 0;  // fixed depth, or starting depth in adaptive mode
    int max_depth = 4;
    std::optional<double> theta;  // default 0.3 eps, 0.2 eps for FGC
    double budget_constant = 1e-3;  // smallest power of ten above the worst calibrated error/bound ratio
    std::optional<bool> localize;  // default: false for PPF, true for APPF

    // splitting
    std::optional<double> tau;  // unset: auto-tune
    std::optional<double> tau_cap;  // default eps
    std::optional<double> tau_rel_cap;  // default 10 eps
    double leap_band_lo = 0.25;
    double leap_band_hi = 1.0 / 3.0;
    LeapMode leap_mode = LeapMode::TwoStage;
    TerminalMerge terminal_merge = TerminalMerge::Deferred;

    // sweep
    std::vector<double> R = {1e-2};
    std::vector<double> D = {1.0};
    std::vector<double> epsilon = {1e-3};
    std::vector<int> moments = {1, 2, 3, 4};

    // output
    std::string output;        // CSV path; empty: stdout only via the CLI
    std::string summary;       // summary text path
    std::string particle_dump; // directory for final posterior particle tables

    double theta_for(double eps) const;
    AffineSDEModel model(double R) const;
    void validate() const;
};

/// Parse a JSON config. Unknown keys and ill-typed values throw ConfigError
/// naming the field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct ResultRow {
    std::string filter;
    std::string propagator;
    int m = 0;
    double R = 0.0;
    double D = 0.0;
    double epsilon = 0.0;
    int cycle = 0;
    int p = 0;
    std::size_t k = 0;
    double rmse_prior = 0.0;
    double rmse_posterior = 0.0;
    Eigen::Index particles = 0;   // prior support at the observation time
    Eigen::Index recombined = 0;  // particles entering reduced patches this cycle
    Eigen::Index removed = 0;
    std::size_t max_patches = 0;
    int deepest = 0;
    Eigen::Index leapers = 0;
};

struct PointSummary {
    double R = 0.0;
    double D = 0.0;
    double epsilon = 0.0;
    double max_rmse_posterior = 0.0;
    Eigen::Index recombined = 0;
    double seconds = 0.0;  // wall time, informational
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<PointSummary> points;
    std::vector<std::string> invariant_failures;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Rows in sweep order, stable columns, 17 significant digits. Wall time
/// stays out of the CSV so that fixed-seed runs compare byte for byte.
void write_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_summary(std::ostream& os, const ExperimentResult& res);
/// Writes CSV and summary to the configured paths (and particle tables when a
/// dump directory was set during the run).
void emit_report(const ExperimentConfig& cfg, const ExperimentResult& res);

struct PartitionRow {
    double R = 0.0;
    double epsilon = 0.0;
    std::size_t k = 0;
    double min_step = 0.0;
    double max_step = 0.0;
};

std::vector<PartitionRow> run_partition_table(const ExperimentConfig& cfg);
void write_partition_csv(std::ostream& os, const std::vector<PartitionRow>& rows);

/// Relative L2 error in percent of the p-th moment of mu against a Gaussian:
/// mean vector for p = 1, central moments for p >= 2. Odd central moments of
/// a Gaussian vanish, so those are scaled by |C^(2)|^(p/2) instead.
double moment_rmse_percent(const DiscreteMeasure& mu, const GaussianBelief& exact, int p);

/// Propagator for the configured scheme and degree.
Propagator make_propagator(const ExperimentConfig& cfg, const AffineSDEModel& model);
Partition make_partition(const ExperimentConfig& cfg, const Propagator& prop, double eps);
/// Gauss-Hermite tensor measure of the belief, `nodes` per axis.
DiscreteMeasure cubature_measure(const GaussianBelief& b, int nodes);

}  // namespace ppf
