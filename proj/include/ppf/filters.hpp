#pragma once

#include "ppf/flows.hpp"
#include "ppf/measure.hpp"
#include "ppf/partitioning.hpp"
#include "ppf/propagators.hpp"
#include "ppf/recombination.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ppf {

struct GaussianBelief {
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
};

struct KalmanStep {
    GaussianBelief prior;
    GaussianBelief posterior;
};

GaussianBelief kalman_predict(const GaussianBelief& b, const AffineSDEModel& model);
GaussianBelief kalman_update(const GaussianBelief& prior, const Vec3& y, const AffineSDEModel& model);
KalmanStep kalman_step(const GaussianBelief& belief, const Vec3& y, const AffineSDEModel& model);

/// Steady-state posterior covariance of the Riccati recursion, started from
/// `start` (identity by default); the mean is passed through unchanged.
GaussianBelief stationary_init(const AffineSDEModel& model, const Vec3& mean = Vec3::Zero(),
                               const Mat3& start = Mat3::Identity());

/// y = M + D * sqrt(diag C) componentwise.
struct ObservationPlan {
    double D = 1.0;
};
Vec3 place_observation(const GaussianBelief& prior, const ObservationPlan& plan);

/// Exact Gaussian sample of a belief (equal weights).
DiscreteMeasure sample_belief(const GaussianBelief& b, Eigen::Index M, std::uint64_t seed);

struct SirResult {
    DiscreteMeasure prior;       // propagated sample, equal weights
    DiscreteMeasure reweighted;  // prior sample after bootstrap reweighting
    DiscreteMeasure posterior;   // multinomial resample of `reweighted`
};

/// One SIR cycle: M ancestors drawn from mu, exact Gaussian transition,
/// reweighting by g^y, multinomial resampling. Deterministic in the seed.
SirResult sir_cycle(const DiscreteMeasure& mu, const Vec3& y, const AffineSDEModel& model, Eigen::Index M,
                    std::uint64_t seed);

/// Recombination policy used inside the cubature filters.
struct FilterRecomb {
    RecombConfig config;  // fixed or adaptive
    RecombBudget budget;  // used in adaptive mode
    bool enabled = true;
    /// Evaluate the budget at the actual observation instead of the sup over
    /// all observations.
    bool localize = false;
};

struct StepRecord {
    double t = 0.0;     // time of the recombination
    RecombStats stats;  // zero-initialized when recombination is disabled
    Eigen::Index leapers = 0;
    double leap_mass = 0.0;
    double tau = 0.0;
};

struct CycleResult {
    DiscreteMeasure prior;
    DiscreteMeasure posterior;
    std::vector<StepRecord> steps;
    Eigen::Index recombined_particles = 0;  // sum of particles entering reduced patches
    Eigen::Index removed_particles = 0;     // sum of particles_in - particles_out
};

/// Patched particle filter: for each step, recombine then propagate;
/// the prior at T is reweighted by g^y.
CycleResult ppf_cycle(const DiscreteMeasure& mu, const Vec3& y, const Propagator& prop, const Partition& partition,
                      const FilterRecomb& recomb);

enum class LeapMode {
    TwoStage,      // leapers go KLV(t_{j-1} -> t_j) then KLV(t_j -> T)
    ReuseOneStep,  // leapers reuse the one-step arrival KLV(t_{j-1} -> T)
};

LeapMode parse_leap_mode(const std::string& s);
std::string to_string(LeapMode m);

/// What happens to the leapers and the terminal stay cloud at T.
enum class TerminalMerge {
    Deferred,  // no recombination at T; the next cycle's first step reduces the union (as PPF does)
    Adaptive,  // recombine the union at T under the adaptive budget with t_remaining = 0
    Fixed,     // recombine the union at the deepest patch depth the stay cloud reached
};

TerminalMerge parse_terminal_merge(const std::string& s);
std::string to_string(TerminalMerge m);

struct SplitConfig {
    double tau = 0.0;          // fixed tolerance, likelihood units
    bool auto_tune = false;    // pick tau per step from the discrepancy quantile
    double band_lo = 0.25;     // target leap mass fraction
    double band_hi = 1.0 / 3.0;
    double tau_cap = 0.0;      // auto-tuned tau never exceeds this (normally epsilon); 0 = no cap
    /// Auto-tuned tau also stays below this fraction of the cloud's mean
    /// two-step likelihood integral; 0 = no relative cap.
    double tau_rel_cap = 0.0;
    LeapMode mode = LeapMode::TwoStage;
    TerminalMerge terminal = TerminalMerge::Deferred;

    void validate() const;
};

struct SplitResult {
    DiscreteMeasure leap;  // already propagated to T
    DiscreteMeasure stay;  // unchanged, still at t_j
    double tau = 0.0;
    double leap_mass = 0.0;
};

/// Per-particle discrepancies |(KLV(delta_x, T - t_{j-1}), g) - (KLV(KLV(delta_x, s_j), T - t_j), g)|.
Vec split_discrepancies(const DiscreteMeasure& mu, const Propagator& prop, double t_prev, double t_next, double T,
                        const GaussianTestFunction& g);

/// Splits mu at t_prev: particles with discrepancy < tau leap to T.
SplitResult split_measure(const DiscreteMeasure& mu, const Propagator& prop, double t_prev, double t_next, double T,
                          const GaussianTestFunction& g, const SplitConfig& cfg);

/// Adaptive patched particle filter. Leapers are collected at T and joined
/// with the terminal stay cloud as `split.terminal` says, then reweighted.
CycleResult appf_cycle(const DiscreteMeasure& mu, const Vec3& y, const Propagator& prop, const Partition& partition,
                       const FilterRecomb& recomb, const SplitConfig& split);

/// Log-likelihood values of g^y at the particles (scale does not affect the posterior).
Vec log_likelihood_values(const DiscreteMeasure& mu, const Vec3& y, double R);

}  // namespace ppf
