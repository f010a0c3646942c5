#pragma once

#include "ppf/flows.hpp"
#include "ppf/propagators.hpp"
#include "ppf/recombination.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ppf {

enum class PartitionKind { Kusuoka, Adaptive, Given };

struct Partition {
    std::vector<double> times;  // t_0 = 0 < ... < t_k = T
    PartitionKind kind = PartitionKind::Given;
    double gamma = 1.0;
    double epsilon = 0.0;

    std::size_t k() const { return times.empty() ? 0 : times.size() - 1; }
    double step(std::size_t j) const { return times.at(j) - times.at(j - 1); }  // j = 1..k
    std::vector<double> steps() const;
    double horizon() const { return times.back(); }
    void validate() const;
};

/// t_j = T (1 - (1 - j/k)^gamma); t_k = T exactly.
Partition kusuoka_partition(double T, int k, double gamma);

/// How the likelihood g^y is normalized. Density: the N(y, R I) density.
/// Peak: the same Gaussian scaled to peak value 1, so tolerances are
/// fractions of the likelihood maximum.
enum class LikelihoodScale { Density, Peak };

LikelihoodScale parse_likelihood_scale(const std::string& s);
std::string to_string(LikelihoodScale s);

/// h(x) = amp * exp(-1/2 (F x - y)^T S^{-1} (F x - y)).
struct GaussianTestFunction {
    Mat3 F = Mat3::Identity();
    Mat3 S = Mat3::Identity();
    Vec3 y = Vec3::Zero();
    double amp = 1.0;

    static GaussianTestFunction likelihood(const Vec3& y, double R, LikelihoodScale scale);

    double operator()(const Vec3& x) const;
    double log_value(const Vec3& x) const;
    /// P_dt h for the linear model, exact.
    GaussianTestFunction propagated(const Discretization& d) const;
    GaussianTestFunction propagated(const AffineSDEModel& model, double dt) const;
    /// Precision of the x-profile, F^T S^{-1} F.
    Mat3 x_precision() const;
    /// Point where the profile peaks (least squares when F is singular).
    Vec3 x_mode() const;
};

/// sup_x |(P_s - Q_s) P_{t_remaining} g^y|(x) on a grid around the mode.
/// t_remaining is the time left after the step.
double onestep_error_estimate(const Propagator& prop, double s, double t_remaining, double R,
                              LikelihoodScale scale = LikelihoodScale::Peak);

struct AdaptiveOptions {
    LikelihoodScale scale = LikelihoodScale::Peak;
    double floor_fraction = 1.0 / 1048576.0;  // minimum step T * 2^-20
};

Partition adaptive_partition(const Propagator& prop, double T, double epsilon, const AdaptiveOptions& opt = {});

/// G_n(rho) = sup_{r >= rho} e^{-r^2/2} max_{|u| <= r} |He_n(u)|: bounds the n-th
/// directional derivative of exp(-|xi|^2/2) over the region |xi| >= rho.
/// G_n(0) = max_u |He_n(u)| e^{-u^2/2}.
double hermite_envelope(int n, double rho);

/// Bound on |(mu_patch - REC(mu_patch), P_{t_remaining} g^y)|:
/// constant * 2 mass u^{r+1}/(r+1)! * sup |D^{r+1} P_{t_remaining} g^y|, with u the
/// patch half-diagonal. Without y the sup is over every observation; with y the
/// derivative bound is localized by the patch's distance to the likelihood mode.
struct RecombBudget {
    AffineSDEModel model;
    int degree = 5;
    LikelihoodScale scale = LikelihoodScale::Peak;
    double constant = 1.0;

    double operator()(const PatchInfo& patch, double t_remaining, const std::optional<Vec3>& y = std::nullopt) const;
    /// Estimator with the propagated likelihood precomputed for one time.
    PatchErrorEstimator estimator(double t_remaining, const std::optional<Vec3>& y = std::nullopt) const;
};

double recomb_error_budget(const PatchInfo& patch, int r, double t_remaining, double R,
                           const AffineSDEModel& model, LikelihoodScale scale = LikelihoodScale::Peak,
                           const std::optional<Vec3>& y = std::nullopt, double constant = 1.0);

}  // namespace ppf
