#include "ppf/error.hpp"
#include "ppf/filters.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace ppf;

namespace {

double max_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

struct Setup {
    AffineSDEModel model;
    GaussianBelief post0, prior;
    Vec3 y;
    Propagator prop;
    Partition part;

    Setup(double R, double D, double eps)
        : model(AffineSDEModel::reference(R)),
          prop(PropagatorKind::KlvFlow, load_degree5_formula(), model) {
        post0 = stationary_init(model, Vec3(1, 1, 1));
        prior = kalman_predict(post0, model);
        y = place_observation(prior, ObservationPlan{D});
        part = adaptive_partition(prop, model.T, eps);
    }
};

// Degree-5 Gauss-Hermite tensor rule mapped onto a Gaussian belief.
DiscreteMeasure gh_measure(const GaussianBelief& b, int nodes) {
    GaussianCubature g = gauss_hermite_tensor(3, 2 * nodes - 1);
    const Mat3 L = Eigen::LLT<Mat3>(b.cov).matrixL();
    return DiscreteMeasure((L * g.nodes).colwise() + b.mean, g.weights);
}

FilterRecomb fixed_recomb(int depth) {
    FilterRecomb r;
    r.config.degree = 5;
    r.config.depth = depth;
    return r;
}

}  // namespace

TEST_CASE("Kalman steady state") {
    for (double R : {1e-1, 1e-2, 1e-3}) {
        AffineSDEModel m = AffineSDEModel::reference(R);
        GaussianBelief s = stationary_init(m);
        GaussianBelief prior = kalman_predict(s, m);
        GaussianBelief again = kalman_update(prior, Vec3::Zero(), m);
        CHECK(max_abs(again.cov - s.cov) < 1e-12);
        for (int i = 0; i < 3; ++i) {
            CHECK(prior.cov(i, i) > 0.03);
            CHECK(prior.cov(i, i) < 0.3);
        }
        // Posterior precision dominates 1/R, so R I - C_{n|n} is positive semidefinite.
        CHECK(Eigen::SelfAdjointEigenSolver<Mat3>(R * Mat3::Identity() - s.cov).eigenvalues().minCoeff() > 0.0);
        GaussianBelief other = stationary_init(m, Vec3::Zero(), 0.01 * Mat3::Identity());
        CHECK(max_abs(other.cov - s.cov) < 1e-12);
        CHECK(max_abs(s.cov - s.cov.transpose()) < 1e-15);
    }
}

TEST_CASE("Kalman update limits") {
    AffineSDEModel m = AffineSDEModel::reference(1e12);
    GaussianBelief b;
    b.mean = Vec3(1, 2, 3);
    b.cov = 0.1 * Mat3::Identity();
    GaussianBelief p = kalman_update(b, Vec3(5, 5, 5), m);
    CHECK((p.mean - b.mean).norm() < 1e-10);
    CHECK(max_abs(p.cov - b.cov) < 1e-12);

    // Scalar sanity: prior variance c, noise R gives c R / (c + R).
    AffineSDEModel m2 = AffineSDEModel::reference(0.3);
    b.cov = 0.2 * Mat3::Identity();
    b.mean = Vec3::Zero();
    GaussianBelief q = kalman_update(b, Vec3(1, 0, 0), m2);
    CHECK(q.cov(0, 0) == doctest::Approx(0.2 * 0.3 / 0.5));
    CHECK(q.mean(0) == doctest::Approx(0.2 / 0.5));

    KalmanStep st = kalman_step(b, Vec3(1, 0, 0), m2);
    GaussianBelief pr = kalman_predict(b, m2);
    CHECK(max_abs(st.prior.cov - pr.cov) < 1e-15);
}

TEST_CASE("observation placement") {
    GaussianBelief b;
    b.mean = Vec3(1, 2, 3);
    b.cov << 0.04, 0.01, 0, 0.01, 0.09, 0, 0, 0, 0.16;
    CHECK(place_observation(b, {0.0}) == b.mean);
    CHECK((place_observation(b, {2.0}) - Vec3(1.4, 2.6, 3.8)).norm() < 1e-15);
}

TEST_CASE("D=2 observations are rare under the true model") {
    // Normalized innovations beyond 2 prior standard deviations on every axis.
    AffineSDEModel m = AffineSDEModel::reference(1e-2);
    GaussianBelief prior = kalman_predict(stationary_init(m), m);
    const Mat3 S = prior.cov + m.R * Mat3::Identity();
    const Mat3 L = Eigen::LLT<Mat3>(S).matrixL();
    const Vec3 sd = prior.cov.diagonal().cwiseSqrt();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    const long N = 4000000;
    long hits = 0;
    for (long i = 0; i < N; ++i) {
        const Vec3 d = (L * Vec3(nd(rng), nd(rng), nd(rng))).cwiseQuotient(sd).cwiseAbs();
        if (d.minCoeff() > 2.0) ++hits;
    }
    const double expected = 37574e-8 * N;
    CHECK(std::abs(hits - expected) < 5 * std::sqrt(expected));
}

TEST_CASE("SIR cycle") {
    AffineSDEModel m = AffineSDEModel::reference(1e-2);
    GaussianBelief post0 = stationary_init(m, Vec3(1, 1, 1));
    GaussianBelief prior = kalman_predict(post0, m);
    const Vec3 y = place_observation(prior, {1.0});
    DiscreteMeasure mu = sample_belief(post0, 5000, 1);
    SirResult a = sir_cycle(mu, y, m, 5000, 7), b = sir_cycle(mu, y, m, 5000, 7);
    CHECK(a.posterior == b.posterior);
    CHECK(a.prior.size() == 5000);
    CHECK(a.posterior.size() == 5000);
    CHECK(std::abs(a.reweighted.mass() - 1.0) < 1e-12);
    CHECK(a.reweighted.points() == a.prior.points());

    // Posterior-mean spread across seeds shrinks like M^(-1/2).
    const KalmanStep ks = kalman_step(post0, y, m);
    auto spread = [&](Eigen::Index M) {
        double s2 = 0.0;
        const int seeds = 40;
        for (int s = 0; s < seeds; ++s) {
            SirResult r = sir_cycle(sample_belief(post0, M, 100 + s), y, m, M, 200 + s);
            s2 += (mean(r.reweighted) - ks.posterior.mean).squaredNorm();
        }
        return std::sqrt(s2 / seeds);
    };
    const double ratio = spread(1000) / spread(10000);
    MESSAGE("spread ratio M=1e3 / M=1e4: " << ratio);
    CHECK(ratio > std::sqrt(10.0) / 1.6);
    CHECK(ratio < std::sqrt(10.0) * 1.6);
}

TEST_CASE("SIR under a constant likelihood keeps the prior law") {
    AffineSDEModel m = AffineSDEModel::reference(1e16);
    GaussianBelief post0 = stationary_init(AffineSDEModel::reference(1e-2), Vec3(1, 1, 1));
    DiscreteMeasure mu = sample_belief(post0, 20000, 3);
    SirResult r = sir_cycle(mu, Vec3::Zero(), m, 20000, 4);
    const double w0 = r.reweighted.weight(0);
    CHECK(((r.reweighted.weights().array() - w0).abs() < 1e-9 * w0).all());
    CHECK((mean(r.posterior) - mean(r.prior)).norm() < 0.02);
}

TEST_CASE("PPF single step without recombination is KLV plus reweight") {
    Setup s(1e-2, 1.0, 1e-2);
    DiscreteMeasure mu = gh_measure(s.post0, 3);
    Partition one;
    one.times = {0.0, s.model.T};
    FilterRecomb off;
    off.enabled = false;
    CycleResult c = ppf_cycle(mu, s.y, s.prop, one, off);
    DiscreteMeasure k = s.prop.apply(mu, s.model.T);
    CHECK(c.prior == k);
    CHECK(c.posterior == reweight_log_values(k, log_likelihood_values(k, s.y, s.model.R)));
    CHECK(c.recombined_particles == 0);
}

TEST_CASE("APPF with tau = 0 equals PPF bit for bit") {
    Setup s(1e-2, 2.0, 1e-2);
    DiscreteMeasure mu = gh_measure(s.post0, 8);
    FilterRecomb r = fixed_recomb(1);
    SplitConfig sc;
    sc.tau = 0.0;
    DiscreteMeasure a = mu, b = mu;
    for (int cycle = 0; cycle < 3; ++cycle) {
        CycleResult p = ppf_cycle(a, s.y, s.prop, s.part, r);
        CycleResult q = appf_cycle(b, s.y, s.prop, s.part, r, sc);
        CHECK(p.prior == q.prior);
        CHECK(p.posterior == q.posterior);
        CHECK(p.recombined_particles == q.recombined_particles);
        a = p.posterior;
        b = q.posterior;
    }
}

TEST_CASE("APPF with tau = infinity is a single KLV arrival") {
    Setup s(1e-2, 1.0, 1e-2);
    REQUIRE(s.part.k() >= 2);
    DiscreteMeasure mu = gh_measure(s.post0, 3);  // 27 points, below the reduction threshold
    FilterRecomb r = fixed_recomb(0);
    SplitConfig sc;
    sc.tau = std::numeric_limits<double>::infinity();

    sc.mode = LeapMode::ReuseOneStep;
    CycleResult c = appf_cycle(mu, s.y, s.prop, s.part, r, sc);
    DiscreteMeasure one = s.prop.apply(mu, s.model.T);
    REQUIRE(c.prior.size() == one.size());
    CHECK(max_abs(c.prior.points() - one.points()) < 1e-13);
    CHECK(max_abs(c.prior.weights() - one.weights()) < 1e-15);
    CHECK(c.steps[0].leap_mass == doctest::Approx(1.0));

    sc.mode = LeapMode::TwoStage;
    CycleResult d = appf_cycle(mu, s.y, s.prop, s.part, r, sc);
    DiscreteMeasure two = s.prop.apply(s.prop.apply(mu, s.part.step(1)), s.model.T - s.part.times[1]);
    REQUIRE(d.prior.size() == two.size());
    CHECK(max_abs(d.prior.points() - two.points()) < 1e-13);
    CHECK(max_abs(d.posterior.weights() -
                  reweight_log_values(two, log_likelihood_values(two, s.y, s.model.R)).weights()) < 1e-12);
}

TEST_CASE("split conserves mass and respects the band") {
    Setup s(1e-2, 1.0, 1e-3);
    DiscreteMeasure mu = gh_measure(s.post0, 8);
    const GaussianTestFunction g = GaussianTestFunction::likelihood(s.y, s.model.R, LikelihoodScale::Peak);
    SplitConfig sc;
    sc.auto_tune = true;
    const double t1 = s.part.times[1];
    SplitResult r = split_measure(mu, s.prop, 0.0, t1, s.model.T, g, sc);
    CHECK(r.leap_mass + r.stay.mass() == doctest::Approx(mu.mass()).epsilon(1e-14));
    CHECK(r.leap.mass() == doctest::Approx(r.leap_mass).epsilon(1e-12));
    CHECK(r.leap_mass >= 0.25 - 1e-12);
    CHECK(r.leap_mass <= 1.0 / 3.0 + 1e-12);

    // Fixed-tau decisions follow the per-particle discrepancies.
    const Vec disc = split_discrepancies(mu, s.prop, 0.0, t1, s.model.T, g);
    SplitConfig fx;
    fx.tau = r.tau;
    SplitResult f = split_measure(mu, s.prop, 0.0, t1, s.model.T, g, fx);
    double mass = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (disc(i) < r.tau) mass += mu.weight(i);
    CHECK(f.leap_mass == doctest::Approx(mass).epsilon(1e-12));
    Eigen::Index stayers = 0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) stayers += disc(i) >= r.tau;
    CHECK(f.stay.size() == stayers);

    SplitConfig bad;
    bad.tau = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("APPF keeps mass and nonnegative weights over a cycle") {
    Setup s(1e-2, 2.0, 1e-3);
    DiscreteMeasure mu = gh_measure(s.post0, 8);
    FilterRecomb r;
    r.config.mode = PatchMode::Adaptive;
    r.config.theta = 0.3e-3;
    r.config.max_depth = 4;
    r.budget.model = s.model;
    r.budget.constant = 1e-4;
    r.localize = true;
    SplitConfig sc;
    sc.auto_tune = true;
    sc.tau_cap = 1e-3;
    sc.tau_rel_cap = 1e-2;
    CycleResult c = appf_cycle(mu, s.y, s.prop, s.part, r, sc);
    CHECK(c.prior.mass() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((c.prior.weights().array() >= 0).all());
    CHECK(c.posterior.mass() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Index leapers = 0;
    for (const auto& st : c.steps) leapers += st.leapers;
    CHECK(leapers > 0);
}

TEST_CASE("mode names") {
    CHECK(parse_leap_mode("two-stage") == LeapMode::TwoStage);
    CHECK(to_string(LeapMode::ReuseOneStep) == "reuse-one-step");
    CHECK(parse_terminal_merge("fixed") == TerminalMerge::Fixed);
    CHECK_THROWS_AS(parse_terminal_merge("eager"), ConfigError);
}
