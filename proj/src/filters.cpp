#include "ppf/filters.hpp"

#include "ppf/error.hpp"
#include "ppf/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <utility>

namespace ppf {

GaussianBelief kalman_predict(const GaussianBelief& b, const AffineSDEModel& model) {
    const Discretization d = exact_discretization(model, model.T);
    GaussianBelief p;
    p.mean = d.F * b.mean;
    p.cov = d.F * b.cov * d.F.transpose() + d.Q;
    p.cov = 0.5 * (p.cov + p.cov.transpose());
    return p;
}

GaussianBelief kalman_update(const GaussianBelief& prior, const Vec3& y, const AffineSDEModel& model) {
    const Mat3 Rm = model.R * Mat3::Identity();
    const Mat3 S = prior.cov + Rm;
    Eigen::LLT<Mat3> llt(S);
    if (llt.info() != Eigen::Success) throw DomainError("kalman_update: singular innovation covariance");
    const Mat3 K = llt.solve(prior.cov).transpose();  // C S^{-1}, both symmetric
    GaussianBelief post;
    post.mean = prior.mean + K * (y - prior.mean);
    const Mat3 IK = Mat3::Identity() - K;
    post.cov = IK * prior.cov * IK.transpose() + K * Rm * K.transpose();
    post.cov = 0.5 * (post.cov + post.cov.transpose());
    return post;
}

KalmanStep kalman_step(const GaussianBelief& belief, const Vec3& y, const AffineSDEModel& model) {
    if (!model.linear()) throw UnsupportedError("kalman_step: model is nonlinear");
    KalmanStep s;
    s.prior = kalman_predict(belief, model);
    s.posterior = kalman_update(s.prior, y, model);
    return s;
}

GaussianBelief stationary_init(const AffineSDEModel& model, const Vec3& mean, const Mat3& start) {
    GaussianBelief b;
    b.cov = start;
    for (int it = 0; it < 100000; ++it) {
        const GaussianBelief p = kalman_update(kalman_predict(b, model), Vec3::Zero(), model);
        const double diff = (p.cov - b.cov).cwiseAbs().maxCoeff();
        b.cov = p.cov;
        if (diff < 1e-14) {
            b.mean = mean;
            return b;
        }
    }
    throw ConvergenceError("stationary_init: Riccati iteration did not converge in 1e5 iterations");
}

Vec3 place_observation(const GaussianBelief& prior, const ObservationPlan& plan) {
    Vec3 y;
    for (int a = 0; a < 3; ++a) {
        if (!(prior.cov(a, a) > 0.0)) throw DomainError("place_observation: prior variance must be positive");
        y(a) = prior.mean(a) + plan.D * std::sqrt(prior.cov(a, a));
    }
    return y;
}

DiscreteMeasure sample_belief(const GaussianBelief& b, Eigen::Index M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::LLT<Mat3> llt(b.cov);
    if (llt.info() != Eigen::Success) throw DomainError("sample_belief: covariance not positive definite");
    const Mat3 L = llt.matrixL();
    Mat pts(3, M);
    for (Eigen::Index i = 0; i < M; ++i) {
        const Vec3 z(nd(rng), nd(rng), nd(rng));
        pts.col(i) = b.mean + L * z;
    }
    return DiscreteMeasure(std::move(pts), Vec::Constant(M, 1.0 / static_cast<double>(M)));
}

Vec log_likelihood_values(const DiscreteMeasure& mu, const Vec3& y, double R) {
    Vec lg(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) lg(i) = -0.5 * (mu.points().col(i) - y).squaredNorm() / R;
    return lg;
}

namespace {

// Multinomial draw of M indices from weights w (sorted-uniform method).
std::vector<Eigen::Index> multinomial(const Vec& w, Eigen::Index M, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::vector<double> u(static_cast<std::size_t>(M));
    for (auto& x : u) x = ud(rng);
    std::sort(u.begin(), u.end());
    const double tot = w.sum();
    std::vector<Eigen::Index> out(static_cast<std::size_t>(M));
    double cum = 0.0;
    Eigen::Index i = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double target = u[k] * tot;
        while (i < w.size() - 1 && cum + w(i) <= target) cum += w(i++);
        out[k] = i;
    }
    return out;
}

}  // namespace

SirResult sir_cycle(const DiscreteMeasure& mu, const Vec3& y, const AffineSDEModel& model, Eigen::Index M,
                    std::uint64_t seed) {
    if (mu.empty() || M < 1) throw DomainError("sir_cycle: empty input or sample count");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Eigen::Index> anc;
    if (mu.size() == M) {
        anc.resize(static_cast<std::size_t>(M));
        std::iota(anc.begin(), anc.end(), Eigen::Index{0});
    } else {
        anc = multinomial(mu.weights(), M, rng);
    }
    const Discretization d = exact_discretization(model, model.T);
    Eigen::LLT<Mat3> llt(d.Q);
    const Mat3 L = llt.matrixL();
    Mat pts(3, M);
    for (Eigen::Index i = 0; i < M; ++i) {
        const Vec3 z(nd(rng), nd(rng), nd(rng));
        pts.col(i) = d.F * mu.point(anc[static_cast<std::size_t>(i)]) + L * z;
    }
    SirResult r;
    r.prior = DiscreteMeasure(std::move(pts), Vec::Constant(M, 1.0 / static_cast<double>(M)));
    r.reweighted = reweight_log_values(r.prior, log_likelihood_values(r.prior, y, model.R));
    const auto idx = multinomial(r.reweighted.weights(), M, rng);
    Mat post(3, M);
    for (Eigen::Index i = 0; i < M; ++i) post.col(i) = r.prior.point(idx[static_cast<std::size_t>(i)]);
    r.posterior = DiscreteMeasure(std::move(post), Vec::Constant(M, 1.0 / static_cast<double>(M)));
    return r;
}

namespace {

void check_partition(const Partition& p, const Propagator& prop) {
    p.validate();
    if (std::abs(p.horizon() - prop.model().T) > 1e-12 * prop.model().T)
        throw DomainError("filter: partition must end at the observation interval T");
}

DiscreteMeasure recombine_step(const DiscreteMeasure& mu, const FilterRecomb& rc, double t_remaining,
                               const Vec3& y, StepRecord& rec, CycleResult& out) {
    if (!rc.enabled || mu.empty()) return mu;
    PatchErrorEstimator est;
    if (rc.config.mode == PatchMode::Adaptive)
        est = rc.budget.estimator(t_remaining, rc.localize ? std::optional<Vec3>(y) : std::nullopt);
    DiscreteMeasure r = patched_recombine(mu, rc.config, est, &rec.stats);
    out.recombined_particles += rec.stats.particles_reduced;
    out.removed_particles += rec.stats.particles_in - rec.stats.particles_out;
    return r;
}

}  // namespace

CycleResult ppf_cycle(const DiscreteMeasure& mu, const Vec3& y, const Propagator& prop, const Partition& partition,
                      const FilterRecomb& recomb) {
    check_partition(partition, prop);
    const double T = partition.horizon();
    CycleResult out;
    DiscreteMeasure cur = mu;
    for (std::size_t j = 1; j <= partition.k(); ++j) {
        StepRecord rec;
        rec.t = partition.times[j - 1];
        cur = recombine_step(cur, recomb, T - rec.t, y, rec, out);
        cur = prop.apply(cur, partition.step(j));
        out.steps.push_back(rec);
    }
    out.prior = cur;
    out.posterior = reweight_log_values(cur, log_likelihood_values(cur, y, prop.model().R));
    return out;
}

LeapMode parse_leap_mode(const std::string& s) {
    if (s == "two-stage") return LeapMode::TwoStage;
    if (s == "reuse-one-step") return LeapMode::ReuseOneStep;
    throw ConfigError("unknown leap mode '" + s + "' (expected two-stage or reuse-one-step)");
}

std::string to_string(LeapMode m) { return m == LeapMode::TwoStage ? "two-stage" : "reuse-one-step"; }

TerminalMerge parse_terminal_merge(const std::string& s) {
    if (s == "deferred") return TerminalMerge::Deferred;
    if (s == "adaptive") return TerminalMerge::Adaptive;
    if (s == "fixed") return TerminalMerge::Fixed;
    throw ConfigError("unknown terminal merge '" + s + "' (expected deferred, adaptive or fixed)");
}

std::string to_string(TerminalMerge m) {
    switch (m) {
        case TerminalMerge::Deferred: return "deferred";
        case TerminalMerge::Adaptive: return "adaptive";
        case TerminalMerge::Fixed: return "fixed";
    }
    return "deferred";
}

void SplitConfig::validate() const {
    if (!(tau >= 0.0)) throw ConfigError("split: tau must be >= 0");
    if (auto_tune && !(band_lo >= 0.0 && band_lo <= band_hi && band_hi <= 1.0))
        throw ConfigError("split: leap band must satisfy 0 <= lo <= hi <= 1");
    if (!(tau_cap >= 0.0)) throw ConfigError("split: tau cap must be >= 0");
    if (!(tau_rel_cap >= 0.0)) throw ConfigError("split: relative tau cap must be >= 0");
}

namespace {

struct SplitKernels {
    AffineKernel one;   // t_prev -> T
    AffineKernel a, b;  // t_prev -> t_next, t_next -> T
};

SplitKernels split_kernels(const Propagator& prop, double t_prev, double t_next, double T) {
    if (!(t_prev < t_next && t_next < T)) throw DomainError("split: need t_prev < t_next < T");
    return {prop.kernel(T - t_prev), prop.kernel(t_next - t_prev), prop.kernel(T - t_next)};
}

struct FastLik {
    Mat3 F, Sinv;
    Vec3 y;
    double logamp;
    explicit FastLik(const GaussianTestFunction& g) : F(g.F), Sinv(g.S.inverse()), y(g.y), logamp(std::log(g.amp)) {}
    double operator()(const Vec3& x) const {
        const Vec3 r = F * x - y;
        return std::exp(logamp - 0.5 * r.dot(Sinv * r));
    }
};

// Per-particle |one-step - two-step| and the two-step values themselves.
std::pair<Vec, Vec> discrepancies(const DiscreteMeasure& mu, const SplitKernels& k, const GaussianTestFunction& g) {
    // Two-step children as composed maps.
    AffineKernel two;
    for (std::size_t i = 0; i < k.a.size(); ++i)
        for (std::size_t j = 0; j < k.b.size(); ++j) {
            two.maps.push_back(k.b.maps[j].after(k.a.maps[i]));
            two.weights.push_back(k.a.weights[i] * k.b.weights[j]);
        }
    const FastLik f(g);
    Vec d(mu.size()), two_val(mu.size());
    parallel_for(static_cast<std::size_t>(mu.size()), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 x = mu.point(static_cast<Eigen::Index>(i));
            double v1 = 0.0, v2 = 0.0;
            for (std::size_t j = 0; j < k.one.size(); ++j) v1 += k.one.weights[j] * f(k.one.maps[j](x));
            for (std::size_t j = 0; j < two.size(); ++j) v2 += two.weights[j] * f(two.maps[j](x));
            d(static_cast<Eigen::Index>(i)) = std::abs(v1 - v2);
            two_val(static_cast<Eigen::Index>(i)) = v2;
        }
    }, 256);
    return {d, two_val};
}

double tune_tau(const Vec& disc, const Vec& two_val, const Vec& w, const SplitConfig& cfg) {
    std::vector<Eigen::Index> ord(static_cast<std::size_t>(disc.size()));
    std::iota(ord.begin(), ord.end(), Eigen::Index{0});
    std::stable_sort(ord.begin(), ord.end(), [&](Eigen::Index a, Eigen::Index b) { return disc(a) < disc(b); });
    const double tot = w.sum();
    // Largest prefix whose mass stays within the upper band edge; tau sits
    // at the first excluded discrepancy so the comparison stays strict.
    double cum = 0.0;
    double tau = std::numeric_limits<double>::infinity();
    for (auto i : ord) {
        if (cum + w(i) > cfg.band_hi * tot) {
            tau = disc(i);
            break;
        }
        cum += w(i);
    }
    if (cfg.tau_cap > 0.0) tau = std::min(tau, cfg.tau_cap);
    // Leap error per unit mass against the cloud's own predicted likelihood
    // integral per unit mass.
    if (cfg.tau_rel_cap > 0.0) tau = std::min(tau, cfg.tau_rel_cap * w.dot(two_val) / tot);
    return tau;
}

}  // namespace

Vec split_discrepancies(const DiscreteMeasure& mu, const Propagator& prop, double t_prev, double t_next, double T,
                        const GaussianTestFunction& g) {
    return discrepancies(mu, split_kernels(prop, t_prev, t_next, T), g).first;
}

SplitResult split_measure(const DiscreteMeasure& mu, const Propagator& prop, double t_prev, double t_next, double T,
                          const GaussianTestFunction& g, const SplitConfig& cfg) {
    cfg.validate();
    SplitResult r;
    if (mu.empty()) {
        r.leap = r.stay = mu;
        return r;
    }
    const SplitKernels k = split_kernels(prop, t_prev, t_next, T);
    const auto [disc, two_val] = discrepancies(mu, k, g);
    r.tau = cfg.auto_tune ? tune_tau(disc, two_val, mu.weights(), cfg) : cfg.tau;
    std::vector<Eigen::Index> li, si;
    for (Eigen::Index i = 0; i < mu.size(); ++i) (disc(i) < r.tau ? li : si).push_back(i);
    auto gather = [&](const std::vector<Eigen::Index>& idx) {
        Mat p(3, static_cast<Eigen::Index>(idx.size()));
        Vec w(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t q = 0; q < idx.size(); ++q) {
            p.col(static_cast<Eigen::Index>(q)) = mu.point(idx[q]);
            w(static_cast<Eigen::Index>(q)) = mu.weight(idx[q]);
        }
        return DiscreteMeasure(std::move(p), std::move(w));
    };
    r.stay = gather(si);
    const DiscreteMeasure leap0 = gather(li);
    r.leap_mass = leap0.mass();
    if (leap0.empty()) {
        r.leap = leap0;
    } else if (cfg.mode == LeapMode::ReuseOneStep) {
        r.leap = apply_kernel(leap0, k.one);
    } else {
        r.leap = apply_kernel(apply_kernel(leap0, k.a), k.b);
    }
    return r;
}

CycleResult appf_cycle(const DiscreteMeasure& mu, const Vec3& y, const Propagator& prop, const Partition& partition,
                       const FilterRecomb& recomb, const SplitConfig& split) {
    check_partition(partition, prop);
    split.validate();
    const double T = partition.horizon();
    const AffineSDEModel& model = prop.model();
    // Splitting compares likelihood integrals; the scale follows the budget's.
    const GaussianTestFunction g = GaussianTestFunction::likelihood(y, model.R, recomb.budget.scale);
    CycleResult out;
    DiscreteMeasure stay = mu;
    std::vector<DiscreteMeasure> leapers;
    int last_depth = recomb.config.depth;
    for (std::size_t j = 1; j <= partition.k(); ++j) {
        StepRecord rec;
        rec.t = partition.times[j - 1];
        stay = recombine_step(stay, recomb, T - rec.t, y, rec, out);
        if (recomb.enabled && rec.stats.particles_in > 0) last_depth = rec.stats.deepest;
        if (j < partition.k() && !stay.empty()) {
            SplitResult sr = split_measure(stay, prop, partition.times[j - 1], partition.times[j], T, g, split);
            rec.tau = sr.tau;
            rec.leapers = sr.leap.empty() ? 0 : sr.leap.size();
            rec.leap_mass = sr.leap_mass;
            if (!sr.leap.empty()) leapers.push_back(std::move(sr.leap));
            stay = std::move(sr.stay);
        }
        if (!stay.empty()) stay = prop.apply(stay, partition.step(j));
        out.steps.push_back(rec);
    }
    if (leapers.empty()) {
        out.prior = stay;
    } else if (stay.empty()) {
        out.prior = disjoint_union(std::span<const DiscreteMeasure>(leapers));
    } else {
        leapers.push_back(stay);
        const DiscreteMeasure all = disjoint_union(std::span<const DiscreteMeasure>(leapers));
        if (recomb.enabled && split.terminal != TerminalMerge::Deferred) {
            FilterRecomb merge = recomb;
            if (split.terminal == TerminalMerge::Fixed) {
                merge.config.mode = PatchMode::Fixed;
                merge.config.depth = last_depth;
            }
            StepRecord rec;
            rec.t = T;
            out.prior = recombine_step(all, merge, 0.0, y, rec, out);
            out.steps.push_back(rec);
        } else {
            out.prior = all;
        }
    }
    out.posterior = reweight_log_values(out.prior, log_likelihood_values(out.prior, y, model.R));
    return out;
}

}  // namespace ppf
