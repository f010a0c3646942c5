#include "ppf/partitioning.hpp"

#include "ppf/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace ppf {

std::vector<double> Partition::steps() const {
    std::vector<double> s;
    for (std::size_t j = 1; j < times.size(); ++j) s.push_back(times[j] - times[j - 1]);
    return s;
}

void Partition::validate() const {
    if (times.size() < 2) throw DomainError("partition: needs at least one step");
    if (times.front() != 0.0) throw DomainError("partition: must start at 0");
    for (std::size_t j = 1; j < times.size(); ++j)
        if (!(times[j] > times[j - 1])) throw DomainError("partition: times must increase strictly");
}

Partition kusuoka_partition(double T, int k, double gamma) {
    if (k < 1) throw DomainError("kusuoka_partition: k must be >= 1");
    if (!(gamma >= 1.0)) throw DomainError("kusuoka_partition: gamma must be >= 1");
    if (!(T > 0.0)) throw DomainError("kusuoka_partition: T must be positive");
    Partition p;
    p.kind = PartitionKind::Kusuoka;
    p.gamma = gamma;
    p.times.resize(static_cast<std::size_t>(k) + 1);
    for (int j = 0; j <= k; ++j)
        p.times[j] = T * (1.0 - std::pow(1.0 - static_cast<double>(j) / k, gamma));
    p.times[k] = T * 1.0;
    return p;
}

LikelihoodScale parse_likelihood_scale(const std::string& s) {
    if (s == "peak") return LikelihoodScale::Peak;
    if (s == "density") return LikelihoodScale::Density;
    throw ConfigError("unknown likelihood scale '" + s + "' (expected peak or density)");
}

std::string to_string(LikelihoodScale s) { return s == LikelihoodScale::Peak ? "peak" : "density"; }

GaussianTestFunction GaussianTestFunction::likelihood(const Vec3& y, double R, LikelihoodScale scale) {
    if (!(R > 0.0)) throw DomainError("likelihood: R must be positive");
    GaussianTestFunction h;
    h.y = y;
    h.S = R * Mat3::Identity();
    h.amp = scale == LikelihoodScale::Peak ? 1.0 : std::pow(2.0 * std::numbers::pi * R, -1.5);
    return h;
}

double GaussianTestFunction::log_value(const Vec3& x) const {
    const Vec3 r = F * x - y;
    return std::log(amp) - 0.5 * r.dot(S.llt().solve(r));
}

double GaussianTestFunction::operator()(const Vec3& x) const { return std::exp(log_value(x)); }

GaussianTestFunction GaussianTestFunction::propagated(const Discretization& d) const {
    GaussianTestFunction h = *this;
    h.F = F * d.F;
    h.S = S + F * d.Q * F.transpose();
    h.S = 0.5 * (h.S + h.S.transpose());
    h.amp = amp * std::sqrt(S.determinant() / h.S.determinant());
    return h;
}

GaussianTestFunction GaussianTestFunction::propagated(const AffineSDEModel& model, double dt) const {
    if (dt == 0.0) return *this;
    return propagated(exact_discretization(model, dt));
}

Mat3 GaussianTestFunction::x_precision() const {
    const Mat3 P = F.transpose() * S.llt().solve(F);
    return 0.5 * (P + P.transpose());
}

Vec3 GaussianTestFunction::x_mode() const { return F.colPivHouseholderQr().solve(y); }

namespace {

// Evaluator for h(x) with the inverse covariance factored once.
struct FastGaussian {
    Mat3 F, Sinv;
    Vec3 y;
    double logamp;
    explicit FastGaussian(const GaussianTestFunction& h)
        : F(h.F), Sinv(h.S.inverse()), y(h.y), logamp(std::log(h.amp)) {}
    double operator()(const Vec3& x) const {
        const Vec3 r = F * x - y;
        return std::exp(logamp - 0.5 * r.dot(Sinv * r));
    }
};

}  // namespace

double onestep_error_estimate(const Propagator& prop, double s, double t_remaining, double R,
                              LikelihoodScale scale) {
    const AffineSDEModel& model = prop.model();
    if (!model.linear()) throw UnsupportedError("onestep_error_estimate: linear model only");
    if (!(s > 0.0)) return 0.0;
    if (t_remaining < 0.0) throw DomainError("onestep_error_estimate: negative remaining time");
    AffineSDEModel m = model;
    m.R = R;
    const GaussianTestFunction h = GaussianTestFunction::likelihood(Vec3::Zero(), R, scale).propagated(m, t_remaining);
    const GaussianTestFunction ph = h.propagated(m, s);
    const AffineKernel k = prop.kernel(s);
    const FastGaussian fh(h), fph(ph);

    const Vec3 mode = h.x_mode();
    const Mat3 cov = h.x_precision().inverse();
    std::vector<Vec3> grid;
    for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b)
            for (int c = -3; c <= 3; ++c) {
                const Vec3 off(a * std::sqrt(cov(0, 0)), b * std::sqrt(cov(1, 1)), c * std::sqrt(cov(2, 2)));
                grid.push_back(mode + off);
            }
    // Points where a single cubature child lands on the mode: the discrete
    // operator's bumps peak there when h is narrow compared with the step.
    for (const auto& mp : k.maps) grid.push_back(mp.M.colPivHouseholderQr().solve(mode - mp.c));

    double worst = 0.0;
    for (const auto& x : grid) {
        double q = 0.0;
        for (std::size_t j = 0; j < k.size(); ++j) q += k.weights[j] * fh(k.maps[j](x));
        worst = std::max(worst, std::abs(fph(x) - q));
    }
    return worst;
}

namespace {

// Step ladder {2^e, 1.5 * 2^e}: two significant bits.
double ladder_floor(double x) {
    const double e = std::floor(std::log2(x));
    double v = std::ldexp(1.5, static_cast<int>(e));
    if (v > x) v = std::ldexp(1.0, static_cast<int>(e));
    while (v > x) v *= 0.5;  // guards the rounding of log2
    return v;
}

double ladder_down(double v) {
    const double e = std::floor(std::log2(v));
    const double base = std::ldexp(1.0, static_cast<int>(e));
    if (v > base) return base;             // 1.5 * 2^e -> 2^e
    return std::ldexp(1.5, static_cast<int>(e) - 1);  // 2^e -> 1.5 * 2^(e-1)
}

}  // namespace

Partition adaptive_partition(const Propagator& prop, double T, double epsilon, const AdaptiveOptions& opt) {
    if (!(epsilon > 0.0)) throw DomainError("adaptive_partition: epsilon must be positive");
    if (!(T > 0.0)) throw DomainError("adaptive_partition: T must be positive");
    const double R = prop.model().R;
    const double floor = T * opt.floor_fraction;
    Partition p;
    p.kind = PartitionKind::Adaptive;
    p.epsilon = epsilon;
    p.times.push_back(0.0);
    double t = 0.0, prev = T;
    auto ok = [&](double s) { return onestep_error_estimate(prop, s, std::max(0.0, T - t - s), R, opt.scale) <= epsilon; };
    while (t < T) {
        const double left = T - t;
        const double cap = std::min(left, prev);
        double s = 0.0;
        // Finishing exactly at T is tried first when allowed.
        if (left <= prev && ok(left)) {
            s = left;
        } else {
            for (double c = ladder_floor(cap); c >= floor; c = ladder_down(c)) {
                if (c >= left) continue;
                if (ok(c)) {
                    s = c;
                    break;
                }
            }
        }
        if (s == 0.0)
            throw ConvergenceError("adaptive_partition: one-step error stays above epsilon at the minimum step");
        t = (s == left) ? T : t + s;
        p.times.push_back(t);
        prev = s;
        if (p.times.size() > 10000000) throw ConvergenceError("adaptive_partition: too many steps");
    }
    p.times.back() = T;
    return p;
}

double hermite_envelope(int n, double rho) {
    static std::mutex mu;
    static std::map<int, std::vector<double>> tables;
    constexpr double step = 1e-3, top = 16.0;
    const std::size_t count = static_cast<std::size_t>(top / step) + 1;
    std::vector<double>* tab;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto& t = tables[n];
        if (t.empty()) {
            t.resize(count);
            double runmax = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const double u = i * step;
                double h0 = 1.0, h1 = u;
                double hn = n == 0 ? 1.0 : u;
                for (int k = 1; k < n; ++k) {
                    const double h2 = u * h1 - k * h0;
                    h0 = h1;
                    h1 = h2;
                    hn = h2;
                }
                runmax = std::max(runmax, std::abs(hn));
                t[i] = std::exp(-0.5 * u * u) * runmax;
            }
            // |He_n| is even, so max over |u| <= r is the running max on [0, r].
            for (std::size_t i = count - 1; i-- > 0;) t[i] = std::max(t[i], t[i + 1]);
        }
        tab = &t;
    }
    if (!(rho > 0.0)) return (*tab)[0];
    const std::size_t i = static_cast<std::size_t>(rho / step);
    return i >= count ? 0.0 : (*tab)[i];
}

namespace {

double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

double box_distance(const Vec3& x, const Vec& lo, const Vec& hi) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = std::max({lo(a) - x(a), 0.0, x(a) - hi(a)});
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

PatchErrorEstimator RecombBudget::estimator(double t_remaining, const std::optional<Vec3>& y) const {
    const GaussianTestFunction h =
        GaussianTestFunction::likelihood(y.value_or(Vec3::Zero()), model.R, scale).propagated(model, t_remaining);
    Eigen::SelfAdjointEigenSolver<Mat3> es(h.x_precision());
    const double kmax = es.eigenvalues().maxCoeff();
    const double kmin = std::max(0.0, es.eigenvalues().minCoeff());
    const int n = degree + 1;
    const double pre = constant * 2.0 / factorial(n) * h.amp * std::pow(kmax, 0.5 * n);
    const double g0 = hermite_envelope(n, 0.0);
    const bool localized = y.has_value();
    const Vec3 mode = h.x_mode();
    return [=](const PatchInfo& p) {
        const double u = p.half_diagonal();
        double g = g0;
        if (localized) g = hermite_envelope(n, std::sqrt(kmin) * box_distance(mode, p.lo, p.hi));
        return pre * p.mass * std::pow(u, n) * g;
    };
}

double RecombBudget::operator()(const PatchInfo& patch, double t_remaining, const std::optional<Vec3>& y) const {
    return estimator(t_remaining, y)(patch);
}

double recomb_error_budget(const PatchInfo& patch, int r, double t_remaining, double R,
                           const AffineSDEModel& model, LikelihoodScale scale, const std::optional<Vec3>& y,
                           double constant) {
    RecombBudget b;
    b.model = model;
    b.model.R = R;
    b.degree = r;
    b.scale = scale;
    b.constant = constant;
    return b(patch, t_remaining, y);
}

}  // namespace ppf
