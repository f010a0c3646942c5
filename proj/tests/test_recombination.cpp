#include "ppf/error.hpp"
#include "ppf/recombination.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace ppf;

namespace {

DiscreteMeasure cloud(int n, int dim, unsigned seed, double spread = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.05, 1.0);
    Mat p(dim, n);
    Vec w(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < dim; ++k) p(k, i) = 1.0 + spread * nd(rng);
        w(i) = ud(rng);
    }
    return DiscreteMeasure(p, 0.7 * w / w.sum());
}

// Worst relative deviation over every monomial of total degree <= r, computed
// in coordinates centered at the first measure's mean.
double monomial_drift(const DiscreteMeasure& a, const DiscreteMeasure& b, int r) {
    const Vec c = mean(a);
    const int N = a.dim();
    double worst = 0.0;
    std::vector<int> e(N, 0);
    std::function<void(int, int)> rec = [&](int axis, int left) {
        if (axis == N) {
            double ma = 0.0, mb = 0.0, scale = 0.0;
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                double v = a.weight(i);
                for (int k = 0; k < N; ++k) v *= std::pow(a.point(i)(k) - c(k), e[k]);
                ma += v;
                scale += std::abs(v);
            }
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                double v = b.weight(i);
                for (int k = 0; k < N; ++k) v *= std::pow(b.point(i)(k) - c(k), e[k]);
                mb += v;
            }
            worst = std::max(worst, std::abs(ma - mb) / scale);
            return;
        }
        for (int p = 0; p <= left; ++p) {
            e[axis] = p;
            rec(axis + 1, left - p);
        }
        e[axis] = 0;
    };
    rec(0, r);
    return worst;
}

bool is_subset(const DiscreteMeasure& sub, const DiscreteMeasure& of) {
    std::set<std::vector<double>> pts;
    for (Eigen::Index i = 0; i < of.size(); ++i) {
        Vec p = of.point(i);
        pts.insert(std::vector<double>(p.data(), p.data() + p.size()));
    }
    for (Eigen::Index i = 0; i < sub.size(); ++i) {
        Vec p = sub.point(i);
        if (!pts.count(std::vector<double>(p.data(), p.data() + p.size()))) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("monomial counts") {
    CHECK(monomial_count(3, 5) == 56);
    CHECK(monomial_count(3, 1) == 4);
    CHECK(monomial_count(2, 3) == 10);
    CHECK(monomial_exponents(3, 2).size() == 10);
}

TEST_CASE("small measures are returned unchanged") {
    DiscreteMeasure mu = cloud(40, 3, 1);
    CHECK(reduce_measure(mu, 5) == mu);
}

TEST_CASE("500 points at degree 5 reduce to at most 56 with all moments kept") {
    DiscreteMeasure mu = cloud(500, 3, 2);
    DiscreteMeasure r = reduce_measure(mu, 5);
    CHECK(r.size() <= 56);
    CHECK(monomial_drift(mu, r, 5) < 1e-9);
    CHECK((r.weights().array() >= 0).all());
    CHECK(is_subset(r, mu));
    CHECK(std::abs(r.mass() - mu.mass()) < 1e-12);
}

TEST_CASE("degree 1 keeps mass and mean") {
    DiscreteMeasure mu = cloud(200, 3, 3);
    DiscreteMeasure r = reduce_measure(mu, 1);
    CHECK(r.size() <= 4);
    CHECK(r.mass() == doctest::Approx(mu.mass()).epsilon(1e-12));
    CHECK((mean(r) - mean(mu)).norm() < 1e-12);
    CHECK_THROWS_AS(reduce_measure(mu, 0), DomainError);
}

TEST_CASE("reduction on assorted shapes") {
    for (unsigned seed = 10; seed < 16; ++seed) {
        const int dim = 1 + static_cast<int>(seed % 3);
        const int r = 2 + static_cast<int>(seed % 4);
        DiscreteMeasure mu = cloud(300, dim, seed, seed % 2 ? 1e-3 : 10.0);
        DiscreteMeasure out = reduce_measure(mu, r);
        CHECK(out.size() <= monomial_count(dim, r));
        CHECK(monomial_drift(mu, out, r) < 1e-9);
        CHECK((out.weights().array() >= 0).all());
    }
}

TEST_CASE("Morton keys and patches") {
    DiscreteMeasure mu = cloud(300, 3, 4);
    auto one = morton_partition(mu, 0);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == mu);

    auto eight = morton_partition(mu, 1);
    CHECK(eight.size() <= 8);
    Eigen::Index total = 0;
    for (const auto& p : eight) total += p.size();
    CHECK(total == mu.size());
    CHECK_THROWS_AS(morton_partition(mu, 53), DomainError);

    // In 2D, the upper-right quarter of the box has leading bits (1, 1).
    Mat p(2, 4);
    p << 0.0, 1.0, 0.9, 0.1, 0.0, 1.0, 0.8, 0.9;
    BoundingBox box = bounding_box(p);
    MortonKey k = morton_key(p.col(2), box);
    CHECK(k.bit(0) == 1);
    CHECK(k.bit(1) == 1);
    MortonKey k0 = morton_key(p.col(0), box);
    CHECK(k0.bit(0) == 0);
    CHECK(k0.bit(1) == 0);
    MortonKey k3 = morton_key(p.col(3), box);
    CHECK(k3.bit(0) == 0);
    CHECK(k3.bit(1) == 1);
    CHECK(k.prefix_equal(morton_key(p.col(1), box), 2));
    CHECK_FALSE(k.prefix_equal(k3, 2));
}

TEST_CASE("Morton grouping is permutation-invariant and idempotent") {
    DiscreteMeasure mu = cloud(200, 3, 5);
    Mat rp = mu.points().rowwise().reverse();
    Vec rw = mu.weights().reverse();
    DiscreteMeasure rev(rp, rw);
    auto a = morton_partition(mu, 2), b = morton_partition(rev, 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].size() == b[i].size());
        CHECK(a[i].mass() == doctest::Approx(b[i].mass()).epsilon(1e-14));
    }
    // Regrouping the union of the groups at the same depth gives the same groups.
    DiscreteMeasure u = disjoint_union(std::span<const DiscreteMeasure>(a));
    auto c = morton_partition(u, 2);
    REQUIRE(c.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i] == a[i]);
}

TEST_CASE("degenerate bounding boxes") {
    Mat p = Mat::Zero(3, 100);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 100; ++i) p(0, i) = nd(rng);
    DiscreteMeasure mu(p, Vec::Constant(100, 0.01));
    auto parts = morton_partition(mu, 2);
    CHECK(parts.size() <= 4);
    DiscreteMeasure r = reduce_measure(mu, 5);
    CHECK(r.size() <= 6);
    CHECK(monomial_drift(mu, r, 5) < 1e-9);
}

TEST_CASE("patched recombination") {
    DiscreteMeasure mu = cloud(3000, 3, 7);
    RecombConfig one;
    one.degree = 5;
    CHECK(patched_recombine(mu, one) == reduce_measure(mu, 5));

    RecombConfig fixed;
    fixed.degree = 5;
    fixed.depth = 2;
    RecombStats st;
    DiscreteMeasure out = patched_recombine(mu, fixed, {}, &st);
    CHECK(out.size() <= mu.size());
    CHECK(st.patches <= 64);
    CHECK(out.size() <= static_cast<Eigen::Index>(st.patches) * 56);
    CHECK(monomial_drift(mu, out, 5) < 1e-9);
    CHECK(moment_deviation(mu, out, 5) < 1e-9);
    CHECK(is_subset(out, mu));
    CHECK((out.weights().array() >= 0).all());
    CHECK(st.particles_in == mu.size());
    CHECK(st.particles_out == out.size());

    RecombConfig bad = fixed;
    bad.depth = 53;
    CHECK_THROWS(patched_recombine(mu, bad));
}

TEST_CASE("adaptive patching splits until the estimate fits") {
    DiscreteMeasure mu = cloud(20000, 3, 8);
    RecombConfig cfg;
    cfg.mode = PatchMode::Adaptive;
    cfg.degree = 3;
    cfg.max_depth = 6;
    // Estimate proportional to mass times u^(r+1).
    PatchErrorEstimator est = [](const PatchInfo& p) { return p.mass * std::pow(p.half_diagonal(), 4); };
    double prev_deepest = -1;
    for (double theta : {1.0, 1e-2, 1e-4}) {
        cfg.theta = theta;
        RecombStats st;
        DiscreteMeasure out = patched_recombine(mu, cfg, est, &st);
        CHECK(st.budget_met);
        CHECK(st.budget <= theta);
        CHECK(st.deepest >= prev_deepest);
        CHECK(moment_deviation(mu, out, 3) < 1e-9);
        prev_deepest = st.deepest;
    }
    RecombConfig none = cfg;
    CHECK_THROWS_AS(patched_recombine(mu, none), DomainError);
    none.theta = 0.0;
    CHECK_THROWS(none.validate());
}
