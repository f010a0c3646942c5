#include "ppf/error.hpp"
#include "ppf/tensor_algebra.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace ppf;

namespace {

Eigen::VectorXd inc(std::initializer_list<double> v) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double a : v) x(i++) = a;
    return x;
}

PathIncrements random_path(int d, int segments, std::mt19937_64& rng, double scale = 0.3) {
    std::normal_distribution<double> nd;
    PathIncrements p;
    for (int s = 0; s < segments; ++s) {
        Eigen::VectorXd v(d + 1);
        for (int k = 0; k <= d; ++k) v(k) = scale * nd(rng);
        p.push_back(v);
    }
    return p;
}

double max_abs_diff(const GradedTensor& a, const GradedTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.coeffs().size(); ++i) m = std::max(m, std::abs(a.coeffs()[i] - b.coeffs()[i]));
    return m;
}

// Iterated integral of a piecewise-linear path parametrized on [0, n] (unit
// time per segment). Each nesting level is integrated with 5-point
// Gauss-Legendre on every segment piece, which is exact for the polynomial
// integrands that arise at word length <= 4.
struct NestedIntegral {
    const PathIncrements& path;

    double derivative(int letter, double t) const {
        const auto s = std::min<std::size_t>(static_cast<std::size_t>(t), path.size() - 1);
        return path[s](letter);
    }

    double J(const Word& w, std::size_t len, double t) const {
        if (len == 0) return 1.0;
        static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                     0.9061798459386640};
        static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                     0.4786286704993665, 0.2369268850561891};
        double total = 0.0;
        for (double a = 0.0; a < t - 1e-15; a = std::floor(a) + 1.0) {
            const double b = std::min(t, std::floor(a) + 1.0);
            const double h = 0.5 * (b - a), c = 0.5 * (a + b);
            for (int q = 0; q < 5; ++q) {
                const double s = c + h * xg[q];
                total += h * wg[q] * J(w, len - 1, s) * derivative(w[len - 1], s);
            }
        }
        return total;
    }
};

}  // namespace

TEST_CASE("grade counts zero letters twice") {
    CHECK(word_grade(Word{}) == 0);
    CHECK(word_grade(Word{1, 2}) == 2);
    CHECK(word_grade(Word{0, 1}) == 3);
    CHECK(word_grade(Word{0, 0}) == 4);
    CHECK(word_from_string(word_to_string(Word{0, 2, 1})) == Word{0, 2, 1});
}

TEST_CASE("tensor product basics") {
    const int d = 2, m = 3;
    GradedTensor one = GradedTensor::scalar(d, m, 1.0);
    GradedTensor a = one + GradedTensor::letter(d, m, 1);
    GradedTensor b = one + GradedTensor::letter(d, m, 2);
    GradedTensor ab = tensor_mul(a, b);
    CHECK(ab.coeff(Word{}) == 1.0);
    CHECK(ab.coeff(Word{1}) == 1.0);
    CHECK(ab.coeff(Word{2}) == 1.0);
    CHECK(ab.coeff(Word{1, 2}) == 1.0);
    CHECK(ab.coeff(Word{2, 1}) == 0.0);
    CHECK(max_abs_diff(tensor_mul(one, a), a) == 0.0);
    CHECK(max_abs_diff(tensor_mul(a, one), a) == 0.0);

    GradedTensor e0 = GradedTensor::letter(d, m, 0);
    GradedTensor sq = tensor_mul(e0, e0);
    for (double c : sq.coeffs()) CHECK(c == 0.0);
    CHECK(sq.basis().index(Word{0, 0}) == -1);

    CHECK_THROWS(tensor_mul(GradedTensor(d, m), GradedTensor(d, m + 1)));
}

TEST_CASE("tensor product is associative and distributive") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    auto rnd = [&] {
        GradedTensor t(3, 5);
        for (double& c : t.coeffs()) c = nd(rng);
        return t;
    };
    GradedTensor a = rnd(), b = rnd(), c = rnd();
    CHECK(max_abs_diff(tensor_mul(tensor_mul(a, b), c), tensor_mul(a, tensor_mul(b, c))) < 1e-11);
    CHECK(max_abs_diff(tensor_mul(a, b + c), tensor_mul(a, b) + tensor_mul(a, c)) < 1e-12);
}

TEST_CASE("exp and log") {
    const int d = 2, m = 4;
    GradedTensor zero(d, m);
    GradedTensor e = exp_trunc(zero);
    CHECK(e.coeff(Word{}) == 1.0);
    for (std::size_t i = 1; i < e.coeffs().size(); ++i) CHECK(e.coeffs()[i] == 0.0);

    GradedTensor x = GradedTensor::letter(d, m, 1) + GradedTensor::letter(d, m, 2);
    CHECK(max_abs_diff(log_trunc(exp_trunc(x)), x) < 1e-14);

    const double T = 0.3;
    GradedTensor s = exp_trunc(GradedTensor::letter(1, 2, 1, std::sqrt(T)));
    CHECK(s.coeff(Word{}) == doctest::Approx(1.0));
    CHECK(s.coeff(Word{1}) == doctest::Approx(std::sqrt(T)));
    CHECK(s.coeff(Word{1, 1}) == doctest::Approx(T / 2));

    CHECK_THROWS_AS(log_trunc(GradedTensor(d, m)), DomainError);
}

TEST_CASE("exp and log are inverse on random zero-scalar tensors") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 5; ++rep) {
        GradedTensor a(3, 5);
        for (std::size_t i = 1; i < a.coeffs().size(); ++i) a.coeffs()[i] = 0.5 * nd(rng);
        CHECK(max_abs_diff(log_trunc(exp_trunc(a)), a) < 1e-12);
    }
}

TEST_CASE("signature of segments obeys Chen") {
    const int d = 2, m = 5;
    Eigen::VectorXd v = inc({0.3, 0.2, -0.4}), w = inc({0.1, -0.5, 0.7});
    GradedTensor ev = exp_trunc([&] {
        GradedTensor t(d, m);
        for (int k = 0; k <= d; ++k) t += GradedTensor::letter(d, m, k, v(k));
        return t;
    }());
    CHECK(max_abs_diff(path_signature({v}, m), ev) < 1e-15);

    GradedTensor ew = path_signature({w}, m);
    CHECK(max_abs_diff(path_signature({v, w}, m), tensor_mul(ev, ew)) < 1e-15);
    CHECK_THROWS(path_signature({}, m));
}

TEST_CASE("Chen multiplicativity on random paths") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        PathIncrements p = random_path(3, 3, rng), q = random_path(3, 4, rng);
        PathIncrements pq = p;
        pq.insert(pq.end(), q.begin(), q.end());
        CHECK(max_abs_diff(path_signature(pq, 5), tensor_mul(path_signature(p, 5), path_signature(q, 5))) < 1e-12);
    }
}

TEST_CASE("signature agrees with nested-integral quadrature") {
    PathIncrements path = {inc({0.5, 0.9, -0.3}), inc({0.5, -0.4, 1.1})};
    NestedIntegral oracle{path};
    GradedTensor s = path_signature(path, 6);
    const std::vector<Word> words = {{1}, {0}, {1, 2}, {2, 1}, {0, 1}, {1, 1, 2}, {2, 0, 1}, {1, 2, 2, 1}, {0, 2, 1, 1}};
    for (const Word& w : words) {
        INFO("word " << word_to_string(w));
        CHECK(std::abs(s.coeff(w) - oracle.J(w, w.size(), 2.0)) < 1e-10);
    }
}

TEST_CASE("log-signatures are Lie elements") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 5; ++rep) {
        GradedTensor L = log_trunc(path_signature(random_path(3, 5, rng, 0.5), 5));
        CHECK(lie_membership_residual(L) < 1e-12);
        LiePolynomial lp = LiePolynomial::from_tensor(L);
        CHECK(max_abs_diff(lp.to_tensor(5), L) < 1e-12);
    }
    // e_1 e_2 alone is not Lie.
    GradedTensor t(2, 3);
    t.set(Word{1, 2}, 1.0);
    CHECK(lie_membership_residual(t) > 0.1);
    CHECK_THROWS_AS(LiePolynomial::from_tensor(t), DomainError);
}

TEST_CASE("Lyndon words and brackets") {
    CHECK(is_lyndon(Word{1}));
    CHECK(is_lyndon(Word{1, 2}));
    CHECK_FALSE(is_lyndon(Word{2, 1}));
    CHECK_FALSE(is_lyndon(Word{1, 1}));
    CHECK(is_lyndon(Word{1, 1, 2}));
    auto [u, v] = lyndon_split(Word{1, 1, 2});
    CHECK(u == Word{1});
    CHECK(v == Word{1, 2});
    GradedTensor b = lyndon_bracket(Word{1, 2}, 2, 2);
    CHECK(b.coeff(Word{1, 2}) == 1.0);
    CHECK(b.coeff(Word{2, 1}) == -1.0);
    // Number of Lyndon words of length 2 over 2 letters (no zero): one.
    int count = 0;
    for (const Word& w : lyndon_words(2, 2))
        if (w.size() == 2 && w[0] != 0 && w[1] != 0) ++count;
    CHECK(count == 1);
}

TEST_CASE("expected Brownian signature") {
    GradedTensor e = expected_brownian_signature(1, 2, 1.0);
    CHECK(e.coeff(Word{1, 1}) == doctest::Approx(0.5));
    CHECK(e.coeff(Word{0}) == doctest::Approx(1.0));

    GradedTensor e3 = expected_brownian_signature(3, 6, 1.0);
    for (std::size_t i = 0; i < e3.basis().size(); ++i) {
        const Word& w = e3.basis().word(i);
        const bool pure = std::none_of(w.begin(), w.end(), [](auto c) { return c == 0; });
        if (pure && w.size() % 2 == 1) CHECK(e3.coeffs()[i] == 0.0);
    }
    CHECK(expected_brownian_signature(2, 4, 1.0).coeff(Word{1, 1, 2, 2}) == doctest::Approx(0.125));
    // Brownian scaling.
    const double T = 0.3;
    GradedTensor eT = expected_brownian_signature(3, 5, T);
    CHECK(max_abs_diff(eT, scale_tensor(expected_brownian_signature(3, 5, 1.0), T)) < 1e-15);
}

TEST_CASE("E[J^{1122}] by Monte-Carlo iterated integrals") {
    // Piecewise-linear Brownian paths (Wong-Zakai) estimate the Stratonovich
    // expected signature.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    const int paths = 20000, steps = 40;
    const double h = 1.0 / steps;
    double acc = 0.0, acc2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        PathIncrements inc_;
        for (int s = 0; s < steps; ++s) inc_.push_back(inc({h, std::sqrt(h) * nd(rng), std::sqrt(h) * nd(rng)}));
        const double v = path_signature(inc_, 4).coeff(Word{1, 1, 2, 2});
        acc += v;
        acc2 += v * v;
    }
    const double m = acc / paths, se = std::sqrt((acc2 / paths - m * m) / paths);
    CHECK(std::abs(m - 0.125) < 4.0 * se + 0.01);
}

TEST_CASE("scale_tensor multiplies by T^(grade/2)") {
    GradedTensor t(2, 4);
    t.set(Word{0}, 1.0);
    t.set(Word{1, 2}, 1.0);
    t.set(Word{0, 1}, 1.0);
    GradedTensor s = scale_tensor(t, 4.0);
    CHECK(s.coeff(Word{0}) == doctest::Approx(4.0));
    CHECK(s.coeff(Word{1, 2}) == doctest::Approx(4.0));
    CHECK(s.coeff(Word{0, 1}) == doctest::Approx(8.0));
}
