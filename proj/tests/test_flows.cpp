#include "ppf/error.hpp"
#include "ppf/flows.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace ppf;

namespace {

// e^{-Lambda t} by diagonalization; the test Lambda has distinct real eigenvalues.
Mat3 eig_expm_neg(const Mat3& Lambda, double t) {
    Eigen::EigenSolver<Mat3> es(Lambda);
    const Eigen::Matrix3cd V = es.eigenvectors();
    Eigen::Vector3cd e = es.eigenvalues();
    for (int i = 0; i < 3; ++i) e(i) = std::exp(-t * e(i));
    return (V * e.asDiagonal() * V.inverse()).real();
}

// Classical RK4 with a fixed small step.
Vec3 rk4(const std::function<Vec3(const Vec3&)>& f, Vec3 x, double t, int n) {
    const double h = t / n;
    for (int i = 0; i < n; ++i) {
        const Vec3 k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

AffineField random_field(std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    AffineField f;
    for (int i = 0; i < 3; ++i) {
        f.b(i) = nd(rng);
        for (int j = 0; j < 3; ++j) f.A(i, j) = nd(rng);
    }
    return f;
}

double field_diff(const AffineField& a, const AffineField& b) {
    return std::max((a.A - b.A).cwiseAbs().maxCoeff(), (a.b - b.b).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("reference model") {
    AffineSDEModel m = AffineSDEModel::reference();
    Mat3 L;
    L << 1, -1, 0, -0.28, 1, 0, 0, 0, 8.0 / 3.0;
    CHECK((m.Lambda - L).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(m.g == 0.5);
    CHECK(m.linear());
    m.g = 0.0;
    CHECK_THROWS(m.validate());
    m = AffineSDEModel::reference();
    m.R = -1.0;
    CHECK_THROWS(m.validate());
}

TEST_CASE("gamma on generators and brackets") {
    AffineSDEModel m = AffineSDEModel::reference();
    AffineField g1 = gamma_generator(m, 1);
    CHECK(g1.A.isZero());
    CHECK(g1.b == Vec3(0.5, 0, 0));
    AffineField g0 = gamma_generator(m, 0);
    CHECK(g0.A == -m.Lambda);
    CHECK(g0.b.isZero());

    CHECK(field_diff(bracket(gamma_generator(m, 1), gamma_generator(m, 2)), AffineField{}) == 0.0);
    AffineField b01 = bracket(g0, g1);
    CHECK(b01.A.isZero());
    CHECK((b01.b - m.Lambda * Vec3(0.5, 0, 0)).norm() < 1e-15);

    LiePolynomial L(3);
    L.add(Word{0, 1}, 1.0);
    CHECK(field_diff(gamma_apply(L, m), b01) < 1e-15);

    AffineSDEModel nl = m;
    nl.a0 = 1;
    CHECK_THROWS_AS(gamma_apply(L, nl), UnsupportedError);
}

TEST_CASE("affine bracket matches the finite-difference commutator of flows") {
    // phi^g_{-h} phi^f_{-h} phi^g_h phi^f_h (x) = x + h^2 [f, g](x) + O(h^3).
    std::mt19937_64 rng(3);
    AffineField f = 0.3 * random_field(rng), g = 0.3 * random_field(rng);
    const Vec3 x(0.2, -0.4, 0.7);
    const double h = 1e-4;
    Vec3 z = flow_affine(f, h, x);
    z = flow_affine(g, h, z);
    z = flow_affine(f, -h, z);
    z = flow_affine(g, -h, z);
    const Vec3 fd = (z - x) / (h * h);
    const Vec3 exact = bracket(f, g)(x);
    CHECK((fd - exact).norm() < 1e-3 * (1.0 + exact.norm()));

    AffineSDEModel m = AffineSDEModel::reference();
    AffineField g0 = gamma_generator(m, 0), g1 = gamma_generator(m, 1);
    z = flow_affine(g0, h, x);
    z = flow_affine(g1, h, z);
    z = flow_affine(g0, -h, z);
    z = flow_affine(g1, -h, z);
    CHECK(((z - x) / (h * h) - m.Lambda * Vec3(0.5, 0, 0)).norm() < 1e-3);
}

TEST_CASE("Jacobi identity for the affine bracket") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        AffineField a = random_field(rng), b = random_field(rng), c = random_field(rng);
        AffineField j = bracket(a, bracket(b, c)) + bracket(b, bracket(c, a)) + bracket(c, bracket(a, b));
        CHECK(field_diff(j, AffineField{}) < 1e-12);
    }
}

TEST_CASE("gamma_apply is linear") {
    AffineSDEModel m = AffineSDEModel::reference();
    LiePolynomial a(3), b(3), ab(3);
    a.add(Word{0}, 1.0);
    a.add(Word{1, 2}, 0.3);
    a.add(Word{0, 1}, -0.7);
    b.add(Word{2}, 2.0);
    b.add(Word{0, 1}, 0.4);
    b.add(Word{1, 1, 2}, 1.1);
    for (const auto& [w, v] : a.coefficients()) ab.add(w, 2.0 * v);
    for (const auto& [w, v] : b.coefficients()) ab.add(w, -3.0 * v);
    CHECK(field_diff(gamma_apply(ab, m), 2.0 * gamma_apply(a, m) + (-3.0) * gamma_apply(b, m)) < 1e-14);
}

TEST_CASE("flows of simple fields") {
    const Vec3 x(1, 2, 3);
    CHECK(flow_affine(AffineField{}, 0.7, x) == x);
    AffineField c;
    c.b = Vec3(1, -1, 2);
    CHECK((flow_affine(c, 0.5, x) - (x + 0.5 * c.b)).norm() < 1e-15);
}

TEST_CASE("drift flow matches diagonalization and RK oracles") {
    AffineSDEModel m = AffineSDEModel::reference();
    const Vec3 x(1, 1, 1);
    AffineField drift = gamma_generator(m, 0);
    const Vec3 got = flow_affine(drift, 0.5, x);
    CHECK((got - eig_expm_neg(m.Lambda, 0.5) * x).norm() < 1e-13);
    CHECK((got - rk4(drift, x, 0.5, 2000)).norm() < 1e-10);
    CHECK((got - integrate_rk45(drift, x, 0.5, 1e-12)).norm() < 1e-10);
}

TEST_CASE("flow semigroup") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        AffineField f = random_field(rng);
        const Vec3 x(0.1, 0.2, -0.3);
        CHECK((flow_affine(f, 0.5, x) - flow_affine(f, 0.2, flow_affine(f, 0.3, x))).norm() <
              1e-12 * (1.0 + flow_affine(f, 0.5, x).norm()));
    }
}

TEST_CASE("path flows") {
    AffineSDEModel m = AffineSDEModel::reference();
    const Vec3 x(1, -1, 0.5);
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
    CHECK(flow_path(m, {zero}, x) == x);
    Eigen::VectorXd dt = Eigen::VectorXd::Zero(4);
    dt(0) = 0.3;
    CHECK((flow_path(m, {dt}, x) - flow_affine(gamma_generator(m, 0), 0.3, x)).norm() < 1e-15);

    // A two-segment path against RK on the piecewise-constant right side.
    Eigen::VectorXd s1(4), s2(4);
    s1 << 0.2, 0.3, -0.1, 0.4;
    s2 << 0.1, -0.5, 0.2, 0.0;
    Vec3 z = x;
    for (const auto& s : {s1, s2}) {
        AffineField F = s(0) * gamma_generator(m, 0);
        for (int i = 1; i <= 3; ++i) F += s(i) * gamma_generator(m, i);
        z = rk4(F, z, 1.0, 2000);
    }
    CHECK((flow_path(m, {s1, s2}, x) - z).norm() < 1e-11);

    AffineSDEModel nl = m;
    nl.a0 = 1;
    // Generic route: a zero path still returns x.
    CHECK((flow_path(nl, {zero}, x) - x).norm() < 1e-12);
}

TEST_CASE("exact discretization") {
    AffineSDEModel m = AffineSDEModel::reference();
    Discretization tiny = exact_discretization(m, 1e-12);
    CHECK((tiny.F - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-11);
    CHECK(tiny.Q.cwiseAbs().maxCoeff() < 1e-11);

    Discretization d = exact_discretization(m, 0.5);
    CHECK((d.Q - d.Q.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(Eigen::LLT<Mat3>(d.Q).info() == Eigen::Success);
    CHECK((d.F - eig_expm_neg(m.Lambda, 0.5)).cwiseAbs().maxCoeff() < 1e-13);

    // Composite Simpson on the covariance integrand.
    const int n = 400;
    const double h = 0.5 / n;
    Mat3 Q = Mat3::Zero();
    for (int i = 0; i <= n; ++i) {
        const Mat3 E = eig_expm_neg(m.Lambda, i * h);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        Q += w * m.g * m.g * E * E.transpose();
    }
    Q *= h / 3.0;
    CHECK((d.Q - Q).cwiseAbs().maxCoeff() < 1e-10);

    AffineSDEModel nl = m;
    nl.a0 = 1;
    CHECK_THROWS(exact_discretization(nl, 0.5));
}

TEST_CASE("expm of a nilpotent matrix") {
    Mat N = Mat::Zero(3, 3);
    N(0, 1) = 2.0;
    N(1, 2) = 3.0;
    Mat E = expm(N);
    CHECK(E(0, 2) == doctest::Approx(3.0));
    CHECK(E(0, 1) == doctest::Approx(2.0));
    CHECK(E(0, 0) == doctest::Approx(1.0));
}
