#include "ppf/flows.hpp"

#include "ppf/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <map>

namespace ppf {

Mat3 AffineSDEModel::lorenz_lambda(double sigma, double rho, double beta) {
    Mat3 L;
    L << sigma, -sigma, 0.0, -rho, 1.0, 0.0, 0.0, 0.0, beta;
    return L;
}

AffineSDEModel AffineSDEModel::reference(double R) {
    AffineSDEModel m;
    m.Lambda = lorenz_lambda(1.0, 0.28, 8.0 / 3.0);
    m.g = 0.5;
    m.a0 = 0;
    m.R = R;
    m.T = 0.5;
    return m;
}

void AffineSDEModel::validate() const {
    if (!(g > 0.0)) throw ConfigError("model: g must be positive");
    if (!(R > 0.0)) throw ConfigError("model: R must be positive");
    if (!(T > 0.0)) throw ConfigError("model: T must be positive");
    if (a0 != 0 && a0 != 1) throw ConfigError("model: a0 must be 0 or 1");
    if (!Lambda.allFinite()) throw ConfigError("model: Lambda is not finite");
}

Vec3 AffineSDEModel::drift(const Vec3& x) const {
    Vec3 v = -Lambda * x;
    if (a0) {
        v(1) -= x(0) * x(2);
        v(2) += x(0) * x(1);
    }
    return v;
}

AffineField& AffineField::operator+=(const AffineField& o) {
    A += o.A;
    b += o.b;
    return *this;
}

AffineField& AffineField::operator*=(double s) {
    A *= s;
    b *= s;
    return *this;
}

AffineField operator+(AffineField a, const AffineField& b) { return a += b; }
AffineField operator*(double s, AffineField a) { return a *= s; }

AffineField bracket(const AffineField& f1, const AffineField& f2) {
    return {f2.A * f1.A - f1.A * f2.A, f2.A * f1.b - f1.A * f2.b};
}

AffineField gamma_generator(const AffineSDEModel& model, int letter) {
    AffineField f;
    if (letter == 0) {
        f.A = -model.Lambda;
    } else if (letter >= 1 && letter <= 3) {
        f.b(letter - 1) = model.g;
    } else {
        throw DomainError("gamma_generator: letter out of range");
    }
    return f;
}

namespace {

AffineField gamma_lyndon(const Word& w, const AffineSDEModel& model, std::map<Word, AffineField>& memo) {
    auto it = memo.find(w);
    if (it != memo.end()) return it->second;
    AffineField f;
    if (w.size() == 1) {
        f = gamma_generator(model, w[0]);
    } else {
        auto [u, v] = lyndon_split(w);
        f = bracket(gamma_lyndon(u, model, memo), gamma_lyndon(v, model, memo));
    }
    memo.emplace(w, f);
    return f;
}

}  // namespace

AffineField gamma_apply(const LiePolynomial& L, const AffineSDEModel& model) {
    if (!model.linear()) throw UnsupportedError("gamma_apply: nonlinear drift is not affine-closed");
    if (L.d() != 3) throw DomainError("gamma_apply: the model is driven by 3 Brownian motions");
    std::map<Word, AffineField> memo;
    AffineField out;
    for (const auto& [w, c] : L.coefficients()) {
        if (c == 0.0) continue;
        out += c * gamma_lyndon(w, model, memo);
    }
    return out;
}

Mat expm(const Mat& A) { return A.exp(); }

AffineMap flow_affine_map(const AffineField& F, double t) {
    Eigen::Matrix4d aug = Eigen::Matrix4d::Zero();
    aug.topLeftCorner<3, 3>() = F.A * t;
    aug.topRightCorner<3, 1>() = F.b * t;
    const Eigen::Matrix4d E = aug.exp();
    return {E.topLeftCorner<3, 3>(), E.topRightCorner<3, 1>()};
}

Vec3 flow_affine(const AffineField& F, double t, const Vec3& x) { return flow_affine_map(F, t)(x); }

AffineMap path_affine_map(const AffineSDEModel& model, const PathIncrements& path) {
    if (!model.linear()) throw UnsupportedError("path_affine_map: nonlinear model has no affine solution map");
    AffineMap total;
    for (const auto& v : path) {
        if (v.size() != 4) throw DomainError("path_affine_map: increments must have 4 entries");
        AffineField seg;
        seg.A = -model.Lambda * v(0);
        seg.b = model.g * v.tail<3>();
        total = flow_affine_map(seg, 1.0).after(total);
    }
    return total;
}

Vec3 integrate_rk45(const std::function<Vec3(const Vec3&)>& f, const Vec3& x0, double t, double tol) {
    // Dormand-Prince coefficients.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    (void)c2, (void)c3, (void)c4, (void)c5;
    if (t == 0.0) return x0;
    const double dir = t > 0 ? 1.0 : -1.0;
    const double T = std::abs(t);
    double s = 0.0, h = std::min(T, 1e-2);
    Vec3 x = x0;
    Vec3 k1 = f(x);
    int guard = 0;
    while (s < T) {
        if (++guard > 10000000) throw ConvergenceError("integrate_rk45: too many steps");
        h = std::min(h, T - s);
        const double hh = dir * h;
        const Vec3 k2 = f(x + hh * (a21 * k1));
        const Vec3 k3 = f(x + hh * (a31 * k1 + a32 * k2));
        const Vec3 k4 = f(x + hh * (a41 * k1 + a42 * k2 + a43 * k3));
        const Vec3 k5 = f(x + hh * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Vec3 k6 = f(x + hh * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Vec3 xn = x + hh * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Vec3 k7 = f(xn);
        const Vec3 err = hh * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double sc = tol * (1.0 + std::max(x.cwiseAbs().maxCoeff(), xn.cwiseAbs().maxCoeff()));
        const double en = err.cwiseAbs().maxCoeff() / sc;
        if (en <= 1.0) {
            s += h;
            x = xn;
            k1 = k7;
        }
        const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        h *= fac;
        if (h < 1e-14 * T) throw ConvergenceError("integrate_rk45: step size underflow");
    }
    return x;
}

Vec3 flow_path(const AffineSDEModel& model, const PathIncrements& path, const Vec3& x) {
    if (model.linear()) return path_affine_map(model, path)(x);
    Vec3 y = x;
    for (const auto& v : path) {
        if (v.size() != 4) throw DomainError("flow_path: increments must have 4 entries");
        const Vec3 noise = model.g * v.tail<3>();
        const double dt = v(0);
        y = integrate_rk45([&](const Vec3& z) -> Vec3 { return dt * model.drift(z) + noise; }, y, 1.0);
    }
    return y;
}

Discretization exact_discretization(const AffineSDEModel& model, double dt) {
    if (!model.linear()) throw UnsupportedError("exact_discretization: model is nonlinear");
    Eigen::Matrix<double, 6, 6> B = Eigen::Matrix<double, 6, 6>::Zero();
    B.topLeftCorner<3, 3>() = -model.Lambda * dt;
    B.topRightCorner<3, 3>() = model.g * model.g * dt * Mat3::Identity();
    B.bottomRightCorner<3, 3>() = model.Lambda.transpose() * dt;
    const Eigen::Matrix<double, 6, 6> E = B.exp();
    Discretization out;
    out.F = E.topLeftCorner<3, 3>();
    const Mat3 Q = E.topRightCorner<3, 3>() * out.F.transpose();
    out.Q = 0.5 * (Q + Q.transpose());
    return out;
}

}  // namespace ppf
