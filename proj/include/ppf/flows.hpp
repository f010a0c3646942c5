#pragma once

#include "ppf/measure.hpp"
#include "ppf/tensor_algebra.hpp"

#include <functional>

namespace ppf {

/// dX = [-Lambda X + a0 (0, -x1 x3, x1 x2)] dt + g dW,  Y = X + eta, eta ~ N(0, R I).
struct AffineSDEModel {
    Mat3 Lambda = Mat3::Zero();
    double g = 0.5;
    int a0 = 0;
    double R = 1e-2;
    double T = 0.5;  // observation interval

    static Mat3 lorenz_lambda(double sigma, double rho, double beta);
    /// sigma = 1, rho = 0.28, beta = 8/3, g = 0.5, T = 0.5.
    static AffineSDEModel reference(double R = 1e-2);

    void validate() const;
    bool linear() const { return a0 == 0; }
    /// Drift including the nonlinear term.
    Vec3 drift(const Vec3& x) const;
};

/// Vector field x -> A x + b.
struct AffineField {
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();

    Vec3 operator()(const Vec3& x) const { return A * x + b; }
    AffineField& operator+=(const AffineField& o);
    AffineField& operator*=(double s);
};

AffineField operator+(AffineField a, const AffineField& b);
AffineField operator*(double s, AffineField a);

/// Lie bracket of vector fields: (A2 A1 - A1 A2, A2 b1 - A1 b2).
AffineField bracket(const AffineField& f1, const AffineField& f2);

/// Gamma(e_0) = (-Lambda, 0), Gamma(e_i) = (0, g e_i).
AffineField gamma_generator(const AffineSDEModel& model, int letter);
AffineField gamma_apply(const LiePolynomial& L, const AffineSDEModel& model);

/// Affine map x -> M x + c.
struct AffineMap {
    Mat3 M = Mat3::Identity();
    Vec3 c = Vec3::Zero();

    Vec3 operator()(const Vec3& x) const { return M * x + c; }
    /// (this after first)
    AffineMap after(const AffineMap& first) const { return {M * first.M, M * first.c + c}; }
};

Mat expm(const Mat& A);

/// Time-t flow of an affine field as an affine map, via the augmented 4x4 exponential.
AffineMap flow_affine_map(const AffineField& F, double t);
Vec3 flow_affine(const AffineField& F, double t, const Vec3& x);

/// Solution map of dX = sum_i V_i(X) d omega_i along a piecewise-linear path
/// (linear model only; composed exactly segment by segment).
AffineMap path_affine_map(const AffineSDEModel& model, const PathIncrements& path);
/// Exact for a0 = 0; embedded Runge-Kutta at tolerance 1e-10 otherwise.
Vec3 flow_path(const AffineSDEModel& model, const PathIncrements& path, const Vec3& x);

/// Adaptive Dormand-Prince 5(4) for an autonomous field over [0, t].
Vec3 integrate_rk45(const std::function<Vec3(const Vec3&)>& f, const Vec3& x0, double t, double tol = 1e-10);

struct Discretization {
    Mat3 F;  // e^{-Lambda dt}
    Mat3 Q;  // process-noise covariance over dt
};

Discretization exact_discretization(const AffineSDEModel& model, double dt);

}  // namespace ppf
