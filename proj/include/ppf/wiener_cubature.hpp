#pragma once

#include "ppf/tensor_algebra.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppf {

/// Weighted Lie polynomials matching the expected Brownian signature to degree m,
/// stated at `horizon` (1 for freshly built or loaded formulas).
struct WienerCubature {
    int d = 0;
    int m = 0;
    double horizon = 1.0;
    std::vector<double> weights;
    std::vector<LiePolynomial> lie_polys;
    /// Piecewise-linear representatives of the cubature paths, when known.
    std::optional<std::vector<PathIncrements>> paths;

    std::size_t size() const { return weights.size(); }
    bool has_paths() const { return paths.has_value(); }
};

/// Verification at the formula's horizon; `degree` defaults to c.m.
CubatureReport verify_cubature(const WienerCubature& c, double tol, std::optional<int> degree = std::nullopt);

/// ell = e_0 +- sqrt(d) e_i, weight 1/(2d).
WienerCubature degree3_formula(int d);

/// Throws CubatureError when the formula does not verify.
void certify(const WienerCubature& c, double tol = 1e-10);

class CubatureError : public std::runtime_error {
public:
    CubatureError(const std::string& what, CubatureReport r) : std::runtime_error(what), report(std::move(r)) {}
    CubatureReport report;
};

void save_formula(std::ostream& os, const WienerCubature& c);
/// Parses and certifies at 1e-10; expected_m/expected_d of 0 accept any header.
WienerCubature read_formula(std::istream& is, int expected_d = 0, int expected_m = 0);
WienerCubature load_formula_file(const std::string& path, int expected_d = 0, int expected_m = 0);

/// The shipped d=3, m=5, 28-point formula.
WienerCubature load_degree5_formula(const std::string& path);
WienerCubature load_degree5_formula();
std::string default_degree5_path();

/// Scales the formula from its current horizon to T (paths and Lie coefficients).
WienerCubature scale_to_horizon(const WienerCubature& c, double T);

struct GaussianCubature {
    Eigen::MatrixXd nodes;  // N x n
    Eigen::VectorXd weights;
    int degree = 0;
    std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
};

/// n-node probabilists' Gauss-Hermite rule for N(0,1) (Golub-Welsch).
GaussianCubature gauss_hermite_1d(int n);

/// Tensor product rule for N(0, I_N); degree m uses (m+1)/2 nodes per axis.
GaussianCubature gauss_hermite_tensor(int N, int m);

}  // namespace ppf
