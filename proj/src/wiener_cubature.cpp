#include "ppf/wiener_cubature.hpp"

#include "ppf/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace ppf {

CubatureReport verify_cubature(const WienerCubature& c, double tol, std::optional<int> degree) {
    // lie_polys live at c.horizon; the verifier expects unit-horizon input.
    if (c.horizon == 1.0) return verify_lie_cubature(c.weights, c.lie_polys, c.d, degree.value_or(c.m), 1.0, tol);
    std::vector<LiePolynomial> unit;
    unit.reserve(c.size());
    for (const auto& L : c.lie_polys) unit.push_back(L.scaled(1.0 / c.horizon));
    return verify_lie_cubature(c.weights, unit, c.d, degree.value_or(c.m), c.horizon, tol);
}

void certify(const WienerCubature& c, double tol) {
    double s = 0.0;
    bool positive = true;
    for (double w : c.weights) {
        positive = positive && w > 0.0;
        s += w;
    }
    const auto rep = verify_cubature(c, tol);
    if (!rep.pass || !positive || std::abs(s - 1.0) > 1e-14) {
        std::ostringstream os;
        os << "cubature formula (d=" << c.d << ", m=" << c.m << ", n=" << c.size()
           << ") fails verification: max deviation " << rep.max_deviation << " at word "
           << word_to_string(rep.argmax) << ", weight sum " << std::setprecision(17) << s;
        if (!positive) os << ", nonpositive weight";
        throw CubatureError(os.str(), rep);
    }
}

WienerCubature degree3_formula(int d) {
    if (d < 1) throw DomainError("degree3_formula: d must be >= 1");
    WienerCubature c;
    c.d = d;
    c.m = 3;
    std::vector<PathIncrements> paths;
    const double a = std::sqrt(static_cast<double>(d));
    for (int i = 1; i <= d; ++i) {
        for (double sgn : {1.0, -1.0}) {
            LiePolynomial L(d);
            L.add(Word{0}, 1.0);
            L.add(Word{static_cast<std::uint8_t>(i)}, sgn * a);
            c.lie_polys.push_back(std::move(L));
            c.weights.push_back(1.0 / (2.0 * d));
            Eigen::VectorXd v = Eigen::VectorXd::Zero(d + 1);
            v(0) = 1.0;
            v(i) = sgn * a;
            paths.push_back(PathIncrements{v});
        }
    }
    c.paths = std::move(paths);
    certify(c, 1e-14);
    return c;
}

void save_formula(std::ostream& os, const WienerCubature& c) {
    os << c.d << ' ' << c.m << ' ' << c.size() << '\n';
    os << std::setprecision(17);
    for (std::size_t j = 0; j < c.size(); ++j) {
        os << c.weights[j];
        for (const auto& [w, v] : c.lie_polys[j].coefficients()) os << ' ' << word_to_string(w) << ':' << v;
        os << '\n';
    }
}

WienerCubature read_formula(std::istream& is, int expected_d, int expected_m) {
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            const auto p = line.find_first_not_of(" \t\r");
            if (p == std::string::npos || line[p] == '#') continue;
            return true;
        }
        return false;
    };
    if (!next_line()) throw DomainError("cubature file: missing header");
    WienerCubature c;
    std::size_t n = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> c.d >> c.m >> n)) throw DomainError("cubature file: header must be 'd m n'");
    }
    if ((expected_d && c.d != expected_d) || (expected_m && c.m != expected_m)) {
        std::ostringstream os;
        os << "cubature file: header says d=" << c.d << " m=" << c.m << ", expected d=" << expected_d
           << " m=" << expected_m;
        throw DomainError(os.str());
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (!next_line()) throw DomainError("cubature file: fewer records than the header states");
        std::istringstream rs(line);
        double lam;
        if (!(rs >> lam)) throw DomainError("cubature file: record without weight");
        LiePolynomial L(c.d);
        std::string tok;
        while (rs >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw DomainError("cubature file: expected word:coef, got " + tok);
            const Word w = word_from_string(tok.substr(0, colon));
            std::size_t used = 0;
            const std::string num = tok.substr(colon + 1);
            const double v = std::stod(num, &used);
            if (used != num.size()) throw DomainError("cubature file: bad coefficient " + num);
            L.add(w, v);
        }
        c.weights.push_back(lam);
        c.lie_polys.push_back(std::move(L));
    }
    if (next_line()) throw DomainError("cubature file: more records than the header states");
    certify(c, 1e-10);
    return c;
}

WienerCubature load_formula_file(const std::string& path, int expected_d, int expected_m) {
    std::ifstream f(path);
    if (!f) throw DomainError("cannot open cubature file " + path);
    return read_formula(f, expected_d, expected_m);
}

std::string default_degree5_path() { return std::string(PPF_DATA_DIR) + "/wiener_d3_m5.txt"; }

WienerCubature load_degree5_formula(const std::string& path) {
    WienerCubature c = load_formula_file(path, 3, 5);
    if (c.size() != 28) throw DomainError("degree-5 formula: expected 28 points");
    return c;
}

WienerCubature load_degree5_formula() { return load_degree5_formula(default_degree5_path()); }

WienerCubature scale_to_horizon(const WienerCubature& c, double T) {
    if (!(T > 0.0)) throw DomainError("scale_to_horizon: T must be positive");
    const double f = T / c.horizon;
    WienerCubature out = c;
    out.horizon = T;
    for (auto& L : out.lie_polys) L = L.scaled(f);
    if (out.paths) {
        const double rf = std::sqrt(f);
        for (auto& path : *out.paths)
            for (auto& v : path) {
                v(0) *= f;
                v.tail(v.size() - 1) *= rf;
            }
    }
    return out;
}

GaussianCubature gauss_hermite_1d(int n) {
    if (n < 1) throw DomainError("gauss_hermite_1d: n must be >= 1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussianCubature g;
    g.degree = 2 * n - 1;
    g.nodes = es.eigenvalues().transpose();
    g.weights = es.eigenvectors().row(0).transpose().array().square();
    g.weights /= g.weights.sum();
    // Symmetrize: the rule is exactly symmetric, roundoff is not.
    for (int i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (g.nodes(0, n - 1 - i) - g.nodes(0, i));
        g.nodes(0, i) = -x;
        g.nodes(0, n - 1 - i) = x;
        const double w = 0.5 * (g.weights(i) + g.weights(n - 1 - i));
        g.weights(i) = g.weights(n - 1 - i) = w;
    }
    if (n % 2) g.nodes(0, n / 2) = 0.0;
    return g;
}

GaussianCubature gauss_hermite_tensor(int N, int m) {
    if (N < 1) throw DomainError("gauss_hermite_tensor: N must be >= 1");
    if (m < 1 || m % 2 == 0) throw DomainError("gauss_hermite_tensor: degree must be odd");
    const int q = (m + 1) / 2;
    const GaussianCubature g1 = gauss_hermite_1d(q);
    Eigen::Index n = 1;
    for (int k = 0; k < N; ++k) n *= q;
    GaussianCubature g;
    g.degree = m;
    g.nodes.resize(N, n);
    g.weights.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index r = j;
        double w = 1.0;
        for (int k = N - 1; k >= 0; --k) {
            const Eigen::Index i = r % q;
            r /= q;
            g.nodes(k, j) = g1.nodes(0, i);
            w *= g1.weights(i);
        }
        g.weights(j) = w;
    }
    return g;
}

}  // namespace ppf
