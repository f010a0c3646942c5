// Writes the 28-point degree-5 cubature on Wiener space for d = 3.
//
// Each point is the log-signature
//   L = e0 + sum z_i e_i + sum_{i<j} a_ij [e_i,e_j]
//       + 1/12 sum_{i!=j} z_j [e_i,[e_i,e_j]] + 1/12 sum_i [e_i,[e_i,e0]],
// where z runs over the 14-point degree-5 Gaussian rule on R^3 (6 axial points
// at radius sqrt(5/2), 8 cube vertices (+-sqrt5)^3) and each z is split into
// two copies carrying opposite area terms a, so that E[a] = 0, E[a a^T] = I/4.
// The resulting file is certified by the loader, not by this generator.
#include "ppf/wiener_cubature.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

using namespace ppf;

namespace {

Word w(std::initializer_list<int> l) {
    Word out;
    for (int c : l) out.push_back(static_cast<std::uint8_t>(c));
    return out;
}

// [e_i,[e_i,e_j]] as a Lyndon bracket.
Word iij_word(int i, int j) { return i < j ? w({i, i, j}) : w({j, i, i}); }

}  // namespace

int main(int argc, char** argv) {
    const std::string out = argc > 1 ? argv[1] : default_degree5_path();
    WienerCubature c;
    c.d = 3;
    c.m = 5;

    struct Node {
        Eigen::Vector3d z;
        double weight;
        Eigen::Vector3d area;  // (a12, a13, a23) magnitude pattern
    };
    std::vector<Node> nodes;
    const double r = std::sqrt(2.5);
    const double h = std::sqrt(3.0) / 2.0;
    for (int k = 0; k < 3; ++k)
        for (double s : {1.0, -1.0}) {
            Node n;
            n.z = Eigen::Vector3d::Zero();
            n.z(k) = s * r;
            n.weight = 4.0 / 25.0;
            // Only the pair complementary to axis k carries area.
            n.area = Eigen::Vector3d::Zero();
            n.area(2 - k) = h;  // k=0 -> (23), k=1 -> (13), k=2 -> (12)
            nodes.push_back(n);
        }
    const double v = std::sqrt(5.0);
    for (int b = 0; b < 8; ++b) {
        Node n;
        for (int k = 0; k < 3; ++k) n.z(k) = (b >> (2 - k) & 1) ? -v : v;
        n.weight = 1.0 / 200.0;
        n.area = Eigen::Vector3d(0.5 * std::copysign(1.0, n.z(0) * n.z(1)),
                                 0.5 * std::copysign(1.0, n.z(0) * n.z(2)),
                                 0.5 * std::copysign(1.0, n.z(1) * n.z(2)));
        nodes.push_back(n);
    }

    const int pair_i[3] = {1, 1, 2}, pair_j[3] = {2, 3, 3};
    for (const auto& n : nodes) {
        for (double sgn : {1.0, -1.0}) {
            LiePolynomial L(3);
            L.add(w({0}), 1.0);
            for (int i = 1; i <= 3; ++i)
                if (n.z(i - 1) != 0.0) L.add(w({i}), n.z(i - 1));
            for (int p = 0; p < 3; ++p)
                if (n.area(p) != 0.0) L.add(w({pair_i[p], pair_j[p]}), sgn * n.area(p));
            for (int i = 1; i <= 3; ++i)
                for (int j = 1; j <= 3; ++j)
                    if (i != j && n.z(j - 1) != 0.0) L.add(iij_word(i, j), n.z(j - 1) / 12.0);
            for (int i = 1; i <= 3; ++i) L.add(w({0, i, i}), 1.0 / 12.0);
            c.lie_polys.push_back(std::move(L));
            c.weights.push_back(0.5 * n.weight);
        }
    }

    const auto rep = verify_cubature(c, 1e-10);
    std::cerr << "max deviation " << rep.max_deviation << " at " << word_to_string(rep.argmax) << '\n';
    if (!rep.pass) return 1;
    std::ofstream f(out);
    if (!f) {
        std::cerr << "cannot write " << out << '\n';
        return 1;
    }
    f << "# degree-5 cubature on Wiener space, d = 3, 28 points, unit horizon\n";
    f << "# record: weight followed by lyndon-word:coefficient pairs\n";
    save_formula(f, c);
    return 0;
}
