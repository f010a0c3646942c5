#pragma once

#include "ppf/measure.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ppf {

/// binom(N + r, r): number of monomials of total degree <= r in N variables.
int monomial_count(int N, int r);

/// Exponent tuples of total degree <= r, graded (degree 0 first).
std::vector<std::vector<int>> monomial_exponents(int N, int r);

/// L x n matrix of monomials at (x - center) / halfwidth, per coordinate.
Mat monomial_matrix(const Mat& points, int r, const Vec& center, const Vec& halfwidth);

/// Carathéodory-type support reduction preserving every monomial moment of
/// degree <= r, total mass included. The output support is a subset of the
/// input support and has at most monomial_count(N, r) points.
DiscreteMeasure reduce_measure(const DiscreteMeasure& mu, int r);

/// Interleaved mantissa bits b^1_1 b^2_1 ... b^N_1 b^1_2 ... of coordinates
/// mapped into [0.5, 1), most significant bit first.
class MortonKey {
public:
    static constexpr int kBitsPerAxis = 52;

    MortonKey() = default;
    explicit MortonKey(int dim);

    int dim() const { return dim_; }
    int bit(int pos) const;
    void set_bit(int pos);
    /// First nbits bits as an integer (nbits <= 64).
    std::uint64_t prefix(int nbits) const;
    bool prefix_equal(const MortonKey& o, int nbits) const;
    bool operator<(const MortonKey& o) const { return words_ < o.words_; }
    bool operator==(const MortonKey& o) const { return words_ == o.words_; }

private:
    int dim_ = 0;
    std::vector<std::uint64_t> words_;
};

struct BoundingBox {
    Vec lo, hi;
};

BoundingBox bounding_box(const Mat& points);

/// Key of x relative to box; zero-width axes contribute zero bits.
MortonKey morton_key(const Eigen::Ref<const Vec>& x, const BoundingBox& box);

/// Sub-measures sharing a key prefix of N * depth bits, ordered by prefix.
std::vector<DiscreteMeasure> morton_partition(const DiscreteMeasure& mu, int depth);

enum class PatchMode { Fixed, Adaptive };

struct RecombConfig {
    int degree = 5;
    PatchMode mode = PatchMode::Fixed;
    int depth = 0;       // fixed depth, or starting depth in adaptive mode
    int max_depth = 8;   // adaptive refinement stops here
    double theta = 0.0;  // adaptive error budget

    void validate() const;
};

/// Geometry handed to the patch error estimator.
struct PatchInfo {
    Vec lo, hi;            // tight bounding box of the patch's points
    double mass = 0.0;
    Eigen::Index count = 0;
    int depth = 0;
    double half_diagonal() const { return 0.5 * (hi - lo).norm(); }
    Vec center() const { return 0.5 * (lo + hi); }
};

using PatchErrorEstimator = std::function<double(const PatchInfo&)>;

struct RecombStats {
    Eigen::Index particles_in = 0;
    Eigen::Index particles_out = 0;
    Eigen::Index particles_reduced = 0;  // entering a patch that needed reduction
    std::size_t patches = 0;
    std::size_t reduced_patches = 0;
    int deepest = 0;
    double budget = 0.0;       // sum of patch estimates (adaptive mode)
    bool budget_met = true;
};

/// Patched recombination over Morton boxes. Global degree <= r moments are
/// checked after the union; a violation throws ConditioningError.
DiscreteMeasure patched_recombine(const DiscreteMeasure& mu, const RecombConfig& cfg,
                                  const PatchErrorEstimator& err_est = {}, RecombStats* stats = nullptr);

/// Max relative deviation of degree <= r raw moments (scaled to mu's box).
double moment_deviation(const DiscreteMeasure& a, const DiscreteMeasure& b, int r);

}  // namespace ppf
