#include "ppf/recombination.hpp"

#include "ppf/error.hpp"
#include "ppf/parallel.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <functional>
#include <limits>
#include <queue>

namespace ppf {

int monomial_count(int N, int r) {
    long c = 1;
    for (int k = 1; k <= r; ++k) c = c * (N + k) / k;
    return static_cast<int>(c);
}

std::vector<std::vector<int>> monomial_exponents(int N, int r) {
    std::vector<std::vector<int>> out;
    std::vector<int> e(N, 0);
    // Degree by degree; within a degree, lexicographically descending.
    for (int deg = 0; deg <= r; ++deg) {
        std::function<void(int, int)> rec = [&](int axis, int left) {
            if (axis == N - 1) {
                e[axis] = left;
                out.push_back(e);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[axis] = k;
                rec(axis + 1, left - k);
            }
        };
        rec(0, deg);
    }
    return out;
}

Mat monomial_matrix(const Mat& points, int r, const Vec& center, const Vec& halfwidth) {
    const int N = static_cast<int>(points.rows());
    const auto ex = monomial_exponents(N, r);
    const Eigen::Index n = points.cols();
    Mat A(static_cast<Eigen::Index>(ex.size()), n);
    std::vector<double> pw(static_cast<std::size_t>(N) * (r + 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int a = 0; a < N; ++a) {
            const double u = (points(a, i) - center(a)) / halfwidth(a);
            double p = 1.0;
            for (int k = 0; k <= r; ++k) {
                pw[a * (r + 1) + k] = p;
                p *= u;
            }
        }
        for (std::size_t k = 0; k < ex.size(); ++k) {
            double v = 1.0;
            for (int a = 0; a < N; ++a) v *= pw[a * (r + 1) + ex[k][a]];
            A(static_cast<Eigen::Index>(k), i) = v;
        }
    }
    return A;
}

BoundingBox bounding_box(const Mat& points) {
    if (points.cols() == 0) throw DomainError("bounding_box: no points");
    return {points.rowwise().minCoeff(), points.rowwise().maxCoeff()};
}

namespace {

void box_geometry(const BoundingBox& b, Vec& center, Vec& half) {
    center = 0.5 * (b.lo + b.hi);
    half = 0.5 * (b.hi - b.lo);
    for (Eigen::Index a = 0; a < half.size(); ++a)
        if (!(half(a) > 0.0)) half(a) = 1.0;
}

// Eliminates columns of A (L x n) with kernel directions until the live
// columns are linearly independent. w is updated in place; dead entries are 0.
void caratheodory(const Mat& A, Vec& w) {
    const Eigen::Index n = A.cols();
    std::vector<Eigen::Index> alive;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w(i) > 0.0) alive.push_back(i);
        else w(i) = 0.0;
    const double wtot = w.sum();
    while (true) {
        const Eigen::Index na = static_cast<Eigen::Index>(alive.size());
        if (na <= 1) return;
        Mat At(na, A.rows());
        for (Eigen::Index j = 0; j < na; ++j) At.row(j) = A.col(alive[j]).transpose();
        Eigen::ColPivHouseholderQR<Mat> qr(At);
        const Eigen::Index rank = qr.rank();
        if (rank >= na) return;
        Mat Q = qr.householderQ();
        Mat K = Q.rightCols(na - rank);  // columns span ker(A restricted to alive)
        Vec wl(na);
        for (Eigen::Index j = 0; j < na; ++j) wl(j) = w(alive[j]);
        std::vector<char> dead(na, 0);

        while (K.cols() > 0) {
            Vec c = K.col(0);
            // Pick the sign with the larger positive part so alpha is well defined.
            if (c.maxCoeff() <= 0.0) c = -c;
            double alpha = std::numeric_limits<double>::infinity();
            Eigen::Index p = -1;
            for (Eigen::Index j = 0; j < na; ++j) {
                if (dead[j] || c(j) <= 0.0) continue;
                const double t = wl(j) / c(j);
                if (t < alpha) {
                    alpha = t;
                    p = j;
                }
            }
            if (p < 0) break;
            wl -= alpha * c;
            wl(p) = 0.0;
            // Newly dead points: the minimizer and anything driven to (numerical) zero.
            std::vector<Eigen::Index> kill;
            for (Eigen::Index j = 0; j < na; ++j) {
                if (dead[j]) continue;
                if (j == p || wl(j) <= 1e-16 * wtot) {
                    wl(j) = 0.0;
                    dead[j] = 1;
                    kill.push_back(j);
                }
            }
            // Remove each dead row from the remaining kernel basis.
            for (Eigen::Index q : kill) {
                if (K.cols() == 0) break;
                Eigen::Index piv;
                const double mx = K.row(q).cwiseAbs().maxCoeff(&piv);
                if (mx == 0.0) continue;
                const Vec kp = K.col(piv);
                for (Eigen::Index l = 0; l < K.cols(); ++l)
                    if (l != piv) K.col(l) -= (K(q, l) / kp(q)) * kp;
                if (piv != K.cols() - 1) K.col(piv) = K.col(K.cols() - 1);
                K.conservativeResize(Eigen::NoChange, K.cols() - 1);
            }
        }
        std::vector<Eigen::Index> next;
        for (Eigen::Index j = 0; j < na; ++j) {
            w(alive[j]) = std::max(0.0, wl(j));
            if (w(alive[j]) > 0.0) next.push_back(alive[j]);
        }
        if (next.size() == alive.size()) return;  // no progress possible
        alive.swap(next);
    }
}

// Reduction in local coordinates; returns kept indices and their weights.
void reduce_indices(const Mat& phi, const Vec& w0, std::vector<Eigen::Index>& keep, Vec& wk) {
    const Eigen::Index L = phi.rows();
    std::vector<Eigen::Index> idx;
    std::vector<double> w;
    for (Eigen::Index i = 0; i < phi.cols(); ++i)
        if (w0(i) > 0.0) {
            idx.push_back(i);
            w.push_back(w0(i));
        }
    // Divide and conquer: reduce 2L group barycentres, rescale survivors, repeat.
    while (static_cast<Eigen::Index>(idx.size()) > 2 * L) {
        const std::size_t n = idx.size();
        const std::size_t G = static_cast<std::size_t>(2 * L);
        Mat Ag = Mat::Zero(L, static_cast<Eigen::Index>(G));
        Vec Wg = Vec::Zero(static_cast<Eigen::Index>(G));
        auto group_of = [&](std::size_t k) { return k * G / n; };
        for (std::size_t k = 0; k < n; ++k) {
            const auto g = static_cast<Eigen::Index>(group_of(k));
            Ag.col(g) += w[k] * phi.col(idx[k]);
            Wg(g) += w[k];
        }
        for (Eigen::Index g = 0; g < static_cast<Eigen::Index>(G); ++g)
            if (Wg(g) > 0.0) Ag.col(g) /= Wg(g);
        Vec Wn = Wg;
        caratheodory(Ag, Wn);
        std::vector<Eigen::Index> idx2;
        std::vector<double> w2;
        for (std::size_t k = 0; k < n; ++k) {
            const auto g = static_cast<Eigen::Index>(group_of(k));
            if (Wn(g) > 0.0) {
                idx2.push_back(idx[k]);
                w2.push_back(w[k] * (Wn(g) / Wg(g)));
            }
        }
        if (idx2.size() == n) break;
        idx.swap(idx2);
        w.swap(w2);
    }
    Mat A(L, static_cast<Eigen::Index>(idx.size()));
    Vec wv(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        A.col(static_cast<Eigen::Index>(k)) = phi.col(idx[k]);
        wv(static_cast<Eigen::Index>(k)) = w[k];
    }
    if (static_cast<Eigen::Index>(idx.size()) > L) caratheodory(A, wv);
    keep.clear();
    std::vector<double> kw;
    for (std::size_t k = 0; k < idx.size(); ++k)
        if (wv(static_cast<Eigen::Index>(k)) > 0.0) {
            keep.push_back(idx[k]);
            kw.push_back(wv(static_cast<Eigen::Index>(k)));
        }
    wk = Eigen::Map<Vec>(kw.data(), static_cast<Eigen::Index>(kw.size()));
}

DiscreteMeasure reduce_local(const DiscreteMeasure& mu, int r) {
    const int N = mu.dim();
    const Eigen::Index L = monomial_count(N, r);
    if (mu.size() <= L) return mu;
    Vec c, h;
    box_geometry(bounding_box(mu.points()), c, h);
    const Mat phi = monomial_matrix(mu.points(), r, c, h);
    std::vector<Eigen::Index> keep;
    Vec wk;
    reduce_indices(phi, mu.weights(), keep, wk);
    if (static_cast<Eigen::Index>(keep.size()) > L)
        throw ConditioningError("reduce_measure: no usable kernel although the support exceeds the moment count");
    // keep is ascending, so the output preserves the input's relative order.
    Mat pts(N, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) pts.col(static_cast<Eigen::Index>(k)) = mu.point(keep[k]);
    return DiscreteMeasure(std::move(pts), std::move(wk));
}

}  // namespace

double moment_deviation(const DiscreteMeasure& a, const DiscreteMeasure& b, int r) {
    Vec c, h;
    box_geometry(bounding_box(a.points()), c, h);
    const Mat pa = monomial_matrix(a.points(), r, c, h);
    const Mat pb = monomial_matrix(b.points(), r, c, h);
    const Vec ma = pa * a.weights(), mb = pb * b.weights();
    const Vec scale = pa.cwiseAbs() * a.weights();
    double dev = 0.0;
    for (Eigen::Index k = 0; k < ma.size(); ++k)
        dev = std::max(dev, std::abs(ma(k) - mb(k)) / std::max(scale(k), 1e-300));
    return dev;
}

DiscreteMeasure reduce_measure(const DiscreteMeasure& mu, int r) {
    if (r < 1) throw DomainError("reduce_measure: degree must be >= 1");
    if (mu.empty()) return mu;
    return reduce_local(mu, r);
}

}  // namespace ppf

namespace ppf {

MortonKey::MortonKey(int dim) : dim_(dim), words_((dim * kBitsPerAxis + 63) / 64, 0) {}

int MortonKey::bit(int pos) const { return static_cast<int>(words_[pos / 64] >> (63 - pos % 64) & 1u); }

void MortonKey::set_bit(int pos) { words_[pos / 64] |= std::uint64_t{1} << (63 - pos % 64); }

std::uint64_t MortonKey::prefix(int nbits) const {
    if (nbits < 0 || nbits > 64) throw DomainError("MortonKey::prefix: at most 64 bits");
    std::uint64_t v = 0;
    for (int i = 0; i < nbits; ++i) v = v << 1 | static_cast<std::uint64_t>(bit(i));
    return v;
}

bool MortonKey::prefix_equal(const MortonKey& o, int nbits) const {
    for (int i = 0; i < nbits; ++i)
        if (bit(i) != o.bit(i)) return false;
    return true;
}

namespace {

// 52-bit mantissa of the coordinate mapped into [0.5, 1).
std::uint64_t mantissa_bits(double x, double lo, double hi) {
    const double w = hi - lo;
    if (!(w > 0.0)) return 0;
    double u = (x - lo) / w;
    u = std::clamp(u, 0.0, 1.0);
    double y = 0.5 + 0.5 * u;
    if (y >= 1.0) y = std::nextafter(1.0, 0.0);
    return std::bit_cast<std::uint64_t>(y) & ((std::uint64_t{1} << 52) - 1);
}

// Per-particle mantissas; the Morton digit at level l (1-based) collects bit
// (52 - l) of each axis, axis 0 most significant.
struct MortonTable {
    int N = 0;
    std::vector<std::uint64_t> mant;  // n x N

    MortonTable(const Mat& pts, const BoundingBox& box) : N(static_cast<int>(pts.rows())) {
        mant.resize(static_cast<std::size_t>(pts.cols()) * N);
        for (Eigen::Index i = 0; i < pts.cols(); ++i)
            for (int a = 0; a < N; ++a) mant[i * N + a] = mantissa_bits(pts(a, i), box.lo(a), box.hi(a));
    }
    unsigned digit(Eigen::Index i, int level) const {
        unsigned d = 0;
        for (int a = 0; a < N; ++a)
            d = d << 1 | static_cast<unsigned>(mant[i * N + a] >> (MortonKey::kBitsPerAxis - level) & 1u);
        return d;
    }
};

struct Patch {
    std::vector<Eigen::Index> idx;  // ascending
    int depth = 0;
};

// Children of a patch at depth+1 in digit order; empty children omitted.
std::vector<Patch> split_patch(const Patch& p, const MortonTable& mt) {
    const unsigned nd = 1u << mt.N;
    std::vector<Patch> kids(nd);
    for (auto i : p.idx) kids[mt.digit(i, p.depth + 1)].idx.push_back(i);
    std::vector<Patch> out;
    for (auto& k : kids)
        if (!k.idx.empty()) {
            k.depth = p.depth + 1;
            out.push_back(std::move(k));
        }
    return out;
}

std::vector<Patch> patches_at_depth(Patch root, int depth, const MortonTable& mt) {
    std::vector<Patch> cur{std::move(root)};
    for (int l = 0; l < depth; ++l) {
        std::vector<Patch> next;
        for (const auto& p : cur) {
            auto kids = split_patch(p, mt);
            for (auto& k : kids) next.push_back(std::move(k));
        }
        cur.swap(next);
    }
    return cur;
}

DiscreteMeasure gather(const DiscreteMeasure& mu, const std::vector<Eigen::Index>& idx) {
    Mat pts(mu.dim(), static_cast<Eigen::Index>(idx.size()));
    Vec w(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        pts.col(static_cast<Eigen::Index>(k)) = mu.point(idx[k]);
        w(static_cast<Eigen::Index>(k)) = mu.weight(idx[k]);
    }
    return DiscreteMeasure(std::move(pts), std::move(w));
}

PatchInfo patch_info(const DiscreteMeasure& mu, const Patch& p) {
    PatchInfo info;
    info.lo = Vec::Constant(mu.dim(), std::numeric_limits<double>::infinity());
    info.hi = -info.lo;
    for (auto i : p.idx) {
        info.lo = info.lo.cwiseMin(mu.point(i));
        info.hi = info.hi.cwiseMax(mu.point(i));
        info.mass += mu.weight(i);
    }
    info.count = static_cast<Eigen::Index>(p.idx.size());
    info.depth = p.depth;
    return info;
}

Patch root_patch(Eigen::Index n) {
    Patch r;
    r.idx.resize(static_cast<std::size_t>(n));
    std::iota(r.idx.begin(), r.idx.end(), Eigen::Index{0});
    return r;
}

}  // namespace

MortonKey morton_key(const Eigen::Ref<const Vec>& x, const BoundingBox& box) {
    const int N = static_cast<int>(x.size());
    MortonKey k(N);
    std::vector<std::uint64_t> m(N);
    for (int a = 0; a < N; ++a) m[a] = mantissa_bits(x(a), box.lo(a), box.hi(a));
    int pos = 0;
    for (int l = 1; l <= MortonKey::kBitsPerAxis; ++l)
        for (int a = 0; a < N; ++a, ++pos)
            if (m[a] >> (MortonKey::kBitsPerAxis - l) & 1u) k.set_bit(pos);
    return k;
}

std::vector<DiscreteMeasure> morton_partition(const DiscreteMeasure& mu, int depth) {
    if (depth < 0) throw DomainError("morton_partition: negative depth");
    if (depth > MortonKey::kBitsPerAxis) throw DomainError("morton_partition: depth exceeds 52 bits");
    if (mu.empty()) return {};
    const MortonTable mt(mu.points(), bounding_box(mu.points()));
    std::vector<DiscreteMeasure> out;
    for (const auto& p : patches_at_depth(root_patch(mu.size()), depth, mt)) out.push_back(gather(mu, p.idx));
    return out;
}

void RecombConfig::validate() const {
    if (degree < 1) throw ConfigError("recombination: degree must be >= 1");
    if (depth < 0 || depth > MortonKey::kBitsPerAxis)
        throw ConfigError("recombination: depth must be in 0..52");
    if (mode == PatchMode::Adaptive) {
        if (!(theta > 0.0)) throw ConfigError("recombination: theta must be positive in adaptive mode");
        if (max_depth < depth || max_depth > MortonKey::kBitsPerAxis)
            throw ConfigError("recombination: max_depth must be in depth..52");
    }
}

DiscreteMeasure patched_recombine(const DiscreteMeasure& mu, const RecombConfig& cfg,
                                  const PatchErrorEstimator& err_est, RecombStats* stats) {
    cfg.validate();
    if (cfg.mode == PatchMode::Adaptive && !err_est)
        throw DomainError("patched_recombine: adaptive mode needs an error estimator");
    RecombStats st;
    st.particles_in = mu.size();
    if (mu.empty()) {
        if (stats) *stats = st;
        return mu;
    }
    const Eigen::Index L = monomial_count(mu.dim(), cfg.degree);
    const MortonTable mt(mu.points(), bounding_box(mu.points()));
    std::vector<Patch> patches = patches_at_depth(root_patch(mu.size()), cfg.depth, mt);

    if (cfg.mode == PatchMode::Adaptive) {
        // Greedy refinement: split the patch with the largest estimate until the
        // summed estimate fits theta or nothing is left to split.
        struct Item {
            double est;
            std::size_t id;
        };
        auto cmp = [](const Item& a, const Item& b) { return a.est < b.est || (a.est == b.est && a.id > b.id); };
        std::vector<Patch> pool;
        std::vector<double> est;
        std::vector<char> live;
        std::priority_queue<Item, std::vector<Item>, decltype(cmp)> pq(cmp);
        double total = 0.0;
        auto push = [&](Patch p) {
            const double e = static_cast<Eigen::Index>(p.idx.size()) > L ? err_est(patch_info(mu, p)) : 0.0;
            pool.push_back(std::move(p));
            est.push_back(e);
            live.push_back(1);
            total += e;
            if (e > 0.0) pq.push({e, pool.size() - 1});
        };
        for (auto& p : patches) push(std::move(p));
        while (total > cfg.theta && !pq.empty()) {
            const Item it = pq.top();
            pq.pop();
            const Patch& p = pool[it.id];
            if (p.depth >= cfg.max_depth) continue;
            auto kids = split_patch(p, mt);
            live[it.id] = 0;
            total -= est[it.id];
            for (auto& k : kids) push(std::move(k));
        }
        // Recompute the sum from scratch to avoid drift from the running total.
        total = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (live[i]) total += est[i];
        st.budget = total;
        st.budget_met = total <= cfg.theta;
        // Restore Morton order of the surviving leaves.
        std::vector<Patch> leaves;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (live[i]) leaves.push_back(std::move(pool[i]));
        std::sort(leaves.begin(), leaves.end(), [&](const Patch& a, const Patch& b) {
            const int dmin = std::min(a.depth, b.depth);
            const Eigen::Index ia = a.idx.front(), ib = b.idx.front();
            for (int l = 1; l <= dmin; ++l) {
                const unsigned da = mt.digit(ia, l), db = mt.digit(ib, l);
                if (da != db) return da < db;
            }
            return false;  // disjoint leaves always differ within the common depth
        });
        patches.swap(leaves);
    }

    std::vector<DiscreteMeasure> parts(patches.size());
    parallel_for(patches.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) parts[k] = reduce_measure(gather(mu, patches[k].idx), cfg.degree);
    }, 1);
    for (std::size_t k = 0; k < patches.size(); ++k) {
        st.deepest = std::max(st.deepest, patches[k].depth);
        if (static_cast<Eigen::Index>(patches[k].idx.size()) > L) {
            ++st.reduced_patches;
            st.particles_reduced += static_cast<Eigen::Index>(patches[k].idx.size());
        }
    }
    st.patches = patches.size();
    DiscreteMeasure out = disjoint_union(std::span<const DiscreteMeasure>(parts));
    st.particles_out = out.size();
    const double dev = moment_deviation(mu, out, cfg.degree);
    if (dev > 1e-9)
        throw ConditioningError("patched_recombine: global moments drifted by " + std::to_string(dev));
    if (stats) *stats = st;
    return out;
}

}  // namespace ppf
