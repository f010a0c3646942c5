#include "ppf/measure.hpp"

#include "ppf/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace ppf {

DiscreteMeasure::DiscreteMeasure(Mat points, Vec weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.cols() != weights_.size())
        throw DomainError("DiscreteMeasure: point and weight counts differ");
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
        if (!(weights_(i) >= 0.0)) throw DomainError("DiscreteMeasure: negative or NaN weight");
    }
}

DiscreteMeasure DiscreteMeasure::dirac(const Vec& x, double weight) {
    Mat p(x.size(), 1);
    p.col(0) = x;
    Vec w(1);
    w(0) = weight;
    return DiscreteMeasure(std::move(p), std::move(w));
}

DiscreteMeasure DiscreteMeasure::empty_of_dim(int dim) { return DiscreteMeasure(Mat(dim, 0), Vec(0)); }

bool DiscreteMeasure::is_normalized(double tol) const { return std::abs(mass() - 1.0) <= tol; }

DiscreteMeasure DiscreteMeasure::normalized() const {
    const double m = mass();
    if (!(m > 0.0)) throw DomainError("normalized: measure has zero mass");
    return DiscreteMeasure(points_, weights_ / m);
}

bool DiscreteMeasure::operator==(const DiscreteMeasure& o) const {
    return points_.rows() == o.points_.rows() && points_.cols() == o.points_.cols() &&
           points_ == o.points_ && weights_ == o.weights_;
}

double integrate(const DiscreteMeasure& mu, const PointFn& f) {
    if (mu.empty()) throw DomainError("integrate: empty measure");
    double s = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) s += mu.weight(i) * f(mu.point(i));
    return s;
}

DiscreteMeasure reweight_log_values(const DiscreteMeasure& mu, const Vec& log_g) {
    if (mu.empty()) throw DomainError("reweight: empty measure");
    // Particles with zero prior weight do not take part in the max.
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (mu.weight(i) > 0.0) mx = std::max(mx, log_g(i));
    if (!std::isfinite(mx))
        throw DegenerateWeightsError("reweight: every likelihood value is zero", mx);
    Vec w(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) w(i) = mu.weight(i) * std::exp(log_g(i) - mx);
    const double s = w.sum();
    if (!(s > 0.0) || !std::isfinite(s))
        throw DegenerateWeightsError("reweight: weights degenerate after normalization", mx);
    return DiscreteMeasure(mu.points(), w / s);
}

DiscreteMeasure reweight_log(const DiscreteMeasure& mu, const PointFn& log_g) {
    Vec lg(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) lg(i) = log_g(mu.point(i));
    return reweight_log_values(mu, lg);
}

DiscreteMeasure reweight(const DiscreteMeasure& mu, const PointFn& g) {
    Vec lg(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        const double v = g(mu.point(i));
        if (v < 0.0) throw DomainError("reweight: negative likelihood value");
        lg(i) = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }
    return reweight_log_values(mu, lg);
}

DiscreteMeasure disjoint_union(std::span<const DiscreteMeasure> parts) {
    if (parts.empty()) throw DomainError("disjoint_union: no parts");
    const int dim = parts.front().dim();
    Eigen::Index n = 0;
    for (const auto& p : parts) {
        if (p.dim() != dim) throw DomainError("disjoint_union: dimension mismatch");
        n += p.size();
    }
    Mat pts(dim, n);
    Vec w(n);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        pts.middleCols(off, p.size()) = p.points();
        w.segment(off, p.size()) = p.weights();
        off += p.size();
    }
    return DiscreteMeasure(std::move(pts), std::move(w));
}

DiscreteMeasure disjoint_union(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    const DiscreteMeasure parts[2] = {a, b};
    return disjoint_union(std::span<const DiscreteMeasure>(parts, 2));
}

Vec mean(const DiscreteMeasure& mu) {
    if (mu.empty()) throw DomainError("mean: empty measure");
    return mu.points() * mu.weights() / mu.mass();
}

Mat covariance(const DiscreteMeasure& mu) {
    const Vec m = mean(mu);
    const Mat c = mu.points().colwise() - m;
    return c * mu.weights().asDiagonal() * c.transpose() / mu.mass();
}

MomentTensor::MomentTensor(int order, int dim) : order_(order), dim_(dim) {
    if (order < 0 || dim < 1) throw DomainError("MomentTensor: bad shape");
    std::size_t n = 1;
    for (int k = 0; k < order; ++k) n *= static_cast<std::size_t>(dim);
    entries_.assign(n, 0.0);
}

MomentTensor MomentTensor::from_vector(const Vec& v) {
    MomentTensor t(1, static_cast<int>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) t.entries_[i] = v(i);
    return t;
}

std::size_t MomentTensor::flat(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != order_) throw DomainError("MomentTensor: wrong index arity");
    std::size_t f = 0;
    for (int i : idx) {
        if (i < 0 || i >= dim_) throw DomainError("MomentTensor: index out of range");
        f = f * dim_ + i;
    }
    return f;
}

double MomentTensor::at(std::span<const int> idx) const { return entries_[flat(idx)]; }
double& MomentTensor::at(std::span<const int> idx) { return entries_[flat(idx)]; }

namespace {

// Visit every flat index of an order-p tensor together with its sorted multi-index.
template <class F>
void for_each_entry(int p, int dim, F&& f) {
    std::vector<int> idx(p, 0);
    std::size_t n = 1;
    for (int k = 0; k < p; ++k) n *= dim;
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t r = flat;
        for (int k = p - 1; k >= 0; --k) {
            idx[k] = static_cast<int>(r % dim);
            r /= dim;
        }
        std::vector<int> s = idx;
        std::sort(s.begin(), s.end());
        f(flat, s);
    }
}

}  // namespace

MomentTensor central_moment(const DiscreteMeasure& mu, int p) {
    if (mu.empty()) throw DomainError("central_moment: empty measure");
    if (p < 1) throw DomainError("central_moment: order must be >= 1");
    const int dim = mu.dim();
    const Vec m = mean(mu);
    const Mat c = mu.points().colwise() - m;
    const Vec w = mu.weights() / mu.mass();

    // Only the sorted multi-indices are distinct; compute those once.
    std::map<std::vector<int>, double> uniq;
    MomentTensor t(p, dim);
    for_each_entry(p, dim, [&](std::size_t flat, const std::vector<int>& s) {
        auto it = uniq.find(s);
        if (it == uniq.end()) {
            Vec prod = w;
            for (int i : s) prod.array() *= c.row(i).transpose().array();
            it = uniq.emplace(s, prod.sum()).first;
        }
        t.entries()[flat] = it->second;
    });
    return t;
}

namespace {

double isserlis(const Mat& C, std::vector<int>& idx) {
    if (idx.empty()) return 1.0;
    if (idx.size() % 2) return 0.0;
    const int a = idx.front();
    double s = 0.0;
    for (std::size_t k = 1; k < idx.size(); ++k) {
        const int b = idx[k];
        std::vector<int> rest;
        rest.reserve(idx.size() - 2);
        for (std::size_t j = 1; j < idx.size(); ++j)
            if (j != k) rest.push_back(idx[j]);
        s += C(a, b) * isserlis(C, rest);
    }
    return s;
}

}  // namespace

MomentTensor gaussian_central_moment(const Mat& C, int p) {
    if (C.rows() != C.cols()) throw DomainError("gaussian_central_moment: covariance not square");
    const int dim = static_cast<int>(C.rows());
    MomentTensor t(p, dim);
    std::map<std::vector<int>, double> uniq;
    for_each_entry(p, dim, [&](std::size_t flat, const std::vector<int>& s) {
        auto it = uniq.find(s);
        if (it == uniq.end()) {
            std::vector<int> tmp = s;
            it = uniq.emplace(s, isserlis(C, tmp)).first;
        }
        t.entries()[flat] = it->second;
    });
    return t;
}

double moment_l2_norm(const MomentTensor& t) {
    double s = 0.0;
    for (double v : t.entries()) s += v * v;
    return std::sqrt(s);
}

double rmse_percent_scaled(const MomentTensor& exact, const MomentTensor& approx, double scale) {
    if (exact.order() != approx.order() || exact.dim() != approx.dim())
        throw DomainError("rmse_percent: tensor shapes differ");
    if (!(scale > 0.0)) throw DomainError("rmse_percent: division by zero norm");
    double s = 0.0;
    for (std::size_t i = 0; i < exact.entries().size(); ++i) {
        const double d = exact.entries()[i] - approx.entries()[i];
        s += d * d;
    }
    return 100.0 * std::sqrt(s) / scale;
}

double rmse_percent(const MomentTensor& exact, const MomentTensor& approx) {
    return rmse_percent_scaled(exact, approx, moment_l2_norm(exact));
}

void write_particle_table(std::ostream& os, const DiscreteMeasure& mu) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
        line.str("");
        line << mu.weight(i);
        for (int k = 0; k < mu.dim(); ++k) line << ' ' << mu.points()(k, i);
        os << line.str() << '\n';
    }
}

DiscreteMeasure read_particle_table(std::istream& is) {
    std::vector<double> w;
    std::vector<std::vector<double>> rows;
    std::string line;
    int dim = -1;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (!ls.eof()) throw DomainError("particle table: unparsable line: " + line);
        if (vals.size() < 2) throw DomainError("particle table: line needs a weight and coordinates");
        if (dim < 0) dim = static_cast<int>(vals.size()) - 1;
        if (static_cast<int>(vals.size()) - 1 != dim) throw DomainError("particle table: ragged rows");
        w.push_back(vals[0]);
        rows.emplace_back(vals.begin() + 1, vals.end());
    }
    if (dim < 0) throw DomainError("particle table: no particles");
    Mat pts(dim, static_cast<Eigen::Index>(rows.size()));
    Vec wv(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        wv(i) = w[i];
        for (int k = 0; k < dim; ++k) pts(k, i) = rows[i][k];
    }
    return DiscreteMeasure(std::move(pts), std::move(wv));
}

}  // namespace ppf
