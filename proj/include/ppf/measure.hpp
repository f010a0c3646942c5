#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace ppf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using PointFn = std::function<double(const Eigen::Ref<const Vec>&)>;

/// Weighted particle cloud. Points are stored column-wise (dim x n).
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;
    DiscreteMeasure(Mat points, Vec weights);

    static DiscreteMeasure dirac(const Vec& x, double weight = 1.0);
    static DiscreteMeasure empty_of_dim(int dim);

    int dim() const { return static_cast<int>(points_.rows()); }
    Eigen::Index size() const { return points_.cols(); }
    bool empty() const { return points_.cols() == 0; }

    const Mat& points() const { return points_; }
    const Vec& weights() const { return weights_; }
    auto point(Eigen::Index i) const { return points_.col(i); }
    double weight(Eigen::Index i) const { return weights_(i); }

    double mass() const { return weights_.sum(); }
    bool is_normalized(double tol = 1e-12) const;
    DiscreteMeasure normalized() const;

    bool operator==(const DiscreteMeasure& o) const;

private:
    Mat points_;
    Vec weights_;
};

double integrate(const DiscreteMeasure& mu, const PointFn& f);

/// Bootstrap reweighting by a likelihood g. The result is normalized.
DiscreteMeasure reweight(const DiscreteMeasure& mu, const PointFn& g);

/// Same as reweight, with log g supplied; the max is subtracted before exp.
DiscreteMeasure reweight_log(const DiscreteMeasure& mu, const PointFn& log_g);

/// Weights already evaluated per particle in log domain.
DiscreteMeasure reweight_log_values(const DiscreteMeasure& mu, const Vec& log_g);

DiscreteMeasure disjoint_union(std::span<const DiscreteMeasure> parts);
DiscreteMeasure disjoint_union(const DiscreteMeasure& a, const DiscreteMeasure& b);

Vec mean(const DiscreteMeasure& mu);
Mat covariance(const DiscreteMeasure& mu);

/// Dense symmetric tensor of order p over R^dim, row-major multi-index.
class MomentTensor {
public:
    MomentTensor(int order, int dim);
    static MomentTensor from_vector(const Vec& v);

    int order() const { return order_; }
    int dim() const { return dim_; }
    const std::vector<double>& entries() const { return entries_; }
    std::vector<double>& entries() { return entries_; }

    double at(std::span<const int> idx) const;
    double& at(std::span<const int> idx);

private:
    std::size_t flat(std::span<const int> idx) const;

    int order_;
    int dim_;
    std::vector<double> entries_;
};

/// E[prod_j (x^{i_j} - E x^{i_j})]; weights are normalized internally.
MomentTensor central_moment(const DiscreteMeasure& mu, int p);

/// Central moments of N(m, C) by Isserlis' theorem (odd orders vanish).
MomentTensor gaussian_central_moment(const Mat& C, int p);

double moment_l2_norm(const MomentTensor& t);

/// 100 * ||exact - approx|| / ||exact||.
double rmse_percent(const MomentTensor& exact, const MomentTensor& approx);

/// 100 * ||exact - approx|| / scale, for tensors whose exact value may vanish.
double rmse_percent_scaled(const MomentTensor& exact, const MomentTensor& approx, double scale);

void write_particle_table(std::ostream& os, const DiscreteMeasure& mu);
DiscreteMeasure read_particle_table(std::istream& is);

}  // namespace ppf
