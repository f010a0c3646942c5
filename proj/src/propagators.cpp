#include "ppf/propagators.hpp"

#include "ppf/error.hpp"
#include "ppf/parallel.hpp"

#include <Eigen/Cholesky>

namespace ppf {

AffineKernel klv_flow_kernel(const WienerCubature& cub, double dt, const AffineSDEModel& model) {
    if (!(dt > 0.0)) throw DomainError("klv_flow: step must be positive");
    const WienerCubature c = scale_to_horizon(cub, dt);
    AffineKernel k;
    for (std::size_t j = 0; j < c.size(); ++j) {
        k.maps.push_back(flow_affine_map(gamma_apply(c.lie_polys[j], model), 1.0));
        k.weights.push_back(c.weights[j]);
    }
    return k;
}

AffineKernel klv_path_kernel(const WienerCubature& cub, double dt, const AffineSDEModel& model) {
    if (!cub.has_paths()) throw UnsupportedError("klv_path: formula carries no path representatives");
    if (!(dt > 0.0)) throw DomainError("klv_path: step must be positive");
    const WienerCubature c = scale_to_horizon(cub, dt);
    AffineKernel k;
    for (std::size_t j = 0; j < c.size(); ++j) {
        k.maps.push_back(path_affine_map(model, (*c.paths)[j]));
        k.weights.push_back(c.weights[j]);
    }
    return k;
}

AffineKernel fgc_kernel(const GaussianCubature& gcub, double dt, const AffineSDEModel& model) {
    if (!(dt > 0.0)) throw DomainError("fgc: step must be positive");
    const Discretization disc = exact_discretization(model, dt);
    Eigen::LLT<Mat3> llt(disc.Q);
    if (llt.info() != Eigen::Success) throw DomainError("fgc: process covariance is not positive definite");
    const Mat3 L = llt.matrixL();
    AffineKernel k;
    for (std::size_t j = 0; j < gcub.size(); ++j) {
        k.maps.push_back({disc.F, L * gcub.nodes.col(static_cast<Eigen::Index>(j))});
        k.weights.push_back(gcub.weights(static_cast<Eigen::Index>(j)));
    }
    return k;
}

DiscreteMeasure apply_kernel(const DiscreteMeasure& mu, const AffineKernel& k) {
    if (mu.dim() != 3) throw DomainError("propagator: state dimension must be 3");
    const std::size_t n = static_cast<std::size_t>(mu.size()), q = k.size();
    Mat pts(3, static_cast<Eigen::Index>(n * q));
    Vec w(static_cast<Eigen::Index>(n * q));
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 x = mu.point(static_cast<Eigen::Index>(i));
            const double wi = mu.weight(static_cast<Eigen::Index>(i));
            for (std::size_t j = 0; j < q; ++j) {
                const auto o = static_cast<Eigen::Index>(i * q + j);
                pts.col(o) = k.maps[j](x);
                w(o) = wi * k.weights[j];
            }
        }
    });
    return DiscreteMeasure(std::move(pts), std::move(w));
}

DiscreteMeasure klv_path(const DiscreteMeasure& mu, const WienerCubature& cub, double dt,
                         const AffineSDEModel& model) {
    if (model.linear()) return apply_kernel(mu, klv_path_kernel(cub, dt, model));
    if (!cub.has_paths()) throw UnsupportedError("klv_path: formula carries no path representatives");
    const WienerCubature c = scale_to_horizon(cub, dt);
    const std::size_t n = static_cast<std::size_t>(mu.size()), q = c.size();
    Mat pts(3, static_cast<Eigen::Index>(n * q));
    Vec w(static_cast<Eigen::Index>(n * q));
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            for (std::size_t j = 0; j < q; ++j) {
                const auto o = static_cast<Eigen::Index>(i * q + j);
                pts.col(o) = flow_path(model, (*c.paths)[j], mu.point(static_cast<Eigen::Index>(i)));
                w(o) = mu.weight(static_cast<Eigen::Index>(i)) * c.weights[j];
            }
    }, 64);
    return DiscreteMeasure(std::move(pts), std::move(w));
}

DiscreteMeasure klv_flow(const DiscreteMeasure& mu, const WienerCubature& cub, double dt,
                         const AffineSDEModel& model) {
    return apply_kernel(mu, klv_flow_kernel(cub, dt, model));
}

DiscreteMeasure fgc(const DiscreteMeasure& mu, const GaussianCubature& gcub, double dt,
                    const AffineSDEModel& model) {
    return apply_kernel(mu, fgc_kernel(gcub, dt, model));
}

PropagatorKind parse_propagator(const std::string& s) {
    if (s == "klv-path") return PropagatorKind::KlvPath;
    if (s == "klv-flow") return PropagatorKind::KlvFlow;
    if (s == "fgc") return PropagatorKind::Fgc;
    throw ConfigError("unknown propagator '" + s + "' (expected klv-path, klv-flow or fgc)");
}

std::string to_string(PropagatorKind k) {
    switch (k) {
        case PropagatorKind::KlvPath: return "klv-path";
        case PropagatorKind::KlvFlow: return "klv-flow";
        case PropagatorKind::Fgc: return "fgc";
    }
    return "?";
}

Propagator::Propagator(PropagatorKind kind, WienerCubature cub, AffineSDEModel model)
    : kind_(kind), cub_(std::move(cub)), model_(std::move(model)) {
    if (kind == PropagatorKind::Fgc) throw DomainError("Propagator: FGC needs a Gaussian cubature");
    if (kind == PropagatorKind::KlvPath && !cub_.has_paths())
        throw UnsupportedError("Propagator: klv-path needs path representatives");
}

Propagator::Propagator(GaussianCubature gcub, AffineSDEModel model)
    : kind_(PropagatorKind::Fgc), gcub_(std::move(gcub)), model_(std::move(model)) {}

int Propagator::degree() const { return kind_ == PropagatorKind::Fgc ? gcub_.degree : cub_.m; }

std::size_t Propagator::children() const {
    return kind_ == PropagatorKind::Fgc ? gcub_.size() : cub_.size();
}

AffineKernel Propagator::kernel(double dt) const {
    switch (kind_) {
        case PropagatorKind::KlvPath: return klv_path_kernel(cub_, dt, model_);
        case PropagatorKind::KlvFlow: return klv_flow_kernel(cub_, dt, model_);
        case PropagatorKind::Fgc: return fgc_kernel(gcub_, dt, model_);
    }
    throw DomainError("Propagator: bad kind");
}

DiscreteMeasure Propagator::apply(const DiscreteMeasure& mu, double dt) const {
    if (kind_ == PropagatorKind::KlvPath && !model_.linear()) return klv_path(mu, cub_, dt, model_);
    return apply_kernel(mu, kernel(dt));
}

}  // namespace ppf
