#pragma once

#include "ppf/flows.hpp"
#include "ppf/measure.hpp"
#include "ppf/wiener_cubature.hpp"

#include <string>
#include <vector>

namespace ppf {

/// One step of a cubature propagator on the linear model: child j of a particle
/// at x sits at maps[j](x) with relative weight weights[j].
struct AffineKernel {
    std::vector<AffineMap> maps;
    std::vector<double> weights;
    std::size_t size() const { return maps.size(); }
};

AffineKernel klv_flow_kernel(const WienerCubature& cub, double dt, const AffineSDEModel& model);
AffineKernel klv_path_kernel(const WienerCubature& cub, double dt, const AffineSDEModel& model);
AffineKernel fgc_kernel(const GaussianCubature& gcub, double dt, const AffineSDEModel& model);

/// Output order: input index major, kernel index minor.
DiscreteMeasure apply_kernel(const DiscreteMeasure& mu, const AffineKernel& k);

DiscreteMeasure klv_path(const DiscreteMeasure& mu, const WienerCubature& cub, double dt,
                         const AffineSDEModel& model);
DiscreteMeasure klv_flow(const DiscreteMeasure& mu, const WienerCubature& cub, double dt,
                         const AffineSDEModel& model);
DiscreteMeasure fgc(const DiscreteMeasure& mu, const GaussianCubature& gcub, double dt,
                    const AffineSDEModel& model);

enum class PropagatorKind { KlvPath, KlvFlow, Fgc };

PropagatorKind parse_propagator(const std::string& s);
std::string to_string(PropagatorKind k);

/// A propagator bound to its formula and model.
class Propagator {
public:
    Propagator(PropagatorKind kind, WienerCubature cub, AffineSDEModel model);
    Propagator(GaussianCubature gcub, AffineSDEModel model);

    PropagatorKind kind() const { return kind_; }
    const AffineSDEModel& model() const { return model_; }
    /// Degree of the underlying formula.
    int degree() const;
    std::size_t children() const;

    AffineKernel kernel(double dt) const;
    DiscreteMeasure apply(const DiscreteMeasure& mu, double dt) const;

private:
    PropagatorKind kind_;
    WienerCubature cub_;
    GaussianCubature gcub_;
    AffineSDEModel model_;
};

}  // namespace ppf
