#include "ppf/experiment.hpp"

#include "ppf/error.hpp"
#include "ppf/parallel.hpp"
#include "ppf/wiener_cubature.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace ppf {

using nlohmann::json;

FilterKind parse_filter(const std::string& s) {
    if (s == "kalman") return FilterKind::Kalman;
    if (s == "sir") return FilterKind::Sir;
    if (s == "ppf") return FilterKind::Ppf;
    if (s == "appf") return FilterKind::Appf;
    throw ConfigError("unknown filter '" + s + "' (expected kalman, sir, ppf or appf)");
}

std::string to_string(FilterKind f) {
    switch (f) {
        case FilterKind::Kalman: return "kalman";
        case FilterKind::Sir: return "sir";
        case FilterKind::Ppf: return "ppf";
        case FilterKind::Appf: return "appf";
    }
    return "ppf";
}

double ExperimentConfig::theta_for(double eps) const {
    if (theta) return *theta;
    return (propagator == PropagatorKind::Fgc ? 0.2 : 0.3) * eps;
}

AffineSDEModel ExperimentConfig::model(double r) const {
    AffineSDEModel m;
    m.Lambda = AffineSDEModel::lorenz_lambda(sigma, rho, beta);
    m.g = g;
    m.a0 = a0;
    m.R = r;
    m.T = T;
    return m;
}

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const std::string& field, const std::string& what) {
        if (!ok) throw ConfigError(field + ": " + what);
    };
    need(std::isfinite(sigma) && std::isfinite(rho) && std::isfinite(beta), "sigma/rho/beta", "must be finite");
    need(g > 0 && std::isfinite(g), "g", "must be positive");
    need(a0 == 0 || a0 == 1, "a0", "must be 0 or 1");
    need(T > 0 && std::isfinite(T), "T", "must be positive");
    need(initial_mean.allFinite(), "initial_mean", "must be finite");
    need(cubature_degree >= 1, "cubature_degree", "must be >= 1");
    if (propagator != PropagatorKind::Fgc && cubature_file.empty())
        need(cubature_degree == 3 || cubature_degree == 5, "cubature_degree",
             "built-in Wiener formulas exist for degree 3 and 5 only");
    need(init_nodes >= 1 && init_nodes <= 64, "init_nodes", "must be in [1, 64]");
    need(particles >= 1, "particles", "must be >= 1");
    need(cycles >= 1, "cycles", "must be >= 1");
    need(partition != PartitionKind::Given, "partition", "must be adaptive or kusuoka");
    need(gamma >= 1.0, "gamma", "must be >= 1");
    need(steps >= 1, "steps", "must be >= 1");
    need(floor_fraction > 0 && floor_fraction < 1, "floor_fraction", "must be in (0, 1)");
    need(recomb_degree >= 0, "recomb_degree", "must be >= 0");
    need(patch_depth >= 0 && patch_depth <= 52, "patch_depth", "must be in [0, 52]");
    need(max_depth >= 0 && max_depth <= 52, "max_depth", "must be in [0, 52]");
    if (theta) need(*theta > 0, "theta", "must be positive");
    need(budget_constant > 0, "budget_constant", "must be positive");
    if (tau) need(*tau >= 0, "tau", "must be >= 0");
    if (tau_cap) need(*tau_cap >= 0, "tau_cap", "must be >= 0");
    if (tau_rel_cap) need(*tau_rel_cap >= 0, "tau_rel_cap", "must be >= 0");
    need(0 <= leap_band_lo && leap_band_lo <= leap_band_hi && leap_band_hi <= 1, "leap_band",
         "must satisfy 0 <= lo <= hi <= 1");
    need(!R.empty(), "R", "sweep list is empty");
    need(!D.empty(), "D", "sweep list is empty");
    need(!epsilon.empty(), "epsilon", "sweep list is empty");
    for (double r : R) need(r > 0 && std::isfinite(r), "R", "entries must be positive");
    for (double d : D) need(std::isfinite(d), "D", "entries must be finite");
    for (double e : epsilon) need(e > 0 && std::isfinite(e), "epsilon", "entries must be positive");
    need(!moments.empty(), "moments", "list is empty");
    for (int p : moments) need(p >= 1 && p <= 6, "moments", "orders must be in [1, 6]");
}

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key + ": wrong type (" + std::string(v.type_name()) + ")");
    }
}

template <class T>
std::vector<T> get_list(const json& v, const std::string& key) {
    if (!v.is_array()) return {get_as<T>(v, key)};
    std::vector<T> out;
    for (const auto& e : v) out.push_back(get_as<T>(e, key));
    return out;
}

Vec3 get_vec3(const json& v, const std::string& key) {
    auto xs = get_list<double>(v, key);
    if (xs.size() != 3) throw ConfigError(key + ": expected 3 numbers");
    return Vec3(xs[0], xs[1], xs[2]);
}

template <class F>
auto parse_enum(const json& v, const std::string& key, F parse) {
    try {
        return parse(get_as<std::string>(v, key));
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

PartitionKind parse_partition_kind(const std::string& s) {
    if (s == "adaptive") return PartitionKind::Adaptive;
    if (s == "kusuoka") return PartitionKind::Kusuoka;
    throw ConfigError("unknown partition '" + s + "' (expected adaptive or kusuoka)");
}

PatchMode parse_patch_mode(const std::string& s) {
    if (s == "adaptive") return PatchMode::Adaptive;
    if (s == "fixed") return PatchMode::Fixed;
    throw ConfigError("unknown patch mode '" + s + "' (expected adaptive or fixed)");
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    ExperimentConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "sigma") c.sigma = get_as<double>(v, key);
        else if (key == "rho") c.rho = get_as<double>(v, key);
        else if (key == "beta") c.beta = get_as<double>(v, key);
        else if (key == "g") c.g = get_as<double>(v, key);
        else if (key == "a0") c.a0 = get_as<int>(v, key);
        else if (key == "T") c.T = get_as<double>(v, key);
        else if (key == "initial_mean") c.initial_mean = get_vec3(v, key);
        else if (key == "filter") c.filter = parse_enum(v, key, parse_filter);
        else if (key == "propagator") c.propagator = parse_enum(v, key, parse_propagator);
        else if (key == "cubature_degree") c.cubature_degree = get_as<int>(v, key);
        else if (key == "cubature_file") c.cubature_file = get_as<std::string>(v, key);
        else if (key == "init_nodes") c.init_nodes = get_as<int>(v, key);
        else if (key == "particles") c.particles = get_as<Eigen::Index>(v, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "cycles") c.cycles = get_as<int>(v, key);
        else if (key == "partition") c.partition = parse_enum(v, key, parse_partition_kind);
        else if (key == "gamma") c.gamma = get_as<double>(v, key);
        else if (key == "steps") c.steps = get_as<int>(v, key);
        else if (key == "likelihood_scale") c.likelihood_scale = parse_enum(v, key, parse_likelihood_scale);
        else if (key == "floor_fraction") c.floor_fraction = get_as<double>(v, key);
        else if (key == "recombination") c.recombination = get_as<bool>(v, key);
        else if (key == "recomb_degree") c.recomb_degree = get_as<int>(v, key);
        else if (key == "patch_mode") c.patch_mode = parse_enum(v, key, parse_patch_mode);
        else if (key == "patch_depth") c.patch_depth = get_as<int>(v, key);
        else if (key == "max_depth") c.max_depth = get_as<int>(v, key);
        else if (key == "theta") c.theta = get_as<double>(v, key);
        else if (key == "budget_constant") c.budget_constant = get_as<double>(v, key);
        else if (key == "localize") c.localize = get_as<bool>(v, key);
        else if (key == "tau") {
            if (v.is_string() && v.get<std::string>() == "auto") c.tau.reset();
            else c.tau = get_as<double>(v, key);
        } else if (key == "tau_cap") c.tau_cap = get_as<double>(v, key);
        else if (key == "tau_rel_cap") c.tau_rel_cap = get_as<double>(v, key);
        else if (key == "leap_band") {
            auto b = get_list<double>(v, key);
            if (b.size() != 2) throw ConfigError("leap_band: expected [lo, hi]");
            c.leap_band_lo = b[0];
            c.leap_band_hi = b[1];
        } else if (key == "leap_mode") c.leap_mode = parse_enum(v, key, parse_leap_mode);
        else if (key == "terminal_merge") c.terminal_merge = parse_enum(v, key, parse_terminal_merge);
        else if (key == "R") c.R = get_list<double>(v, key);
        else if (key == "D") c.D = get_list<double>(v, key);
        else if (key == "epsilon") c.epsilon = get_list<double>(v, key);
        else if (key == "moments") c.moments = get_list<int>(v, key);
        else if (key == "output") c.output = get_as<std::string>(v, key);
        else if (key == "summary") c.summary = get_as<std::string>(v, key);
        else if (key == "particle_dump") c.particle_dump = get_as<std::string>(v, key);
        else throw ConfigError("unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

double moment_rmse_percent(const DiscreteMeasure& mu, const GaussianBelief& exact, int p) {
    if (p == 1) return rmse_percent(MomentTensor::from_vector(exact.mean), MomentTensor::from_vector(mean(mu)));
    const MomentTensor ex = gaussian_central_moment(exact.cov, p);
    const MomentTensor ap = central_moment(mu, p);
    const double scale = p % 2 ? std::pow(moment_l2_norm(gaussian_central_moment(exact.cov, 2)), 0.5 * p)
                               : moment_l2_norm(ex);
    return rmse_percent_scaled(ex, ap, scale);
}

Propagator make_propagator(const ExperimentConfig& cfg, const AffineSDEModel& model) {
    if (cfg.propagator == PropagatorKind::Fgc)
        return Propagator(gauss_hermite_tensor(3, cfg.cubature_degree), model);
    WienerCubature w;
    if (!cfg.cubature_file.empty()) w = load_formula_file(cfg.cubature_file, 3, cfg.cubature_degree);
    else if (cfg.cubature_degree == 3) w = degree3_formula(3);
    else w = load_degree5_formula();
    return Propagator(cfg.propagator, std::move(w), model);
}

Partition make_partition(const ExperimentConfig& cfg, const Propagator& prop, double eps) {
    if (cfg.partition == PartitionKind::Kusuoka) return kusuoka_partition(cfg.T, cfg.steps, cfg.gamma);
    AdaptiveOptions opt;
    opt.scale = cfg.likelihood_scale;
    opt.floor_fraction = cfg.floor_fraction;
    return adaptive_partition(prop, cfg.T, eps, opt);
}

DiscreteMeasure cubature_measure(const GaussianBelief& b, int nodes) {
    const GaussianCubature gc = gauss_hermite_tensor(3, 2 * nodes - 1);
    const Mat3 L = Eigen::LLT<Mat3>(b.cov).matrixL();
    Mat pts = (L * gc.nodes).colwise() + b.mean;
    return DiscreteMeasure(std::move(pts), gc.weights);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::size_t point, int cycle, int salt) {
    return splitmix(seed ^ splitmix(point * 1000003ull + static_cast<std::uint64_t>(cycle) * 17ull +
                                    static_cast<std::uint64_t>(salt)));
}

struct Point {
    double R, D, eps;
};

struct PointOutput {
    std::vector<ResultRow> rows;
    PointSummary summary;
    std::vector<std::string> failures;
    DiscreteMeasure last_posterior;
};

void check_measure(const DiscreteMeasure& mu, const std::string& what, std::vector<std::string>& fails) {
    if (!mu.points().allFinite() || !mu.weights().allFinite()) {
        fails.push_back(what + ": non-finite particles or weights");
        return;
    }
    if (mu.size() && mu.weights().minCoeff() < 0) fails.push_back(what + ": negative weight");
    if (std::abs(mu.mass() - 1.0) > 1e-9) {
        std::ostringstream s;
        s << std::setprecision(17) << what << ": mass " << mu.mass() << " != 1";
        fails.push_back(s.str());
    }
}

PointOutput run_point(const ExperimentConfig& cfg, const Point& pt, std::size_t index) {
    const auto t0 = std::chrono::steady_clock::now();
    PointOutput out;
    const AffineSDEModel model = cfg.model(pt.R);
    GaussianBelief exact = stationary_init(model, cfg.initial_mean);

    std::optional<Propagator> prop;
    Partition part;
    FilterRecomb rc;
    SplitConfig sp;
    DiscreteMeasure mu;
    const bool cubature_filter = cfg.filter == FilterKind::Ppf || cfg.filter == FilterKind::Appf;
    if (cubature_filter) {
        prop.emplace(make_propagator(cfg, model));
        part = make_partition(cfg, *prop, pt.eps);
        rc.enabled = cfg.recombination;
        rc.config.degree = cfg.recomb_degree;
        rc.config.mode = cfg.patch_mode;
        rc.config.depth = cfg.patch_depth;
        rc.config.max_depth = cfg.max_depth;
        rc.config.theta = cfg.theta_for(pt.eps);
        rc.budget.model = model;
        rc.budget.degree = cfg.recomb_degree;
        rc.budget.scale = cfg.likelihood_scale;
        rc.budget.constant = cfg.budget_constant;
        rc.localize = cfg.localize.value_or(cfg.filter == FilterKind::Appf);
        sp.auto_tune = !cfg.tau.has_value();
        sp.tau = cfg.tau.value_or(0.0);
        sp.tau_cap = cfg.tau_cap.value_or(pt.eps);
        sp.tau_rel_cap = cfg.tau_rel_cap.value_or(10.0 * pt.eps);
        sp.band_lo = cfg.leap_band_lo;
        sp.band_hi = cfg.leap_band_hi;
        sp.mode = cfg.leap_mode;
        sp.terminal = cfg.terminal_merge;
        mu = cubature_measure(exact, cfg.init_nodes);
    } else if (cfg.filter == FilterKind::Sir) {
        mu = sample_belief(exact, cfg.particles, stream_seed(cfg.seed, index, 0, 1));
    }

    out.summary = {pt.R, pt.D, pt.eps, 0.0, 0, 0.0};
    for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
        const GaussianBelief prior = kalman_predict(exact, model);
        const Vec3 y = place_observation(prior, ObservationPlan{pt.D});
        const GaussianBelief post = kalman_update(prior, y, model);

        DiscreteMeasure prior_m, post_m;
        ResultRow base;
        base.filter = to_string(cfg.filter);
        base.propagator = cubature_filter ? to_string(cfg.propagator) : "";
        base.m = cubature_filter ? cfg.cubature_degree : 0;
        base.R = pt.R;
        base.D = pt.D;
        base.epsilon = pt.eps;
        base.cycle = cycle;
        base.k = cubature_filter ? part.k() : 1;
        const std::string where = "R=" + std::to_string(pt.R) + " D=" + std::to_string(pt.D) +
                                  " eps=" + std::to_string(pt.eps) + " cycle " + std::to_string(cycle);

        if (cfg.filter == FilterKind::Sir) {
            SirResult r = sir_cycle(mu, y, model, cfg.particles, stream_seed(cfg.seed, index, cycle, 2));
            prior_m = std::move(r.prior);
            post_m = std::move(r.reweighted);
            mu = std::move(r.posterior);
        } else if (cubature_filter) {
            CycleResult r = cfg.filter == FilterKind::Ppf ? ppf_cycle(mu, y, *prop, part, rc)
                                                          : appf_cycle(mu, y, *prop, part, rc, sp);
            base.recombined = r.recombined_particles;
            base.removed = r.removed_particles;
            for (const StepRecord& s : r.steps) {
                base.max_patches = std::max(base.max_patches, s.stats.patches);
                base.deepest = std::max(base.deepest, s.stats.deepest);
                base.leapers += s.leapers;
            }
            prior_m = std::move(r.prior);
            post_m = std::move(r.posterior);
            mu = post_m;
        }
        if (cfg.filter != FilterKind::Kalman) {
            check_measure(prior_m, where + " prior", out.failures);
            check_measure(post_m, where + " posterior", out.failures);
            base.particles = prior_m.size();
        }
        for (int p : cfg.moments) {
            ResultRow row = base;
            row.p = p;
            if (cfg.filter != FilterKind::Kalman) {
                row.rmse_prior = moment_rmse_percent(prior_m, prior, p);
                row.rmse_posterior = moment_rmse_percent(post_m, post, p);
            }
            if (!std::isfinite(row.rmse_prior) || !std::isfinite(row.rmse_posterior))
                out.failures.push_back(where + ": non-finite rmse at p=" + std::to_string(p));
            out.summary.max_rmse_posterior = std::max(out.summary.max_rmse_posterior, row.rmse_posterior);
            out.rows.push_back(std::move(row));
        }
        out.summary.recombined += base.recombined;
        exact = post;
    }
    out.last_posterior = std::move(mu);
    out.summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::vector<Point> sweep_points(const ExperimentConfig& cfg) {
    std::vector<Point> pts;
    for (double r : cfg.R)
        for (double d : cfg.D)
            for (double e : cfg.epsilon) pts.push_back({r, d, e});
    return pts;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<Point> pts = sweep_points(cfg);
    std::vector<PointOutput> outs(pts.size());
    parallel_for(
        pts.size(),
        [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) outs[i] = run_point(cfg, pts[i], i);
        },
        1);
    ExperimentResult res;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        res.rows.insert(res.rows.end(), outs[i].rows.begin(), outs[i].rows.end());
        res.points.push_back(outs[i].summary);
        res.invariant_failures.insert(res.invariant_failures.end(), outs[i].failures.begin(), outs[i].failures.end());
        if (!cfg.particle_dump.empty() && cfg.filter != FilterKind::Kalman) {
            std::filesystem::create_directories(cfg.particle_dump);
            const std::string path = cfg.particle_dump + "/posterior_" + std::to_string(i) + ".txt";
            std::ofstream f(path);
            if (!f) throw std::runtime_error("cannot write " + path);
            write_particle_table(f, outs[i].last_posterior);
        }
    }
    return res;
}

void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << "filter,propagator,m,R,D,epsilon,cycle,p,k,rmse_prior,rmse_posterior,particles,recombined,removed,"
          "max_patches,deepest,leapers\n";
    for (const ResultRow& r : rows) {
        os << r.filter << ',' << r.propagator << ',' << r.m << ',' << fmt(r.R) << ',' << fmt(r.D) << ','
           << fmt(r.epsilon) << ',' << r.cycle << ',' << r.p << ',' << r.k << ',' << fmt(r.rmse_prior) << ','
           << fmt(r.rmse_posterior) << ',' << r.particles << ',' << r.recombined << ',' << r.removed << ','
           << r.max_patches << ',' << r.deepest << ',' << r.leapers << '\n';
    }
}

void write_summary(std::ostream& os, const ExperimentResult& res) {
    if (res.points.empty()) throw ConfigError("report: no results");
    os << "# per sweep point: R D epsilon max_rmse_posterior_percent recombined_particles wall_seconds\n";
    Eigen::Index total = 0;
    for (const PointSummary& p : res.points) {
        os << fmt(p.R) << ' ' << fmt(p.D) << ' ' << fmt(p.epsilon) << ' ' << fmt(p.max_rmse_posterior) << ' '
           << p.recombined << ' ' << std::setprecision(3) << std::fixed << p.seconds << std::defaultfloat << '\n';
        total += p.recombined;
    }
    os << "total recombined particles: " << total << '\n';
    os << "invariant failures: " << res.invariant_failures.size() << '\n';
    for (const std::string& f : res.invariant_failures) os << "  " << f << '\n';
}

void emit_report(const ExperimentConfig& cfg, const ExperimentResult& res) {
    if (res.rows.empty()) throw ConfigError("report: no results");
    auto open = [](const std::string& path) {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write " + path);
        return f;
    };
    if (!cfg.output.empty()) {
        std::ofstream f = open(cfg.output);
        write_csv(f, res.rows);
        if (!f) throw std::runtime_error("write failed: " + cfg.output);
    }
    if (!cfg.summary.empty()) {
        std::ofstream f = open(cfg.summary);
        write_summary(f, res);
        if (!f) throw std::runtime_error("write failed: " + cfg.summary);
    }
}

std::vector<PartitionRow> run_partition_table(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<PartitionRow> rows;
    for (double r : cfg.R) {
        const Propagator prop = make_propagator(cfg, cfg.model(r));
        for (double e : cfg.epsilon) {
            const Partition p = make_partition(cfg, prop, e);
            const std::vector<double> s = p.steps();
            rows.push_back({r, e, p.k(), *std::min_element(s.begin(), s.end()), *std::max_element(s.begin(), s.end())});
        }
    }
    return rows;
}

void write_partition_csv(std::ostream& os, const std::vector<PartitionRow>& rows) {
    os << "R,epsilon,k,min_step,max_step\n";
    for (const PartitionRow& r : rows)
        os << fmt(r.R) << ',' << fmt(r.epsilon) << ',' << r.k << ',' << fmt(r.min_step) << ',' << fmt(r.max_step)
           << '\n';
}

}  // namespace ppf
