#include "ppf/error.hpp"
#include "ppf/experiment.hpp"
#include "ppf/wiener_cubature.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
    std::optional<std::string> filter, propagator, partition, tau, output;
    std::optional<int> cubature_degree, recomb_degree, patch_depth, steps, cycles;
    std::optional<double> theta, gamma;
    std::optional<std::uint64_t> seed;
    std::vector<double> epsilon, D, R;
};

void add_overrides(CLI::App* app, Overrides& o) {
    app->add_option("--filter", o.filter, "kalman | sir | ppf | appf");
    app->add_option("--propagator", o.propagator, "klv-path | klv-flow | fgc");
    app->add_option("--cubature-degree", o.cubature_degree, "degree m of the cubature formula");
    app->add_option("--recomb-degree", o.recomb_degree, "recombination degree r");
    app->add_option("--patch-depth", o.patch_depth, "fixed Morton depth (selects fixed patch mode)");
    app->add_option("--theta", o.theta, "recombination tolerance");
    app->add_option("--partition", o.partition, "adaptive | kusuoka");
    app->add_option("--gamma", o.gamma, "Kusuoka exponent");
    app->add_option("--steps", o.steps, "Kusuoka step count");
    app->add_option("--epsilon", o.epsilon, "partition tolerance sweep");
    app->add_option("--D", o.D, "observation offset sweep, in prior standard deviations");
    app->add_option("--R", o.R, "observation noise variance sweep");
    app->add_option("--tau", o.tau, "splitting tolerance: auto or a value");
    app->add_option("--cycles", o.cycles, "filter cycles");
    app->add_option("--seed", o.seed, "random seed");
    app->add_option("--output", o.output, "CSV output path");
}

void apply(const Overrides& o, ppf::ExperimentConfig& c) {
    if (o.filter) c.filter = ppf::parse_filter(*o.filter);
    if (o.propagator) c.propagator = ppf::parse_propagator(*o.propagator);
    if (o.cubature_degree) c.cubature_degree = *o.cubature_degree;
    if (o.recomb_degree) c.recomb_degree = *o.recomb_degree;
    if (o.patch_depth) {
        c.patch_depth = *o.patch_depth;
        c.patch_mode = ppf::PatchMode::Fixed;
    }
    if (o.theta) c.theta = *o.theta;
    if (o.partition) {
        if (*o.partition == "adaptive") c.partition = ppf::PartitionKind::Adaptive;
        else if (*o.partition == "kusuoka") c.partition = ppf::PartitionKind::Kusuoka;
        else throw ppf::ConfigError("--partition: expected adaptive or kusuoka");
    }
    if (o.gamma) c.gamma = *o.gamma;
    if (o.steps) c.steps = *o.steps;
    if (!o.epsilon.empty()) c.epsilon = o.epsilon;
    if (!o.D.empty()) c.D = o.D;
    if (!o.R.empty()) c.R = o.R;
    if (o.tau) {
        if (*o.tau == "auto") c.tau.reset();
        else {
            try {
                c.tau = std::stod(*o.tau);
            } catch (const std::exception&) {
                throw ppf::ConfigError("--tau: expected auto or a number");
            }
        }
    }
    if (o.cycles) c.cycles = *o.cycles;
    if (o.seed) c.seed = *o.seed;
    if (o.output) c.output = *o.output;
    c.validate();
}

ppf::ExperimentConfig config_from(const std::string& path, const Overrides& o) {
    ppf::ExperimentConfig c = path.empty() ? ppf::ExperimentConfig{} : ppf::load_config(path);
    apply(o, c);
    return c;
}

int run(const std::string& path, const Overrides& o) {
    const ppf::ExperimentConfig cfg = config_from(path, o);
    const ppf::ExperimentResult res = ppf::run_experiment(cfg);
    if (cfg.output.empty()) ppf::write_csv(std::cout, res.rows);
    ppf::emit_report(cfg, res);
    ppf::write_summary(std::cerr, res);
    return res.invariant_failures.empty() ? 0 : 1;
}

int partition_table(const std::string& path, const Overrides& o) {
    const ppf::ExperimentConfig cfg = config_from(path, o);
    const auto rows = ppf::run_partition_table(cfg);
    if (cfg.output.empty()) {
        ppf::write_partition_csv(std::cout, rows);
    } else {
        std::ofstream f(cfg.output);
        if (!f) throw std::runtime_error("cannot write " + cfg.output);
        ppf::write_partition_csv(f, rows);
    }
    return 0;
}

void print_report(const ppf::CubatureReport& r) {
    std::cout << "degree " << r.degree << "  max deviation " << std::setprecision(3) << std::scientific
              << r.max_deviation << "  at word " << (r.argmax.empty() ? "-" : ppf::word_to_string(r.argmax))
              << "  " << (r.pass ? "PASS" : "FAIL") << '\n';
}

int verify(const std::string& file, double tol, std::optional<int> degree) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file);
    try {
        const ppf::WienerCubature c = ppf::read_formula(in);
        const ppf::CubatureReport r = ppf::verify_cubature(c, tol, degree);
        std::cout << file << ": d=" << c.d << " m=" << c.m << " points=" << c.size() << '\n';
        print_report(r);
        return r.pass ? 0 : 1;
    } catch (const ppf::CubatureError& e) {
        std::cout << file << ": " << e.what() << '\n';
        print_report(e.report);
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patched particle filters on the linear Lorenz test model"};
    app.require_subcommand(1);

    std::string run_cfg, part_cfg, cub_file;
    Overrides run_o, part_o;
    double tol = 1e-10;
    std::optional<int> degree;

    CLI::App* run_cmd = app.add_subcommand("run", "run a filter sweep and emit CSV");
    run_cmd->add_option("--config", run_cfg, "JSON experiment config");
    add_overrides(run_cmd, run_o);

    CLI::App* part_cmd = app.add_subcommand("partition-table", "adaptive partition sizes per (R, epsilon)");
    part_cmd->add_option("--config", part_cfg, "JSON experiment config");
    add_overrides(part_cmd, part_o);

    CLI::App* ver_cmd = app.add_subcommand("verify-cubature", "check a Wiener cubature file against E[S(B)]");
    ver_cmd->add_option("file", cub_file, "formula file")->required();
    ver_cmd->add_option("--tol", tol, "max deviation");
    ver_cmd->add_option("--degree", degree, "degree to verify (default: the file's m)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run_cmd) return run(run_cfg, run_o);
        if (*part_cmd) return partition_table(part_cfg, part_o);
        if (*ver_cmd) return verify(cub_file, tol, degree);
    } catch (const ppf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
