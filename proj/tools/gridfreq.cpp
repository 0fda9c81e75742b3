// gridfreq command-line entry point.
#include "gridfreq/acceptance.hpp"
#include "gridfreq/config.hpp"
#include "gridfreq/model_reduction.hpp"
#include "gridfreq/scenario.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef GRIDFREQ_GOLDEN
#define GRIDFREQ_GOLDEN ""
#endif

using namespace gridfreq;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kCriterion = 1, kUsage = 2 };

// Usage and configuration problems map to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("gridfreq");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("GRIDFREQ_LOG")) {
        const std::string v = env;
        if (v == "error") spdlog::set_level(spdlog::level::err);
        else if (v == "info") spdlog::set_level(spdlog::level::info);
        else if (v == "debug") spdlog::set_level(spdlog::level::debug);
        else spdlog::warn("GRIDFREQ_LOG='{}' not recognized (error, info, debug)", v);
    }
}

GridConfig load_grid(const std::string& path) { return grid_from_json(read_json_file(path)); }

std::ofstream open_out(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
}

int build_model(const std::string& config, const std::string& out) {
    GridModel g = load_grid(config).build();
    {
        auto f = open_out(out);
        f << "full_grid n " << g.ss.nx() << " regions " << g.n_regions() << " lines " << g.n_lines() << '\n';
        write_matrix(f, "A", g.ss.A);
        write_matrix(f, "B", g.ss.B);
        write_matrix(f, "C", g.ss.C);
        write_matrix(f, "Lambda", g.Lambda);
    }
    auto labels = open_out(out + ".labels");
    for (std::size_t i = 0; i < g.ss.state_labels.size(); ++i) labels << i << ' ' << g.ss.state_labels[i] << '\n';
    std::cout << fmt::format("{} states, {} regions, {} lines -> {}\n", g.ss.nx(), g.n_regions(), g.n_lines(), out);
    return kOk;
}

int optimize(const std::string& config, const std::string& region, const std::string& weights_path,
             const std::string& out) {
    GridConfig g = load_grid(config);
    std::vector<PrimaryWeights> w = default_primary_weights(g);
    if (!weights_path.empty()) {
        const json j = read_json_file(weights_path);
        for (std::size_t i = 0; i < g.regions.size(); ++i) {
            if (!j.contains(g.regions[i].name)) continue;
            const json& x = j.at(g.regions[i].name);
            w[i].mu1 = x.value("mu1", w[i].mu1);
            w[i].mu2 = x.value("mu2", w[i].mu2);
            w[i].mu3 = x.value("mu3", w[i].mu3);
            w[i].horizon = x.value("horizon", w[i].horizon);
        }
    }
    json res = json::object();
    bool found = false;
    for (std::size_t i = 0; i < g.regions.size(); ++i) {
        const RegionSpec& r = g.regions[i];
        if (region != "all" && region != r.name) continue;
        found = true;
        auto d = optimize_primary(build_region_model(r), r.renewable_share(), w[i], {}, {});
        res[r.name] = {{"kbar_d", d.params.kbar_d}, {"h_c", d.params.h_c},       {"d_c", d.params.d_c},
                       {"gamma", d.params.gamma},   {"t_d", d.params.t_d},       {"t_c", d.params.t_c},
                       {"cost", d.cost},            {"evaluations", d.evaluations}};
        std::cout << fmt::format("{}: K={} H={} D={} gamma={} cost={:.6g}\n", r.name, d.params.kbar_d, d.params.h_c,
                                 d.params.d_c, d.params.gamma, d.cost);
    }
    if (!found) throw UsageError("no region named '" + region + "'");
    auto f = open_out(out);
    f << res.dump(2) << '\n';
    return kOk;
}

int reduce(const std::string& config, int order, const std::string& out) {
    GridModel g = load_grid(config).build();
    ReductionOptions opt;
    if (order > 0) opt.fixed_order = order;
    ReducedGridModel red = reduce_grid(g, opt);
    write_reduced_bundle(red, out);
    std::cout << fmt::format("full {} -> minimal {} -> reduced {} states, error bound {:.4e}\n", g.ss.nx(),
                             red.minimal_total(), red.r(), red.error_bound);
    for (int i = 0; i < red.n_regions; ++i)
        std::cout << fmt::format("  {}: minimal {}, kept {}, rho {:.6f}\n", red.region_names[i], red.minimal_orders[i],
                                 red.orders[i], hsv_ratio(red.region_hsv[i], red.orders[i]));
    return kOk;
}

void print_summary(const json& m) {
    for (auto it = m.at("regions").begin(); it != m.at("regions").end(); ++it) {
        const json& r = it.value();
        std::cout << fmt::format("  {:<9} nadir {:+.4f} Hz  ufls {:<5}  settled {}  rocof {:+.4f} Hz/s\n", it.key(),
                                 r.at("nadir_hz").get<double>(), r.at("ufls_crossed").get<bool>() ? "yes" : "no",
                                 r.at("settling_t_s").is_null() ? std::string("never")
                                                                : fmt::format("{:.2f} s", r.at("settling_t_s").get<double>()),
                                 r.at("max_rocof_hz_s").get<double>());
    }
    const json& mpc = m.at("mpc");
    std::cout << fmt::format("  mpc solves {}, alarms {}, worst hard violation {:.1e}\n", mpc.at("solves").get<int>(),
                             mpc.at("alarms").get<int>(), mpc.at("worst_hard_violation").get<double>());
}

int simulate(const std::string& path, const std::string& out, bool no_primary, bool no_mpc) {
    Scenario s = load_scenario(path);
    if (no_primary) s.primary_on = false;
    if (no_mpc) s.mpc_on = false;
    SimulationTrace tr = run_closed_loop(s);
    Metrics m = compute_metrics(tr);
    emit_report(tr, m, s, out);
    std::cout << fmt::format("{}: {} samples -> {}\n", s.name, tr.samples(), out);
    print_summary(metrics_to_json(tr, m));
    return kOk;
}

int report(const std::string& dir) {
    const auto p = std::filesystem::path(dir);
    const json man = read_json_file((p / "manifest.json").string());
    const json m = read_json_file((p / "metrics.json").string());
    std::cout << fmt::format("run {} (version {}, {} samples)\n", man.at("scenario").at("name").get<std::string>(),
                             man.at("version").get<std::string>(), man.at("samples").get<int>());
    print_summary(m);
    return kOk;
}

int verify(const std::string& suite, const std::string& golden) {
    std::vector<CriterionResult> res = run_criteria(suite_criteria(suite));
    if (suite == "e2e" || suite == "all") res.push_back(check_golden_metrics(golden));
    json out = json::array();
    bool ok = true;
    for (const auto& r : res) {
        out.push_back({{"criterion", r.id}, {"title", r.title}, {"pass", r.pass}, {"detail", r.detail}});
        ok = ok && r.pass;
    }
    std::cout << json{{"suite", suite}, {"pass", ok}, {"results", out}}.dump(2) << '\n';
    return ok ? kOk : kCriterion;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Multi-area grid frequency control: models, primary design, reduction, closed-loop simulation"};
    app.require_subcommand(1, 1);

    std::string config, out, region = "all", weights, scenario, run_dir, suite, golden = GRIDFREQ_GOLDEN;
    int order = 0;
    bool no_primary = false, no_mpc = false;

    auto* bm = app.add_subcommand("build-model", "Assemble the full-order grid model");
    bm->add_option("--config", config, "Grid configuration (JSON)")->required();
    bm->add_option("--out", out, "Model bundle path")->required();

    auto* op = app.add_subcommand("optimize-primary", "Optimize per-region primary control parameters");
    op->add_option("--config", config, "Grid configuration (JSON)")->required();
    op->add_option("--region", region, "Region name or 'all'");
    op->add_option("--weights", weights, "Per-region cost weights (JSON)");
    op->add_option("--out", out, "Parameter file path")->required();

    auto* rd = app.add_subcommand("reduce", "Balanced truncation of the grid model");
    rd->add_option("--config", config, "Grid configuration (JSON)")->required();
    rd->add_option("--order", order, "Kept order per region (default: energy threshold)")->check(CLI::NonNegativeNumber);
    rd->add_option("--out", out, "Reduced bundle path")->required();

    auto* sm = app.add_subcommand("simulate", "Run a closed-loop scenario");
    sm->add_option("--scenario", scenario, "Scenario file (JSON)")->required();
    sm->add_option("--out", out, "Output directory")->required();
    sm->add_flag("--no-primary", no_primary, "Disable primary control");
    sm->add_flag("--no-mpc", no_mpc, "Disable the secondary MPC layer");

    auto* rp = app.add_subcommand("report", "Summarize a finished run");
    rp->add_option("--run", run_dir, "Output directory of simulate")->required();

    auto* vf = app.add_subcommand("verify", "Run acceptance suites");
    vf->add_option("--suite", suite, "Suite")
        ->required()
        ->check(CLI::IsMember({"numerics", "reduction", "observer", "mpc", "e2e", "all"}));
    vf->add_option("--golden", golden, "Golden metrics file for the e2e suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*bm) return build_model(config, out);
        if (*op) return optimize(config, region, weights, out);
        if (*rd) return reduce(config, order, out);
        if (*sm) return simulate(scenario, out, no_primary, no_mpc);
        if (*rp) return report(run_dir);
        if (*vf) return verify(suite, golden);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kCriterion;
    }
    return kUsage;
}
