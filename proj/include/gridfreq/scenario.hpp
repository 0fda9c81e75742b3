#pragma once

#include "gridfreq/config.hpp"
#include "gridfreq/mpc.hpp"
#include "gridfreq/observer.hpp"
#include "gridfreq/primary_control.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gridfreq {

struct Disturbance {
    double t = 0.0;  // s
    std::string region;
    double dp = 0.0;  // p.u. of the region base
};

struct ObserverSettings {
    double q = 10.0;  // Q_w = q I
    double r = 1.0;   // R_v = r I
    Vec seed;         // initial disturbance estimate, one entry per region
};

struct Scenario {
    std::string name = "scenario";
    GridConfig grid;
    std::vector<PrimaryParams> primary;  // region order
    MpcConfig mpc;
    int reduced_order = 3;
    ObserverSettings observer;
    std::vector<Disturbance> disturbances;
    double t_end = 30.0;
    double dt_sim = 0.01;
    bool primary_on = true;
    bool mpc_on = true;
    bool tie_lines_on = true;

    int n_regions() const { return static_cast<int>(grid.regions.size()); }
    // Fills per-region defaults (schedule bounds from the renewable shares, zero seed).
    void resolve();
    void validate() const;
};

// KSA cost weights (mu1 = 24, 6, 30, 30 for C, E, W, S) where the names match, unit weights otherwise.
std::vector<PrimaryWeights> default_primary_weights(const GridConfig& g);

std::vector<PrimaryDesignResult> optimize_all_primary(const GridConfig& g, const std::vector<PrimaryWeights>& w,
                                                      const PrimaryDesignOptions& opt = {});

// 2030 grid, -0.02 p.u. in Central at t=0, full architecture with optimized primary parameters.
Scenario ksa_scenario();

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);

struct SolveRecord {
    double t = 0.0;
    QpStatus status = QpStatus::MaxIter;
    double objective = 0.0;
    double hard_violation = 0.0;
    double kkt_error = 0.0;
    double eps_f_max = 0.0, eps_u_max = 0.0;
    std::string infeasible_class;
};

struct SimulationTrace {
    std::vector<std::string> region_names, line_names;
    double f0 = 60.0;
    double dt_sim = 0.01;
    double last_disturbance_t = 0.0;
    Vec t;
    Mat df_pu;  // rows: samples
    Mat ptl;
    Mat uprim, umpc, dphat;
    Vec eps_f_max, eps_u_max;
    std::vector<SolveRecord> solves;
    int alarms = 0;

    // end-of-run plant state for balance checks
    Vec x_final, dp_final, u_final;

    int samples() const { return static_cast<int>(t.size()); }
    Mat df_hz() const { return df_pu * f0; }
    Mat mu() const { return uprim + umpc; }
};

SimulationTrace run_closed_loop(const Scenario& s);

struct MetricsOptions {
    double band_hz = 0.015;
    double ufls_hz = -0.15;
    int rocof_window = 5;  // samples
};

struct Metrics {
    Vec nadir_hz;
    std::vector<bool> ufls_crossed;
    Vec first_ufls_t;  // NaN if never crossed
    Vec settling_t;    // NaN if unsettled
    Vec max_rocof;     // signed windowed RoCoF of largest magnitude, Hz/s
    Vec max_abs_ptl;
    Vec steady_df_hz;
    double settling_all = 0.0;  // NaN if any region unsettled

    bool any_ufls() const;
};

Metrics compute_metrics(const SimulationTrace& tr, const MetricsOptions& opt = {});

// Sum over regions of S_T (mechanical + disturbance - IBR - damping) power at state x.
double region_power_balance(const GridModel& g, const Vec& x, const Vec& dP, const Vec& u);

std::vector<std::string> trace_columns(const SimulationTrace& tr);
void write_trace_csv(const SimulationTrace& tr, std::ostream& os);
nlohmann::json metrics_to_json(const SimulationTrace& tr, const Metrics& m);

// trace.csv, metrics.json and manifest.json in out_dir.
void emit_report(const SimulationTrace& tr, const Metrics& m, const Scenario& s, const std::string& out_dir);

}  // namespace gridfreq
