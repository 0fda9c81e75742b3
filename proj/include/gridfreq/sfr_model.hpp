#pragma once

#include "gridfreq/numerics.hpp"

#include <map>
#include <string>
#include <vector>

namespace gridfreq {

enum class UnitKind { Steam, Gas, Diesel, Ccgt };

const char* to_string(UnitKind k);
UnitKind unit_kind_from_string(const std::string& s);

// Reheat steam turbine with governor (three states).
struct SteamTgParams {
    double R = 0.05;
    double T_G = 0.1;
    double T_CH = 0.1;
    double T_RH = 7.0;
    double F_HP = 0.3;
};

// Rowen-type gas turbine chain (four states). Also used for diesel and CCGT gas side.
struct GasTgParams {
    double R = 0.05;
    double T_gov = 0.05;
    double T_V = 0.05;
    double T_F = 0.4;
    double T_CD = 0.1;
};

struct GeneratorUnit {
    UnitKind kind = UnitKind::Gas;
    double rated_gw = 0.0;
    double inertia_h = 5.0;
    double damping_d = 1.0;
    SteamTgParams steam;
    GasTgParams gas;
};

struct RegionSpec {
    std::string name;
    std::vector<GeneratorUnit> units;
    double renewable_gw = 0.0;
    double total_gw = 0.0;

    double renewable_share() const;
    void validate() const;
};

struct TieLine {
    std::string a, b;
    double capacity_gw = 0.0;
    double t_sync = 0.0;  // GW per rad
};

double equivalent_inertia(const RegionSpec& r);
double equivalent_damping(const RegionSpec& r);

// Which ASM block a unit belongs to. Diesel shares the gas block.
enum class AsmBlock { Steam, Gas, Ccgt };

struct AsmAggregate {
    AsmBlock block;
    double kappa = 0.0;  // sum S_m / S_T over member units
    SteamTgParams steam;
    GasTgParams gas;
};

AsmAggregate asm_aggregate(const RegionSpec& r, AsmBlock block);
bool has_block(const RegionSpec& r, AsmBlock block);

// Single input (power imbalance, p.u. on S_T), single output (frequency, p.u.).
StateSpace build_region_model(const RegionSpec& r);

struct GridModel {
    StateSpace ss;  // B: one column per region; C: N frequencies then L line flows
    Mat Lambda;
    std::vector<RegionSpec> regions;
    std::vector<TieLine> lines;
    std::vector<int> region_offset;  // first state of each region
    std::vector<int> region_order;   // states per region
    int line_offset = 0;
    std::vector<std::string> output_labels;

    int n_regions() const { return static_cast<int>(regions.size()); }
    int n_lines() const { return static_cast<int>(lines.size()); }
    int region_index(const std::string& name) const;
    Vec region_bases() const;
};

GridModel assemble_grid(const std::vector<RegionSpec>& regions, const std::vector<TieLine>& lines);

struct OpenLoopTrace {
    Vec t;
    Mat y;     // rows: samples, cols: outputs (p.u.)
    Mat x;     // rows: samples, cols: states
    double f0 = 60.0;
    int n_regions = 0;
    Mat df_hz() const;  // regional frequencies in Hz
};

// Constant disturbance dP with IBR input u(t) entering through -Lambda u.
OpenLoopTrace simulate_open_loop(const GridModel& g, const Vec& dP, const InputSignal& u,
                                 double t_end, double dt_sim, double f0 = 60.0);

// Sum over regions of S_T times the line injection seen by the swing equations.
double line_power_balance(const GridModel& g, const Vec& x);

}  // namespace gridfreq
