#include "gridfreq/sfr_model.hpp"

#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace gridfreq {

const char* to_string(UnitKind k) {
    switch (k) {
        case UnitKind::Steam: return "steam";
        case UnitKind::Gas: return "gas";
        case UnitKind::Diesel: return "diesel";
        case UnitKind::Ccgt: return "ccgt";
    }
    return "?";
}

UnitKind unit_kind_from_string(const std::string& s) {
    if (s == "steam") return UnitKind::Steam;
    if (s == "gas") return UnitKind::Gas;
    if (s == "diesel") return UnitKind::Diesel;
    if (s == "ccgt") return UnitKind::Ccgt;
    throw std::invalid_argument("unknown unit kind '" + s + "'");
}

double RegionSpec::renewable_share() const {
    if (total_gw <= 0) throw std::invalid_argument("region " + name + ": zero total capacity");
    return renewable_gw / total_gw;
}

void RegionSpec::validate() const {
    if (name.empty()) throw std::invalid_argument("region without name");
    if (total_gw <= 0) throw std::invalid_argument("region " + name + ": total_gw must be positive");
    double sum = renewable_gw;
    for (const auto& u : units) {
        if (u.rated_gw < 0 || u.inertia_h < 0 || u.damping_d < 0)
            throw std::invalid_argument("region " + name + ": negative unit parameter");
        sum += u.rated_gw;
    }
    if (std::abs(sum - total_gw) > 1e-6)
        throw std::invalid_argument("region " + name + ": units plus renewables (" +
                                    std::to_string(sum) + " GW) differ from total_gw (" +
                                    std::to_string(total_gw) + " GW)");
    double lam = renewable_share();
    if (lam < 0 || lam >= 1) throw std::invalid_argument("region " + name + ": renewable share outside [0,1)");
}

double equivalent_inertia(const RegionSpec& r) {
    if (r.total_gw <= 0) throw std::invalid_argument("equivalent_inertia: zero total capacity");
    double s = 0;
    for (const auto& u : r.units) s += u.rated_gw * u.inertia_h;
    return s / r.total_gw;
}

double equivalent_damping(const RegionSpec& r) {
    if (r.total_gw <= 0) throw std::invalid_argument("equivalent_damping: zero total capacity");
    double s = 0;
    for (const auto& u : r.units) s += u.rated_gw * u.damping_d;
    return s / r.total_gw;
}

namespace {

AsmBlock block_of(UnitKind k) {
    switch (k) {
        case UnitKind::Steam: return AsmBlock::Steam;
        case UnitKind::Ccgt: return AsmBlock::Ccgt;
        default: return AsmBlock::Gas;
    }
}

}  // namespace

bool has_block(const RegionSpec& r, AsmBlock block) {
    for (const auto& u : r.units)
        if (block_of(u.kind) == block && u.rated_gw > 0) return true;
    return false;
}

AsmAggregate asm_aggregate(const RegionSpec& r, AsmBlock block) {
    AsmAggregate a;
    a.block = block;
    a.steam = SteamTgParams{0, 0, 0, 0, 0};
    a.gas = GasTgParams{0, 0, 0, 0, 0};
    for (const auto& u : r.units) {
        if (block_of(u.kind) != block || u.rated_gw <= 0) continue;
        double k = u.rated_gw / r.total_gw;
        a.kappa += k;
        a.steam.R += k * u.steam.R;
        a.steam.T_G += k * u.steam.T_G;
        a.steam.T_CH += k * u.steam.T_CH;
        a.steam.T_RH += k * u.steam.T_RH;
        a.steam.F_HP += k * u.steam.F_HP;
        a.gas.R += k * u.gas.R;
        a.gas.T_gov += k * u.gas.T_gov;
        a.gas.T_V += k * u.gas.T_V;
        a.gas.T_F += k * u.gas.T_F;
        a.gas.T_CD += k * u.gas.T_CD;
    }
    if (a.kappa <= 0) throw std::invalid_argument("asm_aggregate: no units of requested kind in " + r.name);
    auto norm = [&](double& v) { v /= a.kappa; };
    norm(a.steam.R); norm(a.steam.T_G); norm(a.steam.T_CH); norm(a.steam.T_RH); norm(a.steam.F_HP);
    norm(a.gas.R); norm(a.gas.T_gov); norm(a.gas.T_V); norm(a.gas.T_F); norm(a.gas.T_CD);
    return a;
}

StateSpace build_region_model(const RegionSpec& r) {
    r.validate();
    const double H = equivalent_inertia(r);
    const double D = equivalent_damping(r);
    if (H <= 0) throw std::invalid_argument("region " + r.name + ": equivalent inertia must be positive");

    const bool steam = has_block(r, AsmBlock::Steam);
    const bool gas = has_block(r, AsmBlock::Gas);
    const bool ccgt = has_block(r, AsmBlock::Ccgt);
    const int n = 1 + 3 * steam + 4 * gas + 4 * ccgt;

    StateSpace m;
    m.A = Mat::Zero(n, n);
    m.B = Mat::Zero(n, 1);
    m.C = Mat::Zero(1, n);
    m.D = Mat::Zero(1, 1);
    m.A(0, 0) = -D / (2 * H);
    m.B(0, 0) = 1 / (2 * H);
    m.C(0, 0) = 1;
    m.state_labels.push_back(r.name + ".freq");

    int j = 1;
    if (steam) {
        AsmAggregate a = asm_aggregate(r, AsmBlock::Steam);
        const auto& p = a.steam;
        if (p.T_G <= 0 || p.T_CH <= 0 || p.T_RH <= 0 || p.R <= 0 || p.F_HP < 0 || p.F_HP > 1)
            throw std::invalid_argument("region " + r.name + ": invalid steam governor parameters");
        m.A(j, 0) = -1 / (p.R * p.T_G);
        m.A(j, j) = -1 / p.T_G;
        m.A(j + 1, j) = 1 / p.T_CH;
        m.A(j + 1, j + 1) = -1 / p.T_CH;
        m.A(j + 2, j + 1) = 1 / p.T_RH;
        m.A(j + 2, j + 2) = -1 / p.T_RH;
        m.A(0, j + 1) += a.kappa * p.F_HP / (2 * H);
        m.A(0, j + 2) += a.kappa * (1 - p.F_HP) / (2 * H);
        for (const char* s : {"valve", "pressure", "reheat"})
            m.state_labels.push_back(r.name + ".steam." + s);
        j += 3;
    }
    auto add_gas = [&](AsmBlock b, const char* tag) {
        AsmAggregate a = asm_aggregate(r, b);
        const auto& p = a.gas;
        if (p.T_gov <= 0 || p.T_V <= 0 || p.T_F <= 0 || p.T_CD <= 0 || p.R <= 0)
            throw std::invalid_argument("region " + r.name + ": invalid gas governor parameters");
        m.A(j, 0) = -1 / (p.R * p.T_gov);
        m.A(j, j) = -1 / p.T_gov;
        m.A(j + 1, j) = 1 / p.T_V;
        m.A(j + 1, j + 1) = -1 / p.T_V;
        m.A(j + 2, j + 1) = 1 / p.T_F;
        m.A(j + 2, j + 2) = -1 / p.T_F;
        m.A(j + 3, j + 2) = 1 / p.T_CD;
        m.A(j + 3, j + 3) = -1 / p.T_CD;
        m.A(0, j + 3) += a.kappa / (2 * H);
        for (const char* s : {"command", "valve", "fuel", "discharge"})
            m.state_labels.push_back(r.name + "." + tag + "." + s);
        j += 4;
    };
    if (gas) add_gas(AsmBlock::Gas, "gas");
    if (ccgt) add_gas(AsmBlock::Ccgt, "ccgt");
    return m;
}

int GridModel::region_index(const std::string& name) const {
    for (int i = 0; i < n_regions(); ++i)
        if (regions[i].name == name) return i;
    throw std::invalid_argument("unknown region '" + name + "'");
}

Vec GridModel::region_bases() const {
    Vec s(n_regions());
    for (int i = 0; i < n_regions(); ++i) s(i) = regions[i].total_gw;
    return s;
}

GridModel assemble_grid(const std::vector<RegionSpec>& regions, const std::vector<TieLine>& lines) {
    if (regions.empty()) throw std::invalid_argument("assemble_grid: no regions");
    GridModel g;
    g.regions = regions;
    g.lines = lines;
    std::set<std::string> names;
    for (const auto& r : regions)
        if (!names.insert(r.name).second) throw std::invalid_argument("duplicate region '" + r.name + "'");

    std::vector<StateSpace> parts;
    int n = 0;
    for (const auto& r : regions) {
        parts.push_back(build_region_model(r));
        g.region_offset.push_back(n);
        g.region_order.push_back(parts.back().nx());
        n += parts.back().nx();
    }
    g.line_offset = n;
    const int N = static_cast<int>(regions.size()), L = static_cast<int>(lines.size());
    n += L;

    StateSpace& m = g.ss;
    m.A = Mat::Zero(n, n);
    m.B = Mat::Zero(n, N);
    m.C = Mat::Zero(N + L, n);
    m.D = Mat::Zero(N + L, N);
    for (int i = 0; i < N; ++i) {
        const int o = g.region_offset[i], ni = g.region_order[i];
        m.A.block(o, o, ni, ni) = parts[i].A;
        m.B(o, i) = parts[i].B(0, 0);
        m.C(i, o) = 1;
        for (const auto& s : parts[i].state_labels) m.state_labels.push_back(s);
        g.output_labels.push_back(regions[i].name + ".freq");
    }

    std::set<std::pair<std::string, std::string>> seen;
    for (int l = 0; l < L; ++l) {
        const auto& ln = lines[l];
        if (ln.a == ln.b) throw std::invalid_argument("tie-line with identical endpoints '" + ln.a + "'");
        if (ln.t_sync <= 0) throw std::invalid_argument("tie-line " + ln.a + "-" + ln.b + ": synchronizing coefficient must be positive");
        auto key = std::minmax(ln.a, ln.b);
        if (!seen.insert(key).second) throw std::invalid_argument("duplicate tie-line " + ln.a + "-" + ln.b);
        const int ia = g.region_index(ln.a), ib = g.region_index(ln.b);
        const int oa = g.region_offset[ia], ob = g.region_offset[ib], k = g.line_offset + l;
        const double Sa = regions[ia].total_gw, Sb = regions[ib].total_gw;
        const double w = 2 * std::numbers::pi * ln.t_sync;
        m.A(k, oa) += w;
        m.A(k, ob) -= w;
        m.A(oa, k) -= m.B(oa, ia) / Sa;
        m.A(ob, k) += m.B(ob, ib) / Sb;
        m.C(N + l, k) = 1 / Sa;
        m.state_labels.push_back("tie." + ln.a + "-" + ln.b);
        g.output_labels.push_back("tie." + ln.a + "-" + ln.b);
    }

    g.Lambda = Mat::Zero(N, N);
    for (int i = 0; i < N; ++i) g.Lambda(i, i) = regions[i].renewable_share();
    return g;
}

Mat OpenLoopTrace::df_hz() const { return y.leftCols(n_regions) * f0; }

OpenLoopTrace simulate_open_loop(const GridModel& g, const Vec& dP, const InputSignal& u,
                                 double t_end, double dt_sim, double f0) {
    const int N = g.n_regions();
    if (dP.size() != N) throw std::invalid_argument("simulate_open_loop: disturbance size mismatch");
    Mat Bfull(g.ss.nx(), 2 * N);
    Bfull << g.ss.B, -g.ss.B * g.Lambda;
    auto input = [&](double t) {
        Vec v(2 * N);
        v << dP, u(t);
        return v;
    };
    Mat X = integrate_lti(g.ss.A, Bfull, input, Vec::Zero(g.ss.nx()), dt_sim, t_end);
    OpenLoopTrace tr;
    tr.f0 = f0;
    tr.n_regions = N;
    tr.x = X.transpose();
    tr.y = tr.x * g.ss.C.transpose();
    tr.t = Vec::LinSpaced(X.cols(), 0.0, dt_sim * (X.cols() - 1));
    return tr;
}

double line_power_balance(const GridModel& g, const Vec& x) {
    // S_a * (-w/S_a) + S_b * (w/S_b) per line
    double s = 0;
    for (int l = 0; l < g.n_lines(); ++l) {
        const int ia = g.region_index(g.lines[l].a), ib = g.region_index(g.lines[l].b);
        const int oa = g.region_offset[ia], ob = g.region_offset[ib], k = g.line_offset + l;
        const double Ha = 1 / (2 * g.ss.B(oa, ia)), Hb = 1 / (2 * g.ss.B(ob, ib));
        s += g.regions[ia].total_gw * 2 * Ha * g.ss.A(oa, k) * x(k);
        s += g.regions[ib].total_gw * 2 * Hb * g.ss.A(ob, k) * x(k);
    }
    return s;
}

}  // namespace gridfreq
