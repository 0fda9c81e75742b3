#include "gridfreq/scenario.hpp"

#include "gridfreq/ksa_dataset.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#ifndef GRIDFREQ_VERSION
#define GRIDFREQ_VERSION "dev"
#endif

namespace gridfreq {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int region_index(const GridConfig& g, const std::string& name) {
    for (std::size_t i = 0; i < g.regions.size(); ++i)
        if (g.regions[i].name == name) return static_cast<int>(i);
    throw ConfigError("unknown region '" + name + "'");
}

bool is_ksa_layout(const std::vector<std::string>& names) {
    if (names.size() != 4) return false;
    for (const char* n : {"central", "eastern", "western", "southern"})
        if (std::find(names.begin(), names.end(), n) == names.end()) return false;
    return true;
}

// number -> constant, array -> region order, object -> by region name
Vec region_vector(const json& j, const GridConfig& g, const std::string& where, const Vec& def) {
    const int N = static_cast<int>(g.regions.size());
    Vec v = def.size() == N ? def : Vec::Zero(N);
    try {
        if (j.is_number()) {
            v.setConstant(j.get<double>());
        } else if (j.is_array()) {
            if (static_cast<int>(j.size()) != N) throw ConfigError(where + ": expected " + std::to_string(N) + " entries");
            for (int i = 0; i < N; ++i) v(i) = j[i].get<double>();
        } else if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) v(region_index(g, it.key())) = it.value().get<double>();
        } else {
            throw ConfigError(where + ": expected a number, an array or a region map");
        }
    } catch (const json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return v;
}

json region_map(const Vec& v, const GridConfig& g) {
    json o = json::object();
    for (int i = 0; i < v.size(); ++i) o[g.regions[i].name] = v(i);
    return o;
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

PrimaryParams primary_from_json(const json& j, const std::string& where) {
    PrimaryParams p;
    read_opt(j, "kbar_d", p.kbar_d, where);
    read_opt(j, "h_c", p.h_c, where);
    read_opt(j, "d_c", p.d_c, where);
    read_opt(j, "gamma", p.gamma, where);
    read_opt(j, "t_d", p.t_d, where);
    read_opt(j, "t_c", p.t_c, where);
    return p;
}

json primary_to_json(const PrimaryParams& p) {
    return {{"kbar_d", p.kbar_d}, {"h_c", p.h_c}, {"d_c", p.d_c}, {"gamma", p.gamma}, {"t_d", p.t_d}, {"t_c", p.t_c}};
}

bool on_grid(double t, double dt) { return std::abs(t / dt - std::round(t / dt)) < 1e-9; }

}  // namespace

std::vector<PrimaryWeights> default_primary_weights(const GridConfig& g) {
    std::vector<PrimaryWeights> w;
    for (const auto& r : g.regions) {
        PrimaryWeights x;
        if (r.name == "central") x.mu1 = 24;
        else if (r.name == "eastern") x.mu1 = 6;
        else if (r.name == "western" || r.name == "southern") x.mu1 = 30;
        w.push_back(x);
    }
    return w;
}

std::vector<PrimaryDesignResult> optimize_all_primary(const GridConfig& g, const std::vector<PrimaryWeights>& w,
                                                      const PrimaryDesignOptions& opt) {
    if (w.size() != g.regions.size()) throw std::invalid_argument("optimize_all_primary: one weight set per region");
    std::vector<PrimaryDesignResult> out;
    for (std::size_t i = 0; i < g.regions.size(); ++i) {
        const RegionSpec& r = g.regions[i];
        out.push_back(optimize_primary(build_region_model(r), r.renewable_share(), w[i], {}, {}, opt));
        spdlog::info("primary {}: K={} H={} D={} gamma={} cost={:.6g}", r.name, out.back().params.kbar_d,
                     out.back().params.h_c, out.back().params.d_c, out.back().params.gamma, out.back().cost);
    }
    return out;
}

namespace {

// scheduled reserve bounds +-0.015/lambda; a region without converters gets no schedule limit
void default_schedule(const GridConfig& g, MpcConfig& c) {
    const int N = static_cast<int>(g.regions.size());
    if (c.u_lo.size() == N && c.u_hi.size() == N) return;
    Vec hi(N);
    for (int i = 0; i < N; ++i) {
        const double lam = g.regions[i].renewable_share();
        hi(i) = lam > 0 ? 0.015 / lam : 1e6;
    }
    if (c.u_hi.size() != N) c.u_hi = hi;
    if (c.u_lo.size() != N) c.u_lo = -hi;
}

}  // namespace

void Scenario::resolve() {
    default_schedule(grid, mpc);
    mpc.fill_defaults(n_regions());
    if (observer.seed.size() == 0) observer.seed = Vec::Zero(n_regions());
}

void Scenario::validate() const {
    grid.validate();
    const int N = n_regions();
    auto fail = [](const std::string& m) { throw ConfigError("scenario: " + m); };
    if (static_cast<int>(primary.size()) != N) fail("primary parameters needed for every region");
    for (const auto& p : primary) {
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }
    try {
        mpc.validate(N);
    } catch (const std::invalid_argument& e) {
        fail(e.what());
    }
    if (dt_sim <= 0 || t_end <= 0) fail("t_end and dt_sim must be positive");
    if (!on_grid(t_end, dt_sim)) fail("dt_sim must divide t_end");
    if (!on_grid(mpc.dt, dt_sim) || !on_grid(mpc.Ts(), dt_sim) || !on_grid(mpc.first_command_delay_s, dt_sim))
        fail("dt_sim must divide the MPC step, the trigger period and the first command delay");
    if (reduced_order < 1) fail("reduced order must be positive");
    if (observer.q <= 0 || observer.r <= 0) fail("observer weights must be positive");
    if (observer.seed.size() != N) fail("observer seed needs one entry per region");
    for (const auto& d : disturbances) {
        if (d.t < 0) fail("disturbance times must be nonnegative");
        if (!on_grid(d.t, dt_sim)) fail("disturbance times must lie on the dt_sim grid");
        region_index(grid, d.region);
    }
}

Scenario ksa_scenario() {
    Scenario s;
    s.name = "ksa_2030_central_loss";
    s.grid = ksa_grid_2030();
    for (const auto& r : optimize_all_primary(s.grid, default_primary_weights(s.grid))) s.primary.push_back(r.params);
    s.disturbances.push_back({0.0, "central", -0.02});
    s.observer.seed = Vec::Zero(4);
    s.observer.seed(region_index(s.grid, "central")) = -0.018;
    s.observer.seed(region_index(s.grid, "western")) = -0.001;
    s.resolve();
    s.validate();
    return s;
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
    Scenario s;
    read_opt(j, "name", s.name, "scenario");

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        if (g.is_string()) {
            const auto name = g.get<std::string>();
            if (name == "ksa_2030") s.grid = ksa_grid_2030();
            else if (name == "ksa_pre_res") s.grid = ksa_grid_pre_res();
            else throw ConfigError("scenario.grid: unknown dataset '" + name + "'");
        } else {
            s.grid = grid_from_json(g);
        }
    } else {
        throw ConfigError("scenario: missing field 'grid'");
    }
    s.grid.validate();
    const int N = s.n_regions();

    const json prim = j.value("primary", json("optimize"));
    if (prim.is_string() && prim.get<std::string>() == "optimize") {
        std::vector<PrimaryWeights> w = default_primary_weights(s.grid);
        if (j.contains("primary_weights")) {
            const json& pw = j.at("primary_weights");
            for (auto it = pw.begin(); it != pw.end(); ++it) {
                PrimaryWeights& x = w[region_index(s.grid, it.key())];
                const std::string where = "scenario.primary_weights." + it.key();
                read_opt(it.value(), "mu1", x.mu1, where);
                read_opt(it.value(), "mu2", x.mu2, where);
                read_opt(it.value(), "mu3", x.mu3, where);
                read_opt(it.value(), "horizon", x.horizon, where);
            }
        }
        for (const auto& r : optimize_all_primary(s.grid, w)) s.primary.push_back(r.params);
    } else if (prim.is_object()) {
        s.primary.assign(N, PrimaryParams{});
        std::vector<bool> seen(N, false);
        for (auto it = prim.begin(); it != prim.end(); ++it) {
            const int i = region_index(s.grid, it.key());
            s.primary[i] = primary_from_json(it.value(), "scenario.primary." + it.key());
            seen[i] = true;
        }
        for (int i = 0; i < N; ++i)
            if (!seen[i]) throw ConfigError("scenario.primary: no parameters for region '" + s.grid.regions[i].name + "'");
    } else {
        throw ConfigError("scenario.primary: expected \"optimize\" or a region map");
    }

    if (j.contains("mpc")) {
        const json& m = j.at("mpc");
        const std::string w = "scenario.mpc";
        MpcConfig& c = s.mpc;
        read_opt(m, "H", c.H, w);
        read_opt(m, "h", c.h, w);
        read_opt(m, "dt", c.dt, w);
        read_opt(m, "df_lo", c.df_lo, w);
        read_opt(m, "df_hi", c.df_hi, w);
        read_opt(m, "f0", c.f0, w);
        read_opt(m, "rocof_max", c.rocof_max, w);
        read_opt(m, "n_r", c.n_r, w);
        read_opt(m, "ptl_lo", c.ptl_lo, w);
        read_opt(m, "ptl_hi", c.ptl_hi, w);
        read_opt(m, "du_max", c.du_max, w);
        read_opt(m, "first_command_delay_s", c.first_command_delay_s, w);
        default_schedule(s.grid, c);
        c.fill_defaults(N);
        auto vec = [&](const char* key, Vec& v) {
            if (m.contains(key)) v = region_vector(m.at(key), s.grid, w + "." + key, v);
        };
        vec("Q_diag", c.Q_diag);
        vec("R_diag", c.R_diag);
        vec("eta_f", c.eta_f);
        vec("eta_u", c.eta_u);
        vec("p_ibr_star", c.p_ibr_star);
        vec("u_lo", c.u_lo);
        vec("u_hi", c.u_hi);
        if (m.contains("prediction")) {
            const auto p = m.at("prediction").get<std::string>();
            if (p == "joint_zoh") c.prediction = PrimaryPrediction::JointZoh;
            else if (p == "tustin") c.prediction = PrimaryPrediction::Tustin;
            else throw ConfigError(w + ".prediction: expected \"joint_zoh\" or \"tustin\"");
        }
    }
    if (j.contains("observer")) {
        const json& o = j.at("observer");
        read_opt(o, "q", s.observer.q, "scenario.observer");
        read_opt(o, "r", s.observer.r, "scenario.observer");
        if (o.contains("seed")) s.observer.seed = region_vector(o.at("seed"), s.grid, "scenario.observer.seed", Vec::Zero(N));
    }
    if (j.contains("reduction")) read_opt(j.at("reduction"), "order", s.reduced_order, "scenario.reduction");
    if (j.contains("disturbances")) {
        for (const auto& d : j.at("disturbances")) {
            Disturbance x;
            read_opt(d, "t", x.t, "scenario.disturbances");
            read_opt(d, "region", x.region, "scenario.disturbances");
            read_opt(d, "dp", x.dp, "scenario.disturbances");
            s.disturbances.push_back(x);
        }
    }
    read_opt(j, "t_end", s.t_end, "scenario");
    read_opt(j, "dt_sim", s.dt_sim, "scenario");
    if (j.contains("toggles")) {
        const json& t = j.at("toggles");
        read_opt(t, "primary_on", s.primary_on, "scenario.toggles");
        read_opt(t, "mpc_on", s.mpc_on, "scenario.toggles");
        read_opt(t, "tie_lines_on", s.tie_lines_on, "scenario.toggles");
    }
    s.resolve();
    s.validate();
    return s;
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["grid"] = grid_to_json(s.grid);
    json p = json::object();
    for (std::size_t i = 0; i < s.primary.size(); ++i) p[s.grid.regions[i].name] = primary_to_json(s.primary[i]);
    j["primary"] = p;
    const MpcConfig& c = s.mpc;
    j["mpc"] = {{"H", c.H},
                {"h", c.h},
                {"dt", c.dt},
                {"Q_diag", region_map(c.Q_diag, s.grid)},
                {"R_diag", region_map(c.R_diag, s.grid)},
                {"eta_f", region_map(c.eta_f, s.grid)},
                {"eta_u", region_map(c.eta_u, s.grid)},
                {"df_lo", c.df_lo},
                {"df_hi", c.df_hi},
                {"f0", c.f0},
                {"rocof_max", c.rocof_max},
                {"n_r", c.n_r},
                {"ptl_lo", c.ptl_lo},
                {"ptl_hi", c.ptl_hi},
                {"du_max", c.du_max},
                {"p_ibr_star", region_map(c.p_ibr_star, s.grid)},
                {"u_lo", region_map(c.u_lo, s.grid)},
                {"u_hi", region_map(c.u_hi, s.grid)},
                {"first_command_delay_s", c.first_command_delay_s},
                {"prediction", c.prediction == PrimaryPrediction::JointZoh ? "joint_zoh" : "tustin"}};
    j["observer"] = {{"q", s.observer.q}, {"r", s.observer.r}, {"seed", region_map(s.observer.seed, s.grid)}};
    j["reduction"] = {{"order", s.reduced_order}};
    json d = json::array();
    for (const auto& x : s.disturbances) d.push_back({{"t", x.t}, {"region", x.region}, {"dp", x.dp}});
    j["disturbances"] = d;
    j["t_end"] = s.t_end;
    j["dt_sim"] = s.dt_sim;
    j["toggles"] = {{"primary_on", s.primary_on}, {"mpc_on", s.mpc_on}, {"tie_lines_on", s.tie_lines_on}};
    return j;
}

Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

SimulationTrace run_closed_loop(const Scenario& s) {
    s.validate();
    const GridModel g = s.grid.build(s.tie_lines_on);
    const int N = g.n_regions(), L = g.n_lines(), n = g.ss.nx();
    const double dt = s.dt_sim;

    // plant with the continuous primary controllers: inputs [dP, u_mpc]
    StateSpace F = primary_bank(s.primary);
    if (!s.primary_on) {
        F.C.setZero();
        F.D.setZero();
    }
    const Mat Cy = g.ss.C.topRows(N);
    const Mat BL = g.ss.B * g.Lambda;
    Mat Acl = Mat::Zero(n + 2 * N, n + 2 * N);
    Acl.topLeftCorner(n, n) = g.ss.A - BL * F.D * Cy;
    Acl.topRightCorner(n, 2 * N) = -BL * F.C;
    Acl.bottomLeftCorner(2 * N, n) = F.B * Cy;
    Acl.bottomRightCorner(2 * N, 2 * N) = F.A;
    Mat Bcl = Mat::Zero(n + 2 * N, 2 * N);
    Bcl.topLeftCorner(n, N) = g.ss.B;
    Bcl.topRightCorner(n, N) = -BL;
    Mat Ad, Bd;
    zoh_discretize(Acl, Bcl, dt, Ad, Bd);

    ReductionOptions ropt;
    ropt.fixed_order = s.reduced_order;
    const ReducedGridModel red = reduce_grid(g, ropt);
    AugmentedFilter filt = design_filter(red, s.observer.q * Mat::Identity(red.r() + N, red.r() + N),
                                         s.observer.r * Mat::Identity(N + L, N + L));
    prepare_filter(filt, dt);
    ObserverState obs = initial_observer_state(filt, s.observer.seed);

    std::unique_ptr<MpcController> ctl;
    if (s.mpc_on) {
        PredictionModel pm = build_prediction_model(red, s.primary, s.primary_on, s.mpc);
        ctl = std::make_unique<MpcController>(std::move(pm), s.mpc, s.primary, s.primary_on);
    }

    const int steps = steps_for(s.t_end, dt);
    SimulationTrace tr;
    for (const auto& r : g.regions) tr.region_names.push_back(r.name);
    for (const auto& l : s.grid.lines) tr.line_names.push_back(l.a + "-" + l.b);
    const int Lc = static_cast<int>(tr.line_names.size());
    tr.f0 = s.grid.f0;
    tr.dt_sim = dt;
    for (const auto& d : s.disturbances) tr.last_disturbance_t = std::max(tr.last_disturbance_t, d.t);
    tr.t.resize(steps + 1);
    tr.df_pu.resize(steps + 1, N);
    tr.ptl = Mat::Zero(steps + 1, Lc);
    tr.uprim.resize(steps + 1, N);
    tr.umpc.resize(steps + 1, N);
    tr.dphat.resize(steps + 1, N);
    tr.eps_f_max = Vec::Zero(steps + 1);
    tr.eps_u_max = Vec::Zero(steps + 1);

    std::vector<int> line_col;  // built line l -> configured line column
    for (const auto& l : g.lines) {
        for (int c = 0; c < Lc; ++c)
            if (s.grid.lines[c].a == l.a && s.grid.lines[c].b == l.b) line_col.push_back(c);
    }

    Vec X = Vec::Zero(n + 2 * N);
    Vec dP = Vec::Zero(N), umpc = Vec::Zero(N), in(2 * N), filt_u(N);
    double eps_f = 0, eps_u = 0;
    for (int k = 0; k <= steps; ++k) {
        const double t = k * dt;
        dP.setZero();
        for (const auto& d : s.disturbances)
            if (steps_for(d.t, dt) <= k) dP(g.region_index(d.region)) += d.dp;

        const Vec y = g.ss.C * X.head(n);
        const Vec df = y.head(N);
        const Vec z = X.tail(2 * N);
        const Vec uprim = F.C * z + F.D * df;
        if (ctl) {
            if (ctl->due(t)) {
                auto [xh, dph] = sample_for_mpc(obs);
                MpcSolution sol = ctl->trigger(t, xh, dph, z);
                SolveRecord rec;
                rec.t = t;
                rec.status = sol.status;
                rec.objective = sol.objective;
                rec.hard_violation = sol.hard_violation;
                rec.kkt_error = sol.kkt_error;
                rec.infeasible_class = sol.infeasible_class;
                if (sol.status == QpStatus::Optimal) {
                    rec.eps_f_max = eps_f = sol.eps_f.maxCoeff();
                    rec.eps_u_max = eps_u = sol.eps_u.maxCoeff();
                }
                tr.solves.push_back(rec);
            }
            umpc = ctl->command(t);
            ctl->sample_frequency(t, df);
        }

        tr.t(k) = t;
        tr.df_pu.row(k) = df.transpose();
        for (int l = 0; l < L; ++l) tr.ptl(k, line_col[l]) = y(N + l);
        tr.uprim.row(k) = uprim.transpose();
        tr.umpc.row(k) = umpc.transpose();
        tr.dphat.row(k) = obs.dphat.transpose();
        tr.eps_f_max(k) = eps_f;
        tr.eps_u_max(k) = eps_u;

        if (k == steps) {
            tr.x_final = X.head(n);
            tr.dp_final = dP;
            tr.u_final = uprim + umpc;
            break;
        }
        in << dP, umpc;
        X = Ad * X + Bd * in;
        obs = step_filter(filt, obs, uprim + umpc, y, dt);
    }
    if (ctl) tr.alarms = ctl->alarms();
    return tr;
}

bool Metrics::any_ufls() const { return std::any_of(ufls_crossed.begin(), ufls_crossed.end(), [](bool b) { return b; }); }

Metrics compute_metrics(const SimulationTrace& tr, const MetricsOptions& opt) {
    const int T = tr.samples(), N = static_cast<int>(tr.df_pu.cols());
    if (T == 0) throw std::invalid_argument("compute_metrics: empty trace");
    const Mat f = tr.df_hz();
    Metrics m;
    m.nadir_hz = Vec::Zero(N);
    m.first_ufls_t = Vec::Constant(N, kNaN);
    m.settling_t = Vec::Constant(N, kNaN);
    m.max_rocof = Vec::Zero(N);
    m.steady_df_hz = f.row(T - 1).transpose();
    m.ufls_crossed.assign(N, false);
    m.settling_all = 0.0;
    const int w = opt.rocof_window;
    for (int i = 0; i < N; ++i) {
        m.nadir_hz(i) = std::min(0.0, f.col(i).minCoeff());
        for (int k = 0; k < T; ++k)
            if (f(k, i) < opt.ufls_hz) {
                m.ufls_crossed[i] = true;
                m.first_ufls_t(i) = tr.t(k);
                break;
            }
        // last sample outside the band fixes the settling time
        int last_out = -1;
        for (int k = 0; k < T; ++k)
            if (std::abs(f(k, i)) > opt.band_hz) last_out = k;
        if (last_out < T - 1) m.settling_t(i) = std::max(last_out < 0 ? 0.0 : tr.t(last_out + 1), tr.last_disturbance_t);
        for (int k = 0; k + w < T; ++k) {
            const double r = (f(k + w, i) - f(k, i)) / (tr.t(k + w) - tr.t(k));
            if (std::abs(r) > std::abs(m.max_rocof(i))) m.max_rocof(i) = r;
        }
    }
    m.max_abs_ptl = Vec::Zero(tr.ptl.cols());
    for (int l = 0; l < tr.ptl.cols(); ++l) m.max_abs_ptl(l) = tr.ptl.col(l).cwiseAbs().maxCoeff();
    for (int i = 0; i < N; ++i) {
        if (std::isnan(m.settling_t(i))) m.settling_all = kNaN;
        else if (!std::isnan(m.settling_all)) m.settling_all = std::max(m.settling_all, m.settling_t(i));
    }
    return m;
}

double region_power_balance(const GridModel& g, const Vec& x, const Vec& dP, const Vec& u) {
    double s = 0;
    for (int i = 0; i < g.n_regions(); ++i) {
        const int o = g.region_offset[i];
        const double two_h = 1.0 / g.ss.B(o, i);
        double p = 0;  // mechanical and damping terms of the swing row
        for (int j = o; j < o + g.region_order[i]; ++j) p += two_h * g.ss.A(o, j) * x(j);
        p += dP(i) - g.Lambda(i, i) * u(i);
        s += g.regions[i].total_gw * p;
    }
    return s;
}

std::vector<std::string> trace_columns(const SimulationTrace& tr) {
    const bool ksa = is_ksa_layout(tr.region_names);
    std::vector<std::string> regions;
    if (ksa) regions = {"central", "eastern", "western", "southern"};
    else regions = tr.region_names;
    auto tag = [&](const std::string& r) { return ksa ? r.substr(0, 1) : r; };
    std::vector<std::string> c{"t_s"};
    for (const auto& r : regions) c.push_back("df_" + r + "_hz");
    for (const auto& l : tr.line_names) {
        const auto dash = l.find('-');
        const std::string a = l.substr(0, dash), b = l.substr(dash + 1);
        c.push_back(ksa ? "ptl_" + tag(a) + tag(b) + "_pu" : "ptl_" + a + "_" + b + "_pu");
    }
    for (const char* p : {"uprim_", "umpc_", "dphat_"})
        for (const auto& r : regions) c.push_back(p + tag(r));
    c.push_back("eps_f_max");
    c.push_back("eps_u_max");
    return c;
}

void write_trace_csv(const SimulationTrace& tr, std::ostream& os) {
    const auto cols = trace_columns(tr);
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    const bool ksa = is_ksa_layout(tr.region_names);
    std::vector<int> order;
    if (ksa) {
        for (const char* r : {"central", "eastern", "western", "southern"})
            order.push_back(static_cast<int>(std::find(tr.region_names.begin(), tr.region_names.end(), r) -
                                             tr.region_names.begin()));
    } else {
        for (int i = 0; i < static_cast<int>(tr.region_names.size()); ++i) order.push_back(i);
    }
    std::string line;
    auto put = [&](double v) {
        if (v == 0.0) v = 0.0;  // no negative zero
        line += fmt::format(",{:.12g}", v);
    };
    for (int k = 0; k < tr.samples(); ++k) {
        line = fmt::format("{:.12g}", tr.t(k));
        for (int i : order) put(tr.df_pu(k, i) * tr.f0);
        for (int l = 0; l < tr.ptl.cols(); ++l) put(tr.ptl(k, l));
        for (const Mat* m : {&tr.uprim, &tr.umpc, &tr.dphat})
            for (int i : order) put((*m)(k, i));
        put(tr.eps_f_max(k));
        put(tr.eps_u_max(k));
        os << line << "\n";
    }
}

json metrics_to_json(const SimulationTrace& tr, const Metrics& m) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    json regions = json::object();
    for (std::size_t i = 0; i < tr.region_names.size(); ++i) {
        regions[tr.region_names[i]] = {{"nadir_hz", m.nadir_hz(i)},
                                       {"ufls_crossed", static_cast<bool>(m.ufls_crossed[i])},
                                       {"first_ufls_t_s", num(m.first_ufls_t(i))},
                                       {"settling_t_s", num(m.settling_t(i))},
                                       {"max_rocof_hz_s", m.max_rocof(i)},
                                       {"steady_df_hz", m.steady_df_hz(i)}};
    }
    json lines = json::object();
    for (std::size_t l = 0; l < tr.line_names.size(); ++l) lines[tr.line_names[l]] = {{"max_abs_ptl_pu", m.max_abs_ptl(l)}};
    double worst = 0;
    int infeasible = 0;
    for (const auto& s : tr.solves) {
        worst = std::max(worst, s.hard_violation);
        if (s.status != QpStatus::Optimal) ++infeasible;
    }
    return {{"regions", regions},
            {"lines", lines},
            {"ufls_crossed", m.any_ufls()},
            {"settling_all_t_s", num(m.settling_all)},
            {"mpc", {{"solves", tr.solves.size()}, {"alarms", tr.alarms}, {"non_optimal", infeasible}, {"worst_hard_violation", worst}}}};
}

void emit_report(const SimulationTrace& tr, const Metrics& m, const Scenario& s, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create '" + out_dir + "': " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + (fs::path(out_dir) / name).string() + "'");
        return f;
    };
    {
        auto f = open("trace.csv");
        write_trace_csv(tr, f);
        if (!f) throw std::runtime_error("write failed for trace.csv");
    }
    {
        auto f = open("metrics.json");
        f << metrics_to_json(tr, m).dump(2) << "\n";
    }
    {
        json man = {{"version", GRIDFREQ_VERSION},
                    {"scenario", scenario_to_json(s)},
                    {"seeds", {{"observer_dphat0", region_map(s.observer.seed, s.grid)}, {"rng", nullptr}}},
                    {"files", {"trace.csv", "metrics.json"}},
                    {"trace_columns", trace_columns(tr)},
                    {"samples", tr.samples()}};
        auto f = open("manifest.json");
        f << man.dump(2) << "\n";
    }
}

}  // namespace gridfreq
