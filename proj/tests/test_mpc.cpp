#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridfreq/ksa_dataset.hpp"
#include "gridfreq/mpc.hpp"

#include <cmath>
#include <limits>

using namespace gridfreq;

namespace {

// dx/dt = -x + dP - u, frequency read directly from x
ReducedGridModel scalar_grid() {
    ReducedGridModel g;
    g.ss.A = Mat::Constant(1, 1, -1.0);
    g.ss.B = Mat::Constant(1, 1, 1.0);
    g.ss.C = Mat::Constant(1, 1, 1.0);
    g.ss.D = Mat::Zero(1, 1);
    g.Lambda = Mat::Identity(1, 1);
    g.n_regions = 1;
    g.n_lines = 0;
    g.C1 = g.ss.C;
    g.C2 = Mat(0, 1);
    return g;
}

MpcConfig scalar_config(int H, int h) {
    MpcConfig c;
    c.H = H;
    c.h = h;
    c.fill_defaults(1);
    c.eta_f = Vec::Constant(1, 50.0);
    c.eta_u = Vec::Constant(1, 0.01);
    return c;
}

std::vector<PrimaryParams> ksa_primary() {
    PrimaryParams p;
    p.kbar_d = 30.0;
    return std::vector<PrimaryParams>(4, p);
}

ReducedGridModel ksa_reduced() {
    GridModel full = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    return reduce_grid(full, opt);
}

// Direct rollout of the scalar toy (primary off) for given increments.
struct ToyEval {
    double cost = std::numeric_limits<double>::infinity();
    bool feasible = false;
};

ToyEval toy_eval(const PredictionModel& pm, const MpcConfig& c, double x0, double dP, double u0,
                 const std::vector<double>& du) {
    const double a = pm.Ad(0, 0), bp = pm.Bp(0, 0), bu = pm.Bu(0, 0);
    std::vector<double> f{x0};
    double x = x0, u = u0, cost = 0, eps_f = 0, eps_u = 0;
    for (int k = 0; k < c.H; ++k) {
        x = a * x + bp * dP + bu * u;
        f.push_back(x);
        const double hz = c.f0 * x;
        eps_f = std::max({eps_f, hz - c.df_hi, c.df_lo - hz});
        if (k < c.H - 1) {
            if (std::abs(du[k]) > c.du_max + 1e-12) return {};
            u += du[k];
            if (u > 1 - c.p_ibr_star(0) || u < -c.p_ibr_star(0)) return {};
            eps_u = std::max({eps_u, u - c.u_hi(0), c.u_lo(0) - u});
            cost += c.Q_diag(0) * x * x + c.R_diag(0) * du[k] * du[k];
        }
    }
    for (int k = 0; k + c.n_r <= c.H; ++k)
        if (std::abs(c.f0 / (c.n_r * c.dt) * (f[k + c.n_r] - f[k])) > c.rocof_max + 1e-12) return {};
    ToyEval e;
    e.feasible = true;
    e.cost = cost + c.eta_f(0) * eps_f + c.eta_u(0) * eps_u;
    return e;
}

}  // namespace

TEST_CASE("bilinear primary filter: pole and dc gain") {
    PrimaryParams p;
    p.kbar_d = 1.0;
    DiscretePrimaryFilter d = tustin_primary(p, 0.2);
    // pole of a first-order lag with T=0.05 under Tustin at 0.2 s: (1-2)/(1+2)
    Eigen::ComplexEigenSolver<Mat> es(d.A);
    bool found = false;
    for (int i = 0; i < 2; ++i) found |= std::abs(es.eigenvalues()(i) - std::complex<double>(-1.0 / 3.0, 0)) < 1e-12;
    CHECK(found);
    p.kbar_d = 12.0;
    p.h_c = 1.5;
    p.d_c = 0.4;
    p.gamma = 0.3;
    d = tustin_primary(p, 0.2);
    const double dc = (d.D + d.C * (Mat::Identity(2, 2) - d.A).inverse() * d.B)(0, 0);
    // continuous F(0) = (1-gamma) K + gamma D_c
    CHECK(dc == doctest::Approx(0.7 * 12.0 + 0.3 * 0.4).epsilon(1e-12));
}

TEST_CASE("zero state and zero disturbance give the zero plan") {
    ReducedGridModel g = scalar_grid();
    MpcConfig c = scalar_config(6, 3);
    PredictionModel pm = build_prediction_model(g, {PrimaryParams{}}, false, c);
    MpcSolution s = solve_horizon(pm, c, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Zero(2));
    REQUIRE(s.status == QpStatus::Optimal);
    for (const auto& u : s.u) CHECK(std::abs(u(0)) < 1e-9);
    CHECK(s.eps_f.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(s.objective) < 1e-9);
}

TEST_CASE("one step ahead: schedule slack against slew cost") {
    // H=2 leaves only du_1. X_1 does not depend on it, and with wide frequency limits the trade is
    // R du^2 + eta_u (u0 + du - u_hi)
    ReducedGridModel g = scalar_grid();
    MpcConfig c = scalar_config(2, 1);
    c.n_r = 1;
    // frequency and RoCoF limits wide enough to stay slack
    c.df_lo = -10.0;
    c.df_hi = 10.0;
    c.rocof_max = 100.0;
    c.u_hi = Vec::Constant(1, 0.005);
    c.u_lo = Vec::Constant(1, -0.005);
    c.eta_u = Vec::Constant(1, 0.001);
    PredictionModel pm = build_prediction_model(g, {PrimaryParams{}}, false, c);
    MpcSolution s = solve_horizon(pm, c, Vec::Zero(1), Vec::Zero(1), Vec::Constant(1, 0.01), Vec::Zero(2));
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(s.du[0](0) == doctest::Approx(-0.0005).epsilon(1e-6));
    CHECK(s.eps_u(0) == doctest::Approx(0.0045).epsilon(1e-6));
}

TEST_CASE("small horizon matches exhaustive search") {
    ReducedGridModel g = scalar_grid();
    MpcConfig c = scalar_config(3, 1);
    c.n_r = 2;
    PredictionModel pm = build_prediction_model(g, {PrimaryParams{}}, false, c);
    for (double dP : {-0.001, -0.0003, 0.0002}) {
        const double x0 = 0.5 * dP;
        MpcSolution s = solve_horizon(pm, c, Vec::Constant(1, x0), Vec::Constant(1, dP), Vec::Zero(1), Vec::Zero(2));
        REQUIRE(s.status == QpStatus::Optimal);
        ToyEval at = toy_eval(pm, c, x0, dP, 0.0, {s.du[0](0), s.du[1](0)});
        REQUIRE(at.feasible);
        CHECK(at.cost == doctest::Approx(s.objective).epsilon(1e-7));
        double best = std::numeric_limits<double>::infinity();
        const int n = 400;
        for (int i = 0; i <= n; ++i)
            for (int j = 0; j <= n; ++j) {
                double a = c.du_max * (2.0 * i / n - 1), b = c.du_max * (2.0 * j / n - 1);
                best = std::min(best, toy_eval(pm, c, x0, dP, 0.0, {a, b}).cost);
            }
        CHECK(s.objective <= best + 1e-9);
        CHECK(best - s.objective < 1e-6 * (1 + std::abs(best)));
    }
}

TEST_CASE("condensed prediction matches the recursion and respects hard limits") {
    ReducedGridModel g = ksa_reduced();
    MpcConfig c;
    c.fill_defaults(4);
    PredictionModel pm = build_prediction_model(g, ksa_primary(), true, c);
    const int nx = static_cast<int>(pm.Ad.rows());
    Vec x0 = Vec::Zero(g.r()), dP = Vec::Zero(4), u0 = Vec::Zero(4), z0 = Vec::Zero(nx - g.r());
    dP << -0.018, 0.0, 0.0, -0.001;
    MpcSolution s = solve_horizon(pm, c, x0, dP, u0, z0);
    REQUIRE(s.status == QpStatus::Optimal);
    Vec X(nx);
    X << x0, z0;
    Vec u = u0;
    for (int k = 0; k < c.H; ++k) {
        X = pm.Ad * X + pm.Bp * dP + pm.Bu * u;
        CHECK((X - s.x[k]).cwiseAbs().maxCoeff() < 1e-10);
        if (k < c.H - 1) {
            u = s.u[k];
            CHECK(s.du[k].cwiseAbs().maxCoeff() <= c.du_max + 1e-7);
            Vec mu = u + pm.Cnu * X;
            CHECK(mu.maxCoeff() <= 0.2 + 1e-7);
            CHECK(mu.minCoeff() >= -0.8 - 1e-7);
        }
        CHECK((pm.Ctl * X).cwiseAbs().maxCoeff() <= c.ptl_hi + 1e-7);
    }
    for (int k = 0; k + c.n_r <= c.H; ++k) {
        Vec prev = k == 0 ? Vec(pm.Cf.leftCols(g.r()) * x0) : Vec(pm.Cf * s.x[k - 1]);
        Vec r = c.f0 / (c.n_r * c.dt) * (pm.Cf * s.x[k + c.n_r - 1] - prev);
        CHECK(r.cwiseAbs().maxCoeff() <= c.rocof_max + 1e-7);
    }
    CHECK(s.hard_violation <= 1e-7);
}

TEST_CASE("first KSA trigger with the joint predictor") {
    ReducedGridModel g = ksa_reduced();
    MpcConfig c;
    c.fill_defaults(4);
    PredictionModel pm = build_prediction_model(g, ksa_primary(), true, c);
    Eigen::ComplexEigenSolver<Mat> es(pm.Ad);
    CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
    Vec dP(4);
    dP << -0.018, 0.0, 0.0, -0.001;
    MpcSolution s = solve_horizon(pm, c, Vec::Zero(g.r()), dP, Vec::Zero(4), Vec::Zero(8));
    CHECK(s.status == QpStatus::Optimal);
    CHECK(s.kkt_error <= 1e-7);
    CHECK(s.hard_violation <= 1e-7);
}

TEST_CASE("bilinear droop loop at the control step is unstable") {
    // K=30 through a Tustin filter sampled at 0.2 s overshoots the swing dynamics
    ReducedGridModel g = ksa_reduced();
    MpcConfig c;
    c.fill_defaults(4);
    c.prediction = PrimaryPrediction::Tustin;
    PredictionModel pm = build_prediction_model(g, ksa_primary(), true, c);
    Eigen::ComplexEigenSolver<Mat> es(pm.Ad);
    const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    MESSAGE("bilinear predictor spectral radius " << rho);
    CHECK(rho > 1.0);
    Vec dP(4);
    dP << -0.018, 0.0, 0.0, -0.001;
    MpcSolution s = solve_horizon(pm, c, Vec::Zero(g.r()), dP, Vec::Zero(4), Vec::Zero(8));
    CHECK(s.status == QpStatus::Infeasible);
    CHECK_FALSE(s.infeasible_class.empty());
    // the same predictor without primary action is the plain reduced model
    PredictionModel off = build_prediction_model(g, ksa_primary(), false, c);
    Eigen::ComplexEigenSolver<Mat> eo(off.Ad.topLeftCorner(g.r(), g.r()));
    CHECK(eo.eigenvalues().cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
}

TEST_CASE("infeasible horizon is classified") {
    ReducedGridModel g = scalar_grid();
    MpcConfig c = scalar_config(6, 2);
    c.n_r = 1;
    c.rocof_max = 1e-3;
    PredictionModel pm = build_prediction_model(g, {PrimaryParams{}}, false, c);
    MpcSolution s = solve_horizon(pm, c, Vec::Zero(1), Vec::Constant(1, -0.01), Vec::Zero(1), Vec::Zero(2));
    CHECK(s.status == QpStatus::Infeasible);
    CHECK(s.infeasible_class == "rocof");
}

TEST_CASE("controller timing") {
    ReducedGridModel g = scalar_grid();
    MpcConfig c = scalar_config(6, 3);
    c.first_command_delay_s = 1.0;
    PredictionModel pm = build_prediction_model(g, {PrimaryParams{}}, false, c);
    MpcController ctl(pm, c, {PrimaryParams{}}, false);
    CHECK_FALSE(ctl.due(0.99));
    CHECK(ctl.due(1.0));

    SUBCASE("quiescent") {
        for (int k = 0; k <= 300; ++k) {
            double t = k * 0.01;
            if (ctl.due(t)) ctl.trigger(t, Vec::Zero(1), Vec::Zero(1), Vec::Zero(2));
            CHECK(ctl.command(t).norm() == 0.0);
        }
        // triggers at 1.0, 1.6, 2.2, 2.8
        CHECK(ctl.solves() == 4);
        CHECK(ctl.alarms() == 0);
    }
    SUBCASE("piecewise constant on the step grid") {
        Vec last = Vec::Zero(1);
        int changes_off_grid = 0, changes = 0;
        for (int k = 0; k <= 300; ++k) {
            double t = k * 0.01;
            if (ctl.due(t)) ctl.trigger(t, Vec::Constant(1, -0.002), Vec::Constant(1, -0.005), Vec::Zero(2));
            Vec u = ctl.command(t);
            if (k > 100 && k < 120) CHECK(u.norm() == 0.0);  // u_0 holds for one step after the first solve
            if ((u - last).norm() > 0) {
                ++changes;
                if (k % 20 != 0) ++changes_off_grid;
            }
            last = u;
        }
        CHECK(changes > 0);
        CHECK(changes_off_grid == 0);
    }
}

TEST_CASE("configuration validation") {
    MpcConfig c;
    c.fill_defaults(4);
    CHECK_NOTHROW(c.validate(4));
    CHECK_THROWS(c.validate(3));
    c.h = c.H;
    CHECK_THROWS(c.validate(4));
    c.h = 10;
    c.df_lo = 0.01;
    CHECK_THROWS(c.validate(4));
}
