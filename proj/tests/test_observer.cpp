#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridfreq/ksa_dataset.hpp"
#include "gridfreq/observer.hpp"

#include <cmath>

using namespace gridfreq;

namespace {

ReducedGridModel scalar_reduced() {
    ReducedGridModel g;
    g.ss.A = Mat::Constant(1, 1, -1.0);
    g.ss.B = Mat::Constant(1, 1, 1.0);
    g.ss.C = Mat::Constant(1, 1, 1.0);
    g.ss.D = Mat::Zero(1, 1);
    g.Lambda = Mat::Zero(1, 1);
    g.n_regions = 1;
    g.n_lines = 0;
    g.C1 = g.ss.C;
    g.C2 = Mat(0, 1);
    return g;
}

ReducedGridModel ksa_reduced(GridModel& full) {
    full = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    return reduce_grid(full, opt);
}

struct Run {
    Mat dphat;  // rows: samples
    Vec t;
};

// Open-loop plant (no IBR action) with the filter running alongside at dt.
Run run_open_loop(const GridModel& plant, AugmentedFilter& f, const Vec& dP, const Vec& seed,
                  double t_end, double dt = 0.01) {
    prepare_filter(f, dt);
    Mat Ad, Bd;
    zoh_discretize(plant.ss.A, plant.ss.B, dt, Ad, Bd);
    const int steps = steps_for(t_end, dt);
    Vec x = Vec::Zero(plant.ss.nx());
    ObserverState s = initial_observer_state(f, seed);
    Run out;
    out.dphat.resize(steps + 1, dP.size());
    out.t = Vec::LinSpaced(steps + 1, 0, t_end);
    Vec u = Vec::Zero(dP.size());
    for (int k = 0; k <= steps; ++k) {
        out.dphat.row(k) = s.dphat.transpose();
        Vec y = plant.ss.C * x;
        s = step_filter(f, s, u, y, dt);
        x = Ad * x + Bd * dP;
    }
    return out;
}

}  // namespace

TEST_CASE("scalar augmented filter matches the hand solution") {
    // A=[[-1,1],[0,0]], C=[1,0], Q=I, R=1: entries (2,2) give b^2=1, (1,1) a^2+2a-3=0, (1,2) c=b+ab
    AugmentedFilter f = design_filter(scalar_reduced(), Mat::Identity(2, 2), Mat::Identity(1, 1));
    Mat expect(2, 2);
    expect << 1, 1, 1, 2;
    CHECK((f.Sigma - expect).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(f.M(0, 0) == doctest::Approx(1.0));
    CHECK(f.M(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("unexcited disturbance state is rejected") {
    Mat Q = Mat::Zero(2, 2);
    CHECK_THROWS(design_filter(scalar_reduced(), Q, Mat::Identity(1, 1)));
}

TEST_CASE("KSA filter design") {
    GridModel full;
    ReducedGridModel red = ksa_reduced(full);
    AugmentedFilter f = design_filter(red, 10 * Mat::Identity(20, 20), Mat::Identity(8, 8));
    CHECK(filter_are_residual(f.Abar, f.Cbar, f.Qw, f.Rv, f.Sigma) <= 1e-6);
    double a = spectral_abscissa(f.estimator_matrix());
    MESSAGE("slowest estimator eigenvalue real part " << a);
    CHECK(a < 0);
    CHECK((f.Sigma - f.Sigma.transpose()).norm() < 1e-9);
    Eigen::SelfAdjointEigenSolver<Mat> es(f.Sigma);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("zero innovation at equilibrium") {
    GridModel full;
    ReducedGridModel red = ksa_reduced(full);
    AugmentedFilter f = design_filter(red, 10 * Mat::Identity(20, 20), Mat::Identity(8, 8));
    prepare_filter(f, 0.01);
    ObserverState s = initial_observer_state(f, Vec::Zero(4));
    ObserverState n = step_filter(f, s, Vec::Zero(4), Vec::Zero(8), 0.01);
    CHECK(n.xhat.norm() == 0.0);
    CHECK(n.dphat.norm() == 0.0);
    CHECK_THROWS(step_filter(f, s, Vec::Zero(4), Vec::Zero(8), 0.02));
    auto [x0, dp] = sample_for_mpc(n);
    CHECK(x0.norm() == 0.0);
    CHECK(dp.norm() == 0.0);
}

TEST_CASE("estimates converge exactly when measurements come from the reduced model") {
    GridModel full;
    ReducedGridModel red = ksa_reduced(full);
    AugmentedFilter f = design_filter(red, 10 * Mat::Identity(20, 20), Mat::Identity(8, 8));
    GridModel as_plant = full;
    as_plant.ss = red.ss;
    Vec dP(4);
    dP << -0.02, 0.005, 0.0, -0.01;
    // slowest estimator pole is near -0.098 1/s, so 1e-6 is reached on a 200 s scale
    Run r = run_open_loop(as_plant, f, dP, Vec::Zero(4), 200.0);
    double e20 = (r.dphat.row(2000).transpose() - dP).cwiseAbs().maxCoeff();
    double e200 = (r.dphat.row(r.dphat.rows() - 1).transpose() - dP).cwiseAbs().maxCoeff();
    MESSAGE("matched-model estimate error at 20 s " << e20 << ", at 200 s " << e200);
    CHECK(e20 < 1e-3);
    CHECK(e200 < 1e-6);
}

TEST_CASE("estimates are linear in the disturbance") {
    GridModel full;
    ReducedGridModel red = ksa_reduced(full);
    AugmentedFilter f = design_filter(red, 10 * Mat::Identity(20, 20), Mat::Identity(8, 8));
    Vec a = Vec::Zero(4), b = Vec::Zero(4);
    a(0) = -0.02;
    b(3) = 0.01;
    Run ra = run_open_loop(full, f, a, Vec::Zero(4), 5.0);
    Run rb = run_open_loop(full, f, b, Vec::Zero(4), 5.0);
    Run rab = run_open_loop(full, f, a + b, Vec::Zero(4), 5.0);
    CHECK((rab.dphat - ra.dphat - rb.dphat).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("central disturbance estimate from the full plant") {
    GridModel full;
    ReducedGridModel red = ksa_reduced(full);
    AugmentedFilter f = design_filter(red, 10 * Mat::Identity(20, 20), Mat::Identity(8, 8));
    Vec dP = Vec::Zero(4);
    dP(0) = -0.02;
    Vec seed(4);
    seed << -0.018, 0, 0, -0.001;
    for (const Vec& s0 : {Vec(Vec::Zero(4)), seed}) {
        Run r = run_open_loop(full, f, dP, s0, 10.0);
        double e1 = std::abs(r.dphat(100, 0) - dP(0)) / 0.02;
        double e5 = std::abs(r.dphat(500, 0) - dP(0)) / 0.02;
        MESSAGE("seed " << s0.transpose() << ": relative central error at 5 s " << e5);
        CHECK(e5 < e1);
        if (s0.norm() > 0) CHECK(e5 < 0.01);
        else CHECK(e5 < 0.05);
        double prev = INFINITY;
        bool monotone = true;
        for (int k = 100; k < r.dphat.rows(); ++k) {
            double e = (r.dphat.row(k).transpose() - dP).norm();
            if (e > prev + 1e-12) monotone = false;
            prev = e;
        }
        CHECK(monotone);
    }
}
