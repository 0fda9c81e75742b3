#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridfreq/ksa_dataset.hpp"
#include "gridfreq/model_reduction.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace gridfreq;

namespace {

StateSpace ss(const Mat& A, const Mat& B, const Mat& C) {
    StateSpace m;
    m.A = A;
    m.B = B;
    m.C = C;
    m.D = Mat::Zero(C.rows(), B.cols());
    return m;
}

}  // namespace

TEST_CASE("balancing a balanced system is a signed identity") {
    Mat A(2, 2);
    A << -1.0, 0.4, -0.3, -2.0;
    Mat B(2, 1), C(1, 2);
    B << 1.0, 0.5;
    C << 0.7, -0.2;
    BalancedRealization b1 = balance(ss(A, B, C));
    BalancedRealization b2 = balance(ss(b1.A, b1.B, b1.C));
    CHECK((b1.hsv - b2.hsv).norm() < 1e-12);
    Mat absT = b2.T.cwiseAbs();
    CHECK((absT - Mat::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("balanced gramians are equal and diagonal") {
    GridModel g = ksa_grid_2030().build();
    for (const auto& r : g.regions) {
        BalancedRealization b = balance(build_region_model(r));
        Mat Wc = solve_lyapunov(b.A, b.B * b.B.transpose());
        Mat Wo = solve_lyapunov(b.A.transpose(), b.C.transpose() * b.C);
        Mat S = b.hsv.asDiagonal();
        CHECK((Wc - S).cwiseAbs().maxCoeff() <= 1e-6 * b.hsv(0));
        CHECK((Wo - S).cwiseAbs().maxCoeff() <= 1e-6 * b.hsv(0));
        for (int i = 1; i < b.hsv.size(); ++i) CHECK(b.hsv(i) <= b.hsv(i - 1));
    }
}

TEST_CASE("minimality removes a cancelled mode") {
    // 1/(s+1) carried with an extra uncontrollable lag at -1 (identical pole)
    Mat A(2, 2);
    A << -1, 0, 0, -1;
    Mat B(2, 1), C(1, 2);
    B << 1, 0;
    C << 1, 1;
    StateSpace m = ss(A, B, C);
    BalancedRealization b = balance(m);
    CHECK(b.hsv.size() == 1);
    StateSpace red = ss(b.A, b.B, b.C);
    CHECK(max_response_gap(m, red, 1e-3, 1e3, 50) < 1e-9);
}

TEST_CASE("hankel ratio and truncation bound arithmetic") {
    Vec s(2);
    s << 3, 1;
    CHECK(hsv_ratio(s, 1) == doctest::Approx(0.75));
    CHECK(hsv_ratio(s, 2) == 1.0);
    CHECK_THROWS(hsv_ratio(Vec(), 1));

    BalancedRealization b;
    b.hsv = Vec(3);
    b.hsv << 3, 1, 0.1;
    b.A = -Mat::Identity(3, 3);
    b.B = Mat::Ones(3, 1);
    b.C = Mat::Ones(1, 3);
    b.D = Mat::Zero(1, 1);
    CHECK(truncate(b, 1).error_bound == doctest::Approx(2.2));
    Truncation full = truncate(b, 3);
    CHECK(full.error_bound == 0.0);
    CHECK((full.model.A - b.A).norm() == 0.0);
}

TEST_CASE("KSA minimal orders and energy capture") {
    GridModel g = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    ReducedGridModel red = reduce_grid(g, opt);
    CHECK(red.minimal_total() == 28);
    CHECK(red.r() == 16);
    CHECK(red.C1.rows() == 4);
    CHECK(red.C2.rows() == 4);
    for (int i = 0; i < 4; ++i) {
        double rho = hsv_ratio(red.region_hsv[i], 3);
        MESSAGE(red.region_names[i] << " minimal order " << red.minimal_orders[i] << " rho(3) " << rho);
        CHECK(rho >= 0.999);
    }
}

TEST_CASE("truncation error respects the bound over a frequency sweep") {
    GridModel g = ksa_grid_2030().build();
    for (const auto& r : g.regions) {
        StateSpace m = build_region_model(r);
        BalancedRealization b = balance(m);
        for (int k = 1; k < b.hsv.size(); ++k) {
            Truncation t = truncate(b, k);
            CHECK(max_response_gap(m, t.model, 1e-3, 1e3, 200) <= t.error_bound + 1e-8);
        }
    }
}

TEST_CASE("reduced assembly with full region models reproduces the grid") {
    GridModel g = ksa_grid_2030().build();
    std::vector<StateSpace> parts;
    for (const auto& r : g.regions) parts.push_back(build_region_model(r));
    ReducedGridModel full = assemble_reduced_grid(parts, g);
    CHECK((full.ss.A - g.ss.A).norm() == 0.0);
    CHECK((full.ss.B - g.ss.B).norm() == 0.0);
    CHECK((full.ss.C - g.ss.C).norm() == 0.0);
}

TEST_CASE("reduced grid step response tracks the full model") {
    GridModel g = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    ReducedGridModel red = reduce_grid(g, opt);
    Vec dP = Vec::Zero(4);
    dP(0) = -0.02;
    auto u = [&](double) { return dP; };
    Mat Xf = integrate_lti(g.ss.A, g.ss.B, u, Vec::Zero(42), 0.01, 20.0);
    Mat Xr = integrate_lti(red.ss.A, red.ss.B, u, Vec::Zero(16), 0.01, 20.0);
    double gap = ((g.ss.C * Xf) - (red.ss.C * Xr)).topRows(4).cwiseAbs().maxCoeff();
    MESSAGE("step gap " << gap << " p.u., bound x |dP| " << red.error_bound * 0.02);
    CHECK(gap <= red.error_bound * 0.02);
}

TEST_CASE("reduced discretization keeps only the circulating-flow mode on the unit circle") {
    GridModel g = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    ReducedGridModel red = reduce_grid(g, opt);
    Mat Ad, Bd;
    discretize_reduced(red, 0.2, Ad, Bd);
    Eigen::EigenSolver<Mat> es(Ad, false);
    int on_circle = 0;
    for (int i = 0; i < Ad.rows(); ++i) {
        double r = std::abs(es.eigenvalues()(i));
        if (std::abs(r - 1.0) < 1e-9) ++on_circle;
        else CHECK(r < 1.0);
    }
    CHECK(on_circle == 1);
    CHECK_THROWS(discretize_reduced(red, 0.0, Ad, Bd));
}

TEST_CASE("bundle round trip") {
    GridModel g = ksa_grid_2030().build();
    ReductionOptions opt;
    opt.fixed_order = 3;
    ReducedGridModel red = reduce_grid(g, opt);
    const std::string path = "test_reduced_bundle.txt";
    write_reduced_bundle(red, path);
    ReducedGridModel back = read_reduced_bundle(path);
    CHECK((back.ss.A - red.ss.A).norm() == 0.0);
    CHECK((back.ss.B - red.ss.B).norm() == 0.0);
    CHECK((back.ss.C - red.ss.C).norm() == 0.0);
    CHECK(back.orders == red.orders);
    CHECK(back.region_names == red.region_names);
    std::remove(path.c_str());
}
