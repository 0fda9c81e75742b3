#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gridfreq/ksa_dataset.hpp"
#include "gridfreq/sfr_model.hpp"

#include <cmath>

using namespace gridfreq;

namespace {

const RegionSpec& region(const GridConfig& g, const std::string& n) {
    for (const auto& r : g.regions)
        if (r.name == n) return r;
    throw std::runtime_error("missing region");
}

Vec zero_input(double) { return Vec::Zero(4); }

}  // namespace

TEST_CASE("equivalent inertia and damping from the 2030 mix") {
    GridConfig g = ksa_grid_2030();
    CHECK(equivalent_inertia(region(g, "eastern")) == doctest::Approx(3.69).epsilon(0.005 / 3.69));
    CHECK(equivalent_inertia(region(g, "central")) == doctest::Approx(0.82).epsilon(0.005 / 0.82));
    // arithmetic on the tabulated capacities: 5.1 GW synchronous of 31.1 GW
    CHECK(equivalent_damping(region(g, "central")) == doctest::Approx(5.1 / 31.1).epsilon(1e-12));

    RegionSpec all5;
    all5.name = "x";
    all5.units = {GeneratorUnit{UnitKind::Gas, 2.0}, GeneratorUnit{UnitKind::Steam, 3.0}};
    all5.total_gw = 5.0;
    CHECK(equivalent_inertia(all5) == 5.0);
    CHECK(equivalent_damping(all5) == 1.0);

    RegionSpec empty;
    empty.name = "e";
    empty.renewable_gw = 1.0;
    empty.total_gw = 1.0;
    CHECK(equivalent_damping(empty) == 0.0);
}

TEST_CASE("splitting a unit leaves the equivalents unchanged") {
    GridConfig g = ksa_grid_2030();
    RegionSpec r = region(g, "western");
    RegionSpec s = r;
    GeneratorUnit half = s.units[0];
    half.rated_gw /= 2;
    s.units[0] = half;
    s.units.push_back(half);
    CHECK(equivalent_inertia(s) == doctest::Approx(equivalent_inertia(r)).epsilon(1e-14));
    CHECK(equivalent_damping(s) == doctest::Approx(equivalent_damping(r)).epsilon(1e-14));
}

TEST_CASE("capacity weighted aggregation") {
    RegionSpec r;
    r.name = "w";
    GeneratorUnit a{UnitKind::Steam, 1.0}, b{UnitKind::Steam, 3.0};
    a.steam.T_CH = 0.2;
    b.steam.T_CH = 0.4;
    r.units = {a, b};
    r.total_gw = 4.0;
    AsmAggregate agg = asm_aggregate(r, AsmBlock::Steam);
    CHECK(agg.steam.T_CH == doctest::Approx(0.35).epsilon(1e-14));
    CHECK(agg.kappa == doctest::Approx(1.0));

    r.units = {a};
    r.total_gw = 1.0;
    CHECK(asm_aggregate(r, AsmBlock::Steam).steam.T_CH == doctest::Approx(0.2));
    r.units = {a, a};
    r.total_gw = 2.0;
    CHECK(asm_aggregate(r, AsmBlock::Steam).steam.T_CH == doctest::Approx(0.2));
    CHECK_THROWS(asm_aggregate(r, AsmBlock::Gas));
}

TEST_CASE("region models") {
    GridConfig g = ksa_grid_2030();
    StateSpace c = build_region_model(region(g, "central"));
    CHECK(c.nx() == 9);
    CHECK(build_region_model(region(g, "southern")).nx() == 5);
    CHECK(build_region_model(region(g, "eastern")).nx() == 12);
    double H = equivalent_inertia(region(g, "central"));
    double D = equivalent_damping(region(g, "central"));
    CHECK(c.A(0, 0) == doctest::Approx(-D / (2 * H)));
    CHECK(c.B(0, 0) == doctest::Approx(1 / (2 * H)));
    CHECK(c.state_labels[0] == "central.freq");
    CHECK(c.state_labels[4] == "central.gas.discharge");
    CHECK(c.state_labels[5] == "central.ccgt.command");

    RegionSpec bad = region(g, "central");
    bad.total_gw += 1.0;
    CHECK_THROWS(build_region_model(bad));
}

TEST_CASE("governor blocks obey the droop law at steady state") {
    GridConfig g = ksa_grid_2030();
    for (const auto& r : g.regions) {
        StateSpace m = build_region_model(r);
        const int n = m.nx();
        const double H = equivalent_inertia(r);
        // TG subsystem: input is the frequency state, output is the mechanical power term in row 0
        Mat Atg = m.A.bottomRightCorner(n - 1, n - 1);
        Vec btg = m.A.col(0).tail(n - 1);
        Vec ctg = m.A.row(0).tail(n - 1).transpose() * (2 * H);
        double dc = -ctg.dot(Atg.fullPivLu().solve(btg));
        double expect = 0;
        for (const auto& u : r.units) expect -= (u.rated_gw / r.total_gw) / (u.kind == UnitKind::Steam ? u.steam.R : u.gas.R);
        CHECK(dc == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("KSA grid assembly") {
    GridModel g = ksa_grid_2030().build();
    CHECK(g.ss.nx() == 42);
    CHECK(g.ss.state_labels[0] == "central.freq");
    CHECK(g.ss.state_labels[9] == "eastern.freq");
    CHECK(g.ss.state_labels[21] == "southern.freq");
    CHECK(g.ss.state_labels[26] == "western.freq");
    CHECK(g.ss.state_labels[38] == "tie.central-eastern");
    CHECK(g.ss.state_labels[39] == "tie.central-southern");
    CHECK(g.ss.state_labels[40] == "tie.central-western");
    CHECK(g.ss.state_labels[41] == "tie.southern-western");
    CHECK(g.ss.C.rows() == 8);
    CHECK(g.Lambda(3, 3) == doctest::Approx(33.0 / 47.7));

    // The C-S-W-C loop leaves one circulating-flow mode at the origin; everything else decays.
    Eigen::EigenSolver<Mat> es(g.ss.A, false);
    int at_origin = 0;
    for (int i = 0; i < 42; ++i) {
        auto ev = es.eigenvalues()(i);
        if (std::abs(ev) < 1e-9) ++at_origin;
        else CHECK(ev.real() < 0);
    }
    CHECK(at_origin == 1);

    GridConfig dup = ksa_grid_2030();
    dup.lines.push_back({"eastern", "central", 1.0});
    CHECK_THROWS(dup.build());
    GridConfig dangling = ksa_grid_2030();
    dangling.lines.push_back({"central", "northern", 1.0});
    CHECK_THROWS(dangling.build());
}

TEST_CASE("single region without lines equals the region model") {
    GridConfig g = ksa_grid_2030();
    GridModel gm = assemble_grid({region(g, "eastern")}, {});
    StateSpace m = build_region_model(region(g, "eastern"));
    CHECK((gm.ss.A - m.A).norm() == 0.0);
    CHECK((gm.ss.B - m.B).norm() == 0.0);
}

TEST_CASE("identical regions with identical disturbances exchange no power") {
    GridConfig g = ksa_grid_2030();
    RegionSpec a = region(g, "eastern"), b = a;
    a.name = "a";
    b.name = "b";
    GridModel gm = assemble_grid({a, b}, {{"a", "b", 2.0, 2.0}});
    Vec dP(2);
    dP << -0.01, -0.01;
    auto tr = simulate_open_loop(gm, dP, [](double) { return Vec::Zero(2); }, 10.0, 0.01);
    CHECK(tr.x.col(gm.line_offset).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("line states conserve power") {
    GridModel g = ksa_grid_2030().build();
    Vec dP = Vec::Zero(4);
    dP(0) = -0.02;
    auto tr = simulate_open_loop(g, dP, zero_input, 10.0, 0.01);
    for (int k = 0; k < tr.x.rows(); k += 50)
        CHECK(std::abs(line_power_balance(g, tr.x.row(k).transpose())) < 1e-9);
}

TEST_CASE("uncontrolled 2030 grid crosses UFLS, pre-RES grid does not") {
    Vec dP = Vec::Zero(4);
    dP(0) = -0.02;
    auto now = simulate_open_loop(ksa_grid_2030().build(), dP, zero_input, 20.0, 0.01);
    auto pre = simulate_open_loop(ksa_grid_pre_res().build(), dP, zero_input, 20.0, 0.01);
    CHECK(now.df_hz().col(0).minCoeff() < -0.15);
    CHECK(pre.df_hz().minCoeff() > -0.15);

    auto zero = simulate_open_loop(ksa_grid_2030().build(), Vec::Zero(4), zero_input, 2.0, 0.01);
    CHECK(zero.x.norm() == 0.0);
}

TEST_CASE("state count formula") {
    GridConfig g = ksa_grid_pre_res();
    GridModel gm = g.build();
    int n = gm.n_lines();
    for (const auto& r : g.regions)
        n += 1 + 3 * has_block(r, AsmBlock::Steam) + 4 * has_block(r, AsmBlock::Gas) + 4 * has_block(r, AsmBlock::Ccgt);
    CHECK(gm.ss.nx() == n);
}
