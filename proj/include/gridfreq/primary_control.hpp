#pragma once

#include "gridfreq/numerics.hpp"

#include <string>
#include <vector>

namespace gridfreq {

struct PrimaryParams {
    double kbar_d = 0.0;
    double h_c = 0.0;
    double d_c = 0.0;
    double gamma = 0.0;
    double t_d = 0.05;
    double t_c = 0.05;

    void validate() const;
};

struct PrimaryBounds {
    double kbar_lo = 0.0, kbar_hi = 30.0;
    double h_lo = 0.0, h_hi = 2.5;
    double d_lo = 0.0, d_hi = 1.0;
    double gamma_lo = 0.0, gamma_hi = 1.0;
};

struct PrimaryWeights {
    double mu1 = 1.0;
    double mu2 = 1.0;
    double mu3 = 1.0;
    double horizon = 20.0;
};

struct PrimaryDesignOptions {
    double dP = -0.02;
    double dt_sim = 0.01;
    // Frequency terms of the cost are scaled by this factor (f0 gives Hz and Hz/s).
    double freq_scale = 60.0;
    int starts = 64;
    double resolution = 1e-4;  // final step, as a fraction of each box edge
    int max_evals_per_start = 2000;
};

// F(s) = (1-g) K/(1+T_d s) + g (2H_c s + D_c)/(1+T_c s). State: [droop lag, vsm lag].
StateSpace primary_tf(const PrimaryParams& p);

// Isolated region with u = F(s) df entering as -lambda u.
// Input: disturbance (p.u.). Outputs: df, d(df)/dt, u_prim.
StateSpace closed_loop_region(const StateSpace& region, const PrimaryParams& p, double lambda);

// (1/T) int (mu1 df^2 + mu2 dfdot^2 + mu3 u^2) dt; +inf for an unstable loop.
double primary_cost(const StateSpace& closed_loop, double dP, const PrimaryWeights& w,
                    double dt_sim, double freq_scale);

struct PrimaryDesignResult {
    PrimaryParams params;
    double cost = 0.0;
    int evaluations = 0;
    int best_start = -1;
};

PrimaryDesignResult optimize_primary(const StateSpace& region, double lambda,
                                     const PrimaryWeights& w, const PrimaryBounds& b,
                                     const PrimaryParams& fixed_time_constants,
                                     const PrimaryDesignOptions& opt = {});

// Radical-inverse Halton point in [0,1)^dim.
std::vector<double> halton_point(int index, int dim);

}  // namespace gridfreq
