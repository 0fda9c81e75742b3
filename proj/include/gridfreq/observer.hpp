#pragma once

#include "gridfreq/model_reduction.hpp"

#include <utility>

namespace gridfreq {

// Kalman-Bucy filter on the reduced model augmented with constant disturbance states.
struct AugmentedFilter {
    Mat Abar, Cbar, M, Sigma, Qw, Rv;
    Mat Bu;  // [-B Lambda; 0], applied IBR input
    int r = 0;
    int n_regions = 0;

    // ZOH of the filter ODE with inputs (u, y), cached for one step size.
    double dt = 0.0;
    Mat Ad, Bd;

    Mat estimator_matrix() const { return Abar - M * Cbar; }
};

AugmentedFilter design_filter(const ReducedGridModel& g, const Mat& Qw, const Mat& Rv);

// Precomputes the exact discretization used by step_filter.
void prepare_filter(AugmentedFilter& f, double dt_sim);

struct ObserverState {
    Vec xhat;
    Vec dphat;
};

ObserverState initial_observer_state(const AugmentedFilter& f, const Vec& dphat0);

ObserverState step_filter(const AugmentedFilter& f, const ObserverState& s, const Vec& u,
                          const Vec& y, double dt_sim);

std::pair<Vec, Vec> sample_for_mpc(const ObserverState& s);

}  // namespace gridfreq
