#pragma once

#include "gridfreq/sfr_model.hpp"

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace gridfreq {

struct BalancedRealization {
    Mat A, B, C, D;
    Vec hsv;        // descending, strictly positive
    Mat T, Tinv;    // x = T xb
    int original_order = 0;
};

// Square-root balancing. States with sigma < min_ratio * sigma_1 are discarded,
// which yields a minimal realization.
BalancedRealization balance(const StateSpace& m, double min_ratio = 1e-10);

double hsv_ratio(const Vec& hsv, int r);

struct Truncation {
    StateSpace model;
    double error_bound = 0.0;  // 2 * sum of neglected sigma
};

Truncation truncate(const BalancedRealization& bal, int r);

// Smallest order whose cumulative ratio reaches the threshold.
int order_for_ratio(const Vec& hsv, double threshold);

struct ReducedGridModel {
    StateSpace ss;  // C rows: N frequencies then L line flows
    Mat C1, C2;
    Mat Lambda;
    Vec region_bases;
    std::vector<std::string> region_names;
    std::vector<int> orders;
    std::vector<int> minimal_orders;
    std::vector<double> region_bounds;
    std::vector<Vec> region_hsv;
    double error_bound = 0.0;
    int n_regions = 0;
    int n_lines = 0;

    int r() const { return ss.nx(); }
    int minimal_total() const;
};

// Couples region models through the grid's tie-lines exactly as assemble_grid does.
ReducedGridModel assemble_reduced_grid(const std::vector<StateSpace>& regions, const GridModel& g);

struct ReductionOptions {
    std::optional<int> fixed_order;  // same order for every region
    double rho_threshold = 0.999;
    double min_ratio = 1e-10;
};

ReducedGridModel reduce_grid(const GridModel& g, const ReductionOptions& opt = {});

void discretize_reduced(const ReducedGridModel& g, double dt, Mat& Ad, Mat& Bd);

// Frequency response C (jwI - A)^-1 B + D.
Eigen::MatrixXcd freq_response(const StateSpace& m, double w);

// Largest spectral-norm gap between two systems over log-spaced frequencies.
double max_response_gap(const StateSpace& a, const StateSpace& b, double w_lo, double w_hi, int points);

// Text bundle with a dimension header and row-major values at 17 significant digits.
void write_reduced_bundle(const ReducedGridModel& g, const std::string& path);
ReducedGridModel read_reduced_bundle(const std::string& path);

void write_matrix(std::ostream& os, const std::string& name, const Mat& M);
Mat read_matrix(std::istream& is, const std::string& name);

}  // namespace gridfreq
