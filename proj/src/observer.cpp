#include "gridfreq/observer.hpp"

#include <cmath>
#include <stdexcept>

namespace gridfreq {

AugmentedFilter design_filter(const ReducedGridModel& g, const Mat& Qw, const Mat& Rv) {
    const int r = g.r(), N = g.n_regions, p = static_cast<int>(g.ss.C.rows());
    if (Qw.rows() != r + N || Qw.cols() != r + N)
        throw std::invalid_argument("design_filter: Q_omega must be (r+N)x(r+N)");
    if (Rv.rows() != p || Rv.cols() != p)
        throw std::invalid_argument("design_filter: R_nu must match the output count");
    AugmentedFilter f;
    f.r = r;
    f.n_regions = N;
    f.Qw = Qw;
    f.Rv = Rv;
    f.Abar = Mat::Zero(r + N, r + N);
    f.Abar.topLeftCorner(r, r) = g.ss.A;
    f.Abar.topRightCorner(r, N) = g.ss.B;
    f.Cbar = Mat::Zero(p, r + N);
    f.Cbar.leftCols(r) = g.ss.C;
    f.Bu = Mat::Zero(r + N, N);
    f.Bu.topRows(r) = -g.ss.B * g.Lambda;
    f.Sigma = solve_filter_are(f.Abar, f.Cbar, Qw, Rv);
    f.M = f.Sigma * f.Cbar.transpose() * Rv.llt().solve(Mat::Identity(p, p));
    if (!is_hurwitz(f.estimator_matrix()))
        throw std::runtime_error("design_filter: estimator matrix is not Hurwitz");
    return f;
}

void prepare_filter(AugmentedFilter& f, double dt_sim) {
    Mat Bin(f.Abar.rows(), f.Bu.cols() + f.M.cols());
    Bin << f.Bu, f.M;
    zoh_discretize(f.estimator_matrix(), Bin, dt_sim, f.Ad, f.Bd);
    f.dt = dt_sim;
}

ObserverState initial_observer_state(const AugmentedFilter& f, const Vec& dphat0) {
    if (dphat0.size() != f.n_regions) throw std::invalid_argument("observer seed size mismatch");
    return {Vec::Zero(f.r), dphat0};
}

ObserverState step_filter(const AugmentedFilter& f, const ObserverState& s, const Vec& u,
                          const Vec& y, double dt_sim) {
    if (f.dt <= 0 || std::abs(f.dt - dt_sim) > 1e-12)
        throw std::invalid_argument("step_filter: filter prepared for a different step");
    if (u.size() != f.n_regions || y.size() != f.M.cols() || s.xhat.size() != f.r ||
        s.dphat.size() != f.n_regions)
        throw std::invalid_argument("step_filter: dimension mismatch");
    Vec xi(f.r + f.n_regions), in(u.size() + y.size());
    xi << s.xhat, s.dphat;
    in << u, y;
    Vec nx = f.Ad * xi + f.Bd * in;
    return {nx.head(f.r), nx.tail(f.n_regions)};
}

std::pair<Vec, Vec> sample_for_mpc(const ObserverState& s) { return {s.xhat, s.dphat}; }

}  // namespace gridfreq
