#include "gridfreq/primary_control.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridfreq {

void PrimaryParams::validate() const {
    if (t_d <= 0 || t_c <= 0) throw std::invalid_argument("primary: converter time constants must be positive");
    if (gamma < 0 || gamma > 1) throw std::invalid_argument("primary: gamma outside [0,1]");
    if (kbar_d < 0 || h_c < 0 || d_c < 0) throw std::invalid_argument("primary: negative gain");
}

StateSpace primary_tf(const PrimaryParams& p) {
    p.validate();
    StateSpace f;
    f.A = Mat::Zero(2, 2);
    f.A(0, 0) = -1 / p.t_d;
    f.A(1, 1) = -1 / p.t_c;
    f.B = Mat(2, 1);
    f.B << 1 / p.t_d, 1 / p.t_c;
    // (2H s + D)/(1 + T s) = 2H/T + (D - 2H/T)/(1 + T s)
    f.C = Mat(1, 2);
    f.C << (1 - p.gamma) * p.kbar_d, p.gamma * (p.d_c - 2 * p.h_c / p.t_c);
    f.D = Mat::Constant(1, 1, p.gamma * 2 * p.h_c / p.t_c);
    f.state_labels = {"droop", "vsm"};
    return f;
}

StateSpace closed_loop_region(const StateSpace& region, const PrimaryParams& p, double lambda) {
    if (region.nu() != 1 || region.ny() != 1)
        throw std::invalid_argument("closed_loop_region: region model must be SISO");
    if (region.D.size() && region.D.norm() != 0)
        throw std::runtime_error("closed_loop_region: algebraic loop (plant has feedthrough)");
    StateSpace f = primary_tf(p);
    const int n = region.nx();
    StateSpace cl;
    cl.A = Mat::Zero(n + 2, n + 2);
    cl.A.topLeftCorner(n, n) = region.A - lambda * region.B * f.D * region.C;
    cl.A.topRightCorner(n, 2) = -lambda * region.B * f.C;
    cl.A.bottomLeftCorner(2, n) = f.B * region.C;
    cl.A.bottomRightCorner(2, 2) = f.A;
    cl.B = Mat::Zero(n + 2, 1);
    cl.B.topRows(n) = region.B;
    Mat cy = Mat::Zero(1, n + 2);
    cy.leftCols(n) = region.C;
    Mat cu(1, n + 2);
    cu << f.D * region.C, f.C;
    cl.C = Mat(3, n + 2);
    cl.C << cy, cy * cl.A, cu;
    cl.D = Mat::Zero(3, 1);
    cl.D(1, 0) = (cy * cl.B)(0, 0);
    return cl;
}

double primary_cost(const StateSpace& cl, double dP, const PrimaryWeights& w, double dt_sim,
                    double freq_scale) {
    if (w.horizon <= 0) throw std::invalid_argument("primary_cost: horizon must be positive");
    if (dP == 0.0) return 0.0;
    if (!is_hurwitz(cl.A)) return std::numeric_limits<double>::infinity();
    Mat Ad, Bd;
    zoh_discretize(cl.A, cl.B, dt_sim, Ad, Bd);
    const int steps = steps_for(w.horizon, dt_sim);
    Vec x = Vec::Zero(cl.nx());
    Vec b = Bd.col(0) * dP;
    Vec dfeed = cl.D.col(0) * dP;
    double acc = 0.0;
    for (int k = 0; k <= steps; ++k) {
        Vec y = cl.C * x + dfeed;
        const double f = y(0) * freq_scale, fd = y(1) * freq_scale, u = y(2);
        const double v = w.mu1 * f * f + w.mu2 * fd * fd + w.mu3 * u * u;
        acc += (k == 0 || k == steps) ? 0.5 * v : v;
        x = Ad * x + b;
    }
    return acc * dt_sim / w.horizon;
}

std::vector<double> halton_point(int index, int dim) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    if (dim > 8) throw std::invalid_argument("halton_point: dimension too large");
    std::vector<double> p(dim);
    for (int d = 0; d < dim; ++d) {
        double f = 1.0, r = 0.0;
        int i = index + 1;  // skip the origin
        while (i > 0) {
            f /= primes[d];
            r += f * (i % primes[d]);
            i /= primes[d];
        }
        p[d] = r;
    }
    return p;
}

namespace {

using Point = std::array<double, 4>;  // kbar, h_c, d_c, gamma

PrimaryParams to_params(const Point& x, const PrimaryParams& tc) {
    PrimaryParams p = tc;
    p.kbar_d = x[0];
    p.h_c = x[1];
    p.d_c = x[2];
    p.gamma = x[3];
    return p;
}

}  // namespace

PrimaryDesignResult optimize_primary(const StateSpace& region, double lambda,
                                     const PrimaryWeights& w, const PrimaryBounds& b,
                                     const PrimaryParams& tc, const PrimaryDesignOptions& opt) {
    const Point lo{b.kbar_lo, b.h_lo, b.d_lo, b.gamma_lo};
    const Point hi{b.kbar_hi, b.h_hi, b.d_hi, b.gamma_hi};
    for (int d = 0; d < 4; ++d)
        if (!(lo[d] <= hi[d])) throw std::invalid_argument("optimize_primary: empty bound interval");
    if (lo[3] < 0 || hi[3] > 1) throw std::invalid_argument("optimize_primary: gamma bounds outside [0,1]");

    PrimaryDesignResult res;
    auto eval = [&](const Point& x) {
        ++res.evaluations;
        return primary_cost(closed_loop_region(region, to_params(x, tc), lambda), opt.dP, w,
                            opt.dt_sim, opt.freq_scale);
    };
    auto clamp = [&](Point x) {
        for (int d = 0; d < 4; ++d) x[d] = std::clamp(x[d], lo[d], hi[d]);
        return x;
    };

    double best = std::numeric_limits<double>::infinity();
    Point best_x = lo;
    // start 0 is the lower corner, so degenerate objectives return the lower bounds
    for (int s = 0; s <= opt.starts; ++s) {
        Point x = lo;
        if (s > 0) {
            auto h = halton_point(s - 1, 4);
            for (int d = 0; d < 4; ++d) x[d] = lo[d] + h[d] * (hi[d] - lo[d]);
        }
        double fx = eval(x);
        double step = 0.25;
        int evals = 0;
        while (step >= opt.resolution && evals < opt.max_evals_per_start) {
            bool improved = false;
            for (int d = 0; d < 4 && !improved; ++d) {
                const double span = hi[d] - lo[d];
                if (span == 0) continue;
                for (double sgn : {1.0, -1.0}) {
                    Point y = x;
                    y[d] += sgn * step * span;
                    y = clamp(y);
                    if (y == x) continue;
                    double fy = eval(y);
                    ++evals;
                    if (fy < fx) {
                        x = y;
                        fx = fy;
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        if (fx < best) {
            best = fx;
            best_x = x;
            res.best_start = s;
        }
    }
    if (!std::isfinite(best)) throw std::runtime_error("optimize_primary: every start gives an unstable closed loop");
    res.params = to_params(best_x, tc);
    res.cost = best;
    return res;
}

}  // namespace gridfreq
