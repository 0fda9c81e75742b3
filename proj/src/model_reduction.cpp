#include "gridfreq/model_reduction.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gridfreq {

namespace {

// Symmetric PSD factor L with W = L L^T, negative eigenvalues clipped to zero.
Mat psd_factor(const Mat& W) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (W + W.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace

BalancedRealization balance(const StateSpace& m, double min_ratio) {
    if (!is_hurwitz(m.A)) throw std::runtime_error("balance: model is not asymptotically stable");
    Mat Wc = solve_lyapunov(m.A, m.B * m.B.transpose());
    Mat Wo = solve_lyapunov(m.A.transpose(), m.C.transpose() * m.C);
    Mat Lc = psd_factor(Wc), Lo = psd_factor(Wo);
    Eigen::JacobiSVD<Mat> svd(Lo.transpose() * Lc, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec s = svd.singularValues();
    int k = 0;
    while (k < s.size() && s(k) > min_ratio * s(0)) ++k;
    if (k == 0) throw std::runtime_error("balance: zero transfer function");
    Vec isq = s.head(k).cwiseSqrt().cwiseInverse();
    BalancedRealization b;
    b.original_order = m.nx();
    b.hsv = s.head(k);
    b.T = Lc * svd.matrixV().leftCols(k) * isq.asDiagonal();
    b.Tinv = isq.asDiagonal() * svd.matrixU().leftCols(k).transpose() * Lo.transpose();
    b.A = b.Tinv * m.A * b.T;
    b.B = b.Tinv * m.B;
    b.C = m.C * b.T;
    b.D = m.D.size() ? m.D : Mat::Zero(m.ny(), m.nu());
    return b;
}

double hsv_ratio(const Vec& hsv, int r) {
    if (hsv.size() == 0) throw std::invalid_argument("hsv_ratio: empty list");
    if (r < 1 || r > hsv.size()) throw std::invalid_argument("hsv_ratio: order out of range");
    if (r == hsv.size()) return 1.0;
    return hsv.head(r).sum() / hsv.sum();
}

int order_for_ratio(const Vec& hsv, double threshold) {
    for (int r = 1; r <= hsv.size(); ++r)
        if (hsv_ratio(hsv, r) >= threshold) return r;
    return static_cast<int>(hsv.size());
}

Truncation truncate(const BalancedRealization& bal, int r) {
    const int n = static_cast<int>(bal.hsv.size());
    if (r < 1 || r > n) throw std::invalid_argument("truncate: order out of range");
    Truncation t;
    t.model.A = bal.A.topLeftCorner(r, r);
    t.model.B = bal.B.topRows(r);
    t.model.C = bal.C.leftCols(r);
    t.model.D = bal.D;
    t.error_bound = 2.0 * bal.hsv.tail(n - r).sum();
    return t;
}

int ReducedGridModel::minimal_total() const {
    int s = n_lines;
    for (int k : minimal_orders) s += k;
    return s;
}

ReducedGridModel assemble_reduced_grid(const std::vector<StateSpace>& regions, const GridModel& g) {
    const int N = g.n_regions(), L = g.n_lines();
    if (static_cast<int>(regions.size()) != N)
        throw std::invalid_argument("assemble_reduced_grid: one model per region required");
    ReducedGridModel out;
    out.n_regions = N;
    out.n_lines = L;
    out.Lambda = g.Lambda;
    out.region_bases = g.region_bases();
    std::vector<int> off;
    int n = 0;
    for (int i = 0; i < N; ++i) {
        if (regions[i].nu() != 1 || regions[i].ny() != 1)
            throw std::invalid_argument("assemble_reduced_grid: region models must be SISO");
        off.push_back(n);
        out.orders.push_back(regions[i].nx());
        out.region_names.push_back(g.regions[i].name);
        n += regions[i].nx();
    }
    const int lo = n;
    n += L;
    StateSpace& m = out.ss;
    m.A = Mat::Zero(n, n);
    m.B = Mat::Zero(n, N);
    m.C = Mat::Zero(N + L, n);
    m.D = Mat::Zero(N + L, N);
    for (int i = 0; i < N; ++i) {
        const int ni = regions[i].nx();
        m.A.block(off[i], off[i], ni, ni) = regions[i].A;
        m.B.block(off[i], i, ni, 1) = regions[i].B;
        m.C.block(i, off[i], 1, ni) = regions[i].C;
    }
    for (int l = 0; l < L; ++l) {
        const auto& ln = g.lines[l];
        const int ia = g.region_index(ln.a), ib = g.region_index(ln.b), k = lo + l;
        const double Sa = g.regions[ia].total_gw, Sb = g.regions[ib].total_gw;
        const double w = 2 * std::numbers::pi * ln.t_sync;
        m.A.block(k, off[ia], 1, out.orders[ia]) += w * regions[ia].C;
        m.A.block(k, off[ib], 1, out.orders[ib]) -= w * regions[ib].C;
        m.A.block(off[ia], k, out.orders[ia], 1) -= regions[ia].B / Sa;
        m.A.block(off[ib], k, out.orders[ib], 1) += regions[ib].B / Sb;
        m.C(N + l, k) = 1 / Sa;
    }
    out.C1 = m.C.topRows(N);
    out.C2 = m.C.bottomRows(L);
    return out;
}

ReducedGridModel reduce_grid(const GridModel& g, const ReductionOptions& opt) {
    std::vector<StateSpace> parts;
    std::vector<int> minimal;
    std::vector<double> bounds;
    std::vector<Vec> hsvs;
    for (const auto& r : g.regions) {
        StateSpace m = build_region_model(r);
        BalancedRealization b = balance(m, opt.min_ratio);
        int k = opt.fixed_order ? std::min<int>(*opt.fixed_order, static_cast<int>(b.hsv.size()))
                                : order_for_ratio(b.hsv, opt.rho_threshold);
        Truncation t = truncate(b, k);
        parts.push_back(t.model);
        minimal.push_back(static_cast<int>(b.hsv.size()));
        bounds.push_back(t.error_bound);
        hsvs.push_back(b.hsv);
    }
    ReducedGridModel out = assemble_reduced_grid(parts, g);
    out.minimal_orders = minimal;
    out.region_bounds = bounds;
    out.region_hsv = hsvs;
    out.error_bound = 0;
    for (double b : bounds) out.error_bound += b;
    return out;
}

void discretize_reduced(const ReducedGridModel& g, double dt, Mat& Ad, Mat& Bd) {
    if (dt <= 0) throw std::invalid_argument("discretize_reduced: step must be positive");
    zoh_discretize(g.ss.A, g.ss.B, dt, Ad, Bd);
}

Eigen::MatrixXcd freq_response(const StateSpace& m, double w) {
    const int n = m.nx();
    Eigen::MatrixXcd M = std::complex<double>(0, w) * Eigen::MatrixXcd::Identity(n, n) - m.A.cast<std::complex<double>>();
    Eigen::MatrixXcd X = M.partialPivLu().solve(m.B.cast<std::complex<double>>());
    Eigen::MatrixXcd G = m.C.cast<std::complex<double>>() * X;
    if (m.D.size()) G += m.D.cast<std::complex<double>>();
    return G;
}

double max_response_gap(const StateSpace& a, const StateSpace& b, double w_lo, double w_hi, int points) {
    double gap = 0;
    for (int i = 0; i < points; ++i) {
        double w = w_lo * std::pow(w_hi / w_lo, points == 1 ? 0.0 : static_cast<double>(i) / (points - 1));
        Eigen::MatrixXcd d = freq_response(a, w) - freq_response(b, w);
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(d);
        gap = std::max(gap, svd.singularValues()(0));
    }
    return gap;
}

void write_matrix(std::ostream& os, const std::string& name, const Mat& M) {
    os << "matrix " << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
        os << '\n';
    }
}

Mat read_matrix(std::istream& is, const std::string& name) {
    std::string tag, got;
    Eigen::Index r = 0, c = 0;
    if (!(is >> tag >> got >> r >> c) || tag != "matrix" || got != name)
        throw std::runtime_error("bundle: expected matrix '" + name + "'");
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            if (!(is >> M(i, j))) throw std::runtime_error("bundle: truncated matrix '" + name + "'");
    return M;
}

void write_reduced_bundle(const ReducedGridModel& g, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    os << "reduced_grid r " << g.r() << " regions " << g.n_regions << " lines " << g.n_lines << '\n';
    os << "names";
    for (const auto& n : g.region_names) os << ' ' << n;
    os << "\norders";
    for (int k : g.orders) os << ' ' << k;
    os << "\nminimal";
    for (int k : g.minimal_orders) os << ' ' << k;
    os << std::setprecision(17) << "\nerror_bound " << g.error_bound << '\n';
    write_matrix(os, "A", g.ss.A);
    write_matrix(os, "B", g.ss.B);
    write_matrix(os, "C", g.ss.C);
    write_matrix(os, "Lambda", g.Lambda);
    write_matrix(os, "bases", g.region_bases.transpose());
}

ReducedGridModel read_reduced_bundle(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    ReducedGridModel g;
    std::string tag;
    int r = 0;
    is >> tag;
    if (tag != "reduced_grid") throw std::runtime_error("bundle: bad header in '" + path + "'");
    is >> tag >> r >> tag >> g.n_regions >> tag >> g.n_lines;
    is >> tag;
    for (int i = 0; i < g.n_regions; ++i) {
        std::string n;
        is >> n;
        g.region_names.push_back(n);
    }
    is >> tag;
    for (int i = 0; i < g.n_regions; ++i) {
        int k;
        is >> k;
        g.orders.push_back(k);
    }
    is >> tag;
    for (int i = 0; i < g.n_regions; ++i) {
        int k;
        is >> k;
        g.minimal_orders.push_back(k);
    }
    is >> tag >> g.error_bound;
    g.ss.A = read_matrix(is, "A");
    g.ss.B = read_matrix(is, "B");
    g.ss.C = read_matrix(is, "C");
    g.ss.D = Mat::Zero(g.ss.C.rows(), g.ss.B.cols());
    g.Lambda = read_matrix(is, "Lambda");
    g.region_bases = read_matrix(is, "bases").transpose();
    if (g.ss.A.rows() != r) throw std::runtime_error("bundle: dimension header mismatch");
    g.C1 = g.ss.C.topRows(g.n_regions);
    g.C2 = g.ss.C.bottomRows(g.n_lines);
    return g;
}

}  // namespace gridfreq
