#include "gridfreq/numerics.hpp"

#include <spdlog/spdlog.h>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridfreq {

namespace {

void require_square(const Mat& A, const char* what) {
    if (A.rows() != A.cols())
        throw std::invalid_argument(std::string(what) + ": matrix must be square");
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

Mat expm(const Mat& A, double t) {
    require_square(A, "expm");
    if (A.rows() == 0) return Mat(0, 0);
    Mat tA = A * t;
    return tA.exp();
}

void zoh_discretize(const Mat& A, const Mat& B, double dt, Mat& Ad, Mat& Bd) {
    require_square(A, "zoh_discretize");
    if (B.rows() != A.rows())
        throw std::invalid_argument("zoh_discretize: B rows must match A");
    if (dt < 0) throw std::invalid_argument("zoh_discretize: negative dt");
    const Eigen::Index n = A.rows(), m = B.cols();
    Mat M = Mat::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = A;
    M.topRightCorner(n, m) = B;
    Mat E = expm(M, dt);
    Ad = E.topLeftCorner(n, n);
    Bd = E.topRightCorner(n, m);
}

double spectral_abscissa(const Mat& A) {
    require_square(A, "spectral_abscissa");
    if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<Mat> es(A, false);
    return es.eigenvalues().real().maxCoeff();
}

bool is_hurwitz(const Mat& A, double margin) { return spectral_abscissa(A) < -margin; }

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
    require_square(A, "solve_lyapunov");
    if (Q.rows() != A.rows() || Q.cols() != A.cols())
        throw std::invalid_argument("solve_lyapunov: Q dimension mismatch");
    if (!is_hurwitz(A)) throw std::runtime_error("solve_lyapunov: A is not Hurwitz");
    const Eigen::Index n = A.rows();
    Mat I = Mat::Identity(n, n);
    // vec(AW + WA^T) = (I (x) A + A (x) I) vec(W)
    Mat K = Eigen::kroneckerProduct(I, A) + Eigen::kroneckerProduct(A, I);
    Eigen::PartialPivLU<Mat> lu(K);
    if (std::abs(lu.determinant()) == 0.0)
        throw std::runtime_error("solve_lyapunov: singular Kronecker system");
    Vec rhs = -Eigen::Map<const Vec>(Q.data(), n * n);
    Vec w = lu.solve(rhs);
    // one refinement sweep
    w += lu.solve(rhs - K * w);
    Mat W = Eigen::Map<Mat>(w.data(), n, n);
    return 0.5 * (W + W.transpose());
}

double filter_are_residual(const Mat& A, const Mat& C, const Mat& Qw, const Mat& Rv,
                           const Mat& S) {
    Mat Ri = Rv.inverse();
    Mat R = A * S + S * A.transpose() - S * C.transpose() * Ri * C * S + Qw;
    return R.norm();
}

namespace {

// Seed from the stable invariant subspace of the Hamiltonian of the dual control problem.
Mat hamiltonian_seed(const Mat& A, const Mat& C, const Mat& Qw, const Mat& Ri) {
    const Eigen::Index n = A.rows();
    Mat Hm(2 * n, 2 * n);
    Hm << A.transpose(), -C.transpose() * Ri * C, -Qw, -A;
    Eigen::ComplexEigenSolver<Mat> es(Hm);
    if (es.info() != Eigen::Success) throw std::runtime_error("solve_filter_are: eigensolver failed");
    Eigen::MatrixXcd U(2 * n, n);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < 2 * n && k < n; ++i)
        if (es.eigenvalues()(i).real() < 0) U.col(k++) = es.eigenvectors().col(i);
    if (k != n) throw std::runtime_error("solve_filter_are: no stabilizing solution (imaginary-axis Hamiltonian modes)");
    Eigen::MatrixXcd X = U.bottomRows(n) * U.topRows(n).inverse();
    Mat S = X.real();
    return 0.5 * (S + S.transpose());
}

}  // namespace

Mat solve_filter_are(const Mat& A, const Mat& C, const Mat& Qw, const Mat& Rv,
                     const AreOptions& opt) {
    require_square(A, "solve_filter_are");
    const Eigen::Index n = A.rows();
    if (C.cols() != n || Qw.rows() != n || Qw.cols() != n || Rv.rows() != C.rows() ||
        Rv.cols() != C.rows())
        throw std::invalid_argument("solve_filter_are: dimension mismatch");
    Eigen::LLT<Mat> rllt(Rv);
    if (rllt.info() != Eigen::Success)
        throw std::invalid_argument("solve_filter_are: Rv must be positive definite");
    Mat Ri = rllt.solve(Mat::Identity(Rv.rows(), Rv.cols()));

    Mat S = hamiltonian_seed(A, C, Qw, Ri);
    Mat Acl = A - S * C.transpose() * Ri * C;
    if (!is_hurwitz(Acl))
        throw std::runtime_error("solve_filter_are: seed is not stabilizing (detectability failure)");

    // Newton-Kleinman refinement
    double scale = std::max(1.0, Qw.norm());
    for (int it = 0; it < opt.max_iter; ++it) {
        if (filter_are_residual(A, C, Qw, Rv, S) <= opt.tol * scale) break;
        Mat M = S * C.transpose() * Ri;
        Mat Ak = A - M * C;
        Mat Snew = solve_lyapunov(Ak, Qw + M * Rv * M.transpose());
        if ((Snew - S).norm() <= 1e-15 * std::max(1.0, S.norm())) {
            S = Snew;
            break;
        }
        S = Snew;
        if (it + 1 == opt.max_iter && filter_are_residual(A, C, Qw, Rv, S) > 1e-6 * scale)
            throw std::runtime_error("solve_filter_are: Newton-Kleinman did not converge");
    }
    Acl = A - S * C.transpose() * Ri * C;
    if (!is_hurwitz(Acl))
        throw std::runtime_error("solve_filter_are: no stabilizing solution");
    return S;
}

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::Unbounded: return "unbounded";
        case QpStatus::MaxIter: return "max_iter";
    }
    return "unknown";
}

double qp_kkt_error(const QpProblem& p, const Vec& x, const Vec& z, const Vec& y) {
    const Eigen::Index m = p.G.rows(), me = p.Aeq.rows();
    Vec grad = p.P * x + p.q;
    Vec stat = grad;
    if (m) stat += p.G.transpose() * z;
    if (me) stat += p.Aeq.transpose() * y;
    double scale = 1.0 + std::max(inf_norm(grad), m ? inf_norm(p.G.transpose() * z) : 0.0);
    double err = inf_norm(stat) / scale;
    if (m) {
        Vec slack = p.h - p.G * x;
        for (Eigen::Index i = 0; i < m; ++i) {
            err = std::max(err, -slack(i));
            err = std::max(err, -z(i));
            err = std::max(err, std::abs(z(i) * slack(i)) / (1.0 + std::abs(z(i))));
        }
    }
    if (me) err = std::max(err, inf_norm(p.Aeq * x - p.beq));
    return err;
}

namespace {

struct KktSolver {
    Eigen::PartialPivLU<Mat> lu;
    Mat K;
    Eigen::Index n = 0;

    void factor(const Mat& H, const Mat& Aeq) {
        n = H.rows();
        const Eigen::Index me = Aeq.rows();
        K = Mat::Zero(n + me, n + me);
        K.topLeftCorner(n, n) = H;
        if (me) {
            K.topRightCorner(n, me) = Aeq.transpose();
            K.bottomLeftCorner(me, n) = Aeq;
        }
        Mat Kr = K;
        Kr.topLeftCorner(n, n).diagonal().array() += 1e-11;
        if (me) Kr.bottomRightCorner(me, me).diagonal().array() -= 1e-11;
        lu.compute(Kr);
    }
    Vec solve(const Vec& rhs) const {
        Vec sol = lu.solve(rhs);
        for (int k = 0; k < 3; ++k) sol += lu.solve(rhs - K * sol);
        return sol;
    }
};

double max_step(const Vec& v, const Vec& dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
    return a;
}

// Solve the equality-constrained problem on the guessed active set.
bool polish(const QpProblem& p, QpResult& r, double tol) {
    const Eigen::Index n = p.P.rows(), m = p.G.rows(), me = p.Aeq.rows();
    Vec slack = p.h - p.G * r.x;
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < m; ++i)
        if (r.z(i) > slack(i)) act.push_back(i);
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    Mat K = Mat::Zero(n + na + me, n + na + me);
    Vec rhs = Vec::Zero(n + na + me);
    K.topLeftCorner(n, n) = p.P;
    rhs.head(n) = -p.q;
    for (Eigen::Index j = 0; j < na; ++j) {
        K.block(0, n + j, n, 1) = p.G.row(act[j]).transpose();
        K.block(n + j, 0, 1, n) = p.G.row(act[j]);
        rhs(n + j) = p.h(act[j]);
    }
    if (me) {
        K.block(0, n + na, n, me) = p.Aeq.transpose();
        K.block(n + na, 0, me, n) = p.Aeq;
        rhs.tail(me) = p.beq;
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
    Vec sol = cod.solve(rhs);
    sol += cod.solve(rhs - K * sol);
    if (!sol.allFinite()) return false;
    Vec x = sol.head(n);
    Vec z = Vec::Zero(m);
    for (Eigen::Index j = 0; j < na; ++j) z(act[j]) = sol(n + j);
    Vec y = me ? Vec(sol.tail(me)) : Vec();
    if ((K * sol - rhs).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()))
        return false;
    double e = qp_kkt_error(p, x, z, y);
    if (e <= std::max(tol, std::min(r.kkt_error, 1e-7))) {
        r.x = x;
        r.z = z;
        r.y = y;
        r.kkt_error = e;
        return true;
    }
    return false;
}

// Mehrotra predictor-corrector on an already equilibrated problem.
QpResult ipm(const QpProblem& p, const QpOptions& opt) {
    const Eigen::Index n = p.P.rows();
    const Eigen::Index m = p.G.rows();
    const Eigen::Index me = p.Aeq.rows();
    if (p.P.cols() != n || p.q.size() != n || (m && p.G.cols() != n) || p.h.size() != m ||
        (me && p.Aeq.cols() != n) || p.beq.size() != me)
        throw std::invalid_argument("solve_qp: dimension mismatch");

    QpResult r;
    r.y = Vec::Zero(me);
    r.z = Vec::Zero(m);
    Vec q = p.q;
    const double qn = 1.0 + inf_norm(p.q), hn = 1.0 + inf_norm(p.h), bn = 1.0 + inf_norm(p.beq);

    KktSolver kkt;
    if (m == 0) {
        kkt.factor(p.P, p.Aeq);
        Vec rhs(n + me);
        rhs << -p.q, p.beq;
        Vec sol = kkt.solve(rhs);
        r.x = sol.head(n);
        r.y = sol.tail(me);
        r.iterations = 1;
        r.kkt_error = qp_kkt_error(p, r.x, r.z, r.y);
        if (r.kkt_error > 1e-6) {
            if (me && inf_norm(p.Aeq * r.x - p.beq) > 1e-6) r.status = QpStatus::Infeasible;
            else r.status = QpStatus::Unbounded;
        } else {
            r.status = QpStatus::Optimal;
        }
        r.objective = 0.5 * r.x.dot(p.P * r.x) + p.q.dot(r.x);
        return r;
    }

    // initial point
    Vec x, s, z, y;
    {
        kkt.factor(p.P + p.G.transpose() * p.G, p.Aeq);
        Vec rhs(n + me);
        rhs << -p.q + p.G.transpose() * p.h, p.beq;
        Vec sol = kkt.solve(rhs);
        x = sol.head(n);
        y = sol.tail(me);
        s = p.h - p.G * x;
        z = -s;
        double smin = s.minCoeff(), zmin = z.minCoeff();
        if (smin < 1.0) s.array() += 1.0 - smin;
        if (zmin < 1.0) z.array() += 1.0 - zmin;
    }

    const double sigma_pow = 3.0;
    for (int it = 0; it < opt.max_iter; ++it) {
        r.iterations = it + 1;
        Vec rd = p.P * x + q + p.G.transpose() * z;
        if (me) rd += p.Aeq.transpose() * y;
        Vec rp = p.G * x + s - p.h;
        Vec re = me ? Vec(p.Aeq * x - p.beq) : Vec();
        const double mu = s.dot(z) / static_cast<double>(m);
        const double obj = 0.5 * x.dot(p.P * x) + q.dot(x);

        bool conv = inf_norm(rd) <= opt.tol * qn && inf_norm(rp) <= opt.tol * hn &&
                    (me == 0 || inf_norm(re) <= opt.tol * bn) &&
                    s.dot(z) <= opt.tol * (1.0 + std::abs(obj));
        spdlog::trace("qp it {} mu {:.3e} rd {:.3e} rp {:.3e} obj {:.6e}", it, mu, inf_norm(rd), inf_norm(rp), obj);
        if (conv) {
            r.status = QpStatus::Optimal;
            break;
        }

        // Farkas certificate of primal infeasibility
        {
            double t = -(p.h.dot(z) + (me ? p.beq.dot(y) : 0.0));
            Vec gz = p.G.transpose() * z;
            if (me) gz += p.Aeq.transpose() * y;
            double zn = inf_norm(z);
            if (it > 5 && t > 0 && zn > 1e6 * qn && inf_norm(gz) <= 1e-7 * t) {
                r.status = QpStatus::Infeasible;
                break;
            }
            // Unbounded direction
            double xn = inf_norm(x);
            if (it > 5 && xn > 1e9 * (1.0 + hn)) {
                Vec d = x / xn;
                Vec gd = p.G * d;
                if (inf_norm(p.P * d) <= 1e-6 && gd.maxCoeff() <= 1e-6 && q.dot(d) < 0 &&
                    (me == 0 || inf_norm(p.Aeq * d) <= 1e-6)) {
                    r.status = QpStatus::Unbounded;
                    break;
                }
            }
        }

        Vec w = z.cwiseQuotient(s);
        Mat Hm = p.P + p.G.transpose() * w.asDiagonal() * p.G;
        kkt.factor(Hm, p.Aeq);

        auto newton = [&](const Vec& rc, Vec& dx, Vec& ds, Vec& dz, Vec& dy) {
            // rc is the target for s.*z residual: Z ds + S dz = -rc
            Vec t = (-rc + z.cwiseProduct(rp)).cwiseQuotient(s);
            Vec rhs(n + me);
            rhs.head(n) = -rd - p.G.transpose() * t;
            if (me) rhs.tail(me) = -re;
            Vec sol = kkt.solve(rhs);
            dx = sol.head(n);
            dy = sol.tail(me);
            ds = -rp - p.G * dx;
            dz = (-rc - z.cwiseProduct(ds)).cwiseQuotient(s);
        };

        Vec dxa, dsa, dza, dya;
        Vec rc = s.cwiseProduct(z);
        newton(rc, dxa, dsa, dza, dya);
        double ap = max_step(s, dsa), ad = max_step(z, dza);
        double a_aff = std::min(ap, ad);
        double mu_aff = (s + a_aff * dsa).dot(z + a_aff * dza) / static_cast<double>(m);
        double sigma = std::pow(std::max(0.0, mu_aff) / mu, sigma_pow);
        sigma = std::min(1.0, sigma);

        Vec dx, ds, dz, dy;
        rc = s.cwiseProduct(z) + dsa.cwiseProduct(dza) - Vec::Constant(m, sigma * mu);
        newton(rc, dx, ds, dz, dy);
        double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
        x += a * dx;
        s += a * ds;
        z += a * dz;
        if (me) y += a * dy;
        // keep strictly interior
        for (Eigen::Index i = 0; i < m; ++i) {
            s(i) = std::max(s(i), 1e-300);
            z(i) = std::max(z(i), 1e-300);
        }
    }

    r.x = x;
    r.z = z;
    r.y = y;
    if (r.status == QpStatus::Infeasible || r.status == QpStatus::Unbounded) {
        r.objective = r.status == QpStatus::Unbounded ? -std::numeric_limits<double>::infinity()
                                                     : std::numeric_limits<double>::infinity();
        r.kkt_error = std::numeric_limits<double>::infinity();
        return r;
    }
    return r;
}

}  // namespace

QpResult solve_qp(const QpProblem& p, const QpOptions& opt) {
    const Eigen::Index n = p.P.rows(), m = p.G.rows(), me = p.Aeq.rows();
    if (p.P.cols() != n || p.q.size() != n || (m && p.G.cols() != n) || p.h.size() != m ||
        (me && p.Aeq.cols() != n) || p.beq.size() != me)
        throw std::invalid_argument("solve_qp: dimension mismatch");

    // unit-norm constraint rows and a cost of order one; slack prices can be 1e6
    const double c = 1.0 / std::max({1.0, n ? p.P.cwiseAbs().maxCoeff() : 0.0, inf_norm(p.q)});
    auto row_norms = [](const Mat& A) {
        Vec r = Vec::Ones(A.rows());
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            double v = A.row(i).norm();
            if (v > 0) r(i) = v;
        }
        return r;
    };
    const Vec gn = row_norms(p.G), an = row_norms(p.Aeq);
    QpProblem ps;
    ps.P = c * p.P;
    ps.q = c * p.q;
    ps.G = gn.cwiseInverse().asDiagonal() * p.G;
    ps.h = p.h.cwiseQuotient(gn);
    ps.Aeq = an.cwiseInverse().asDiagonal() * p.Aeq;
    ps.beq = p.beq.cwiseQuotient(an);

    QpResult r = ipm(ps, opt);
    if (r.status == QpStatus::Infeasible || r.status == QpStatus::Unbounded) return r;
    r.kkt_error = qp_kkt_error(ps, r.x, r.z, r.y);
    if (opt.polish) polish(ps, r, opt.tol);
    r.z = r.z.cwiseQuotient(gn) / c;
    r.y = r.y.cwiseQuotient(an) / c;
    r.kkt_error = qp_kkt_error(p, r.x, r.z, r.y);
    if (r.status == QpStatus::MaxIter && r.kkt_error <= 1e-7) r.status = QpStatus::Optimal;
    r.objective = 0.5 * r.x.dot(p.P * r.x) + p.q.dot(r.x);
    return r;
}

int steps_for(double t, double dt) {
    if (dt <= 0) throw std::invalid_argument("step must be positive");
    double k = t / dt;
    long kr = std::lround(k);
    if (std::abs(k - static_cast<double>(kr)) > 1e-9 * std::max(1.0, k))
        throw std::invalid_argument("interval is not a multiple of the step");
    return static_cast<int>(kr);
}

Mat integrate_lti(const Mat& A, const Mat& B, const InputSignal& u, const Vec& x0, double dt,
                  double t_end) {
    require_square(A, "integrate_lti");
    if (B.rows() != A.rows() || x0.size() != A.rows())
        throw std::invalid_argument("integrate_lti: inconsistent dimensions");
    const int steps = steps_for(t_end, dt);
    Mat Ad, Bd;
    zoh_discretize(A, B, dt, Ad, Bd);
    Mat X(A.rows(), steps + 1);
    X.col(0) = x0;
    for (int k = 0; k < steps; ++k) {
        Vec uk = u(k * dt);
        if (uk.size() != B.cols()) throw std::invalid_argument("integrate_lti: input size mismatch");
        X.col(k + 1) = Ad * X.col(k) + Bd * uk;
    }
    return X;
}

}  // namespace gridfreq
