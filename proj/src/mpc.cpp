#include "gridfreq/mpc.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <stdexcept>

namespace gridfreq {

void MpcConfig::fill_defaults(int N) {
    if (Q_diag.size() == 0) Q_diag = Vec::Constant(N, 10.0);
    if (R_diag.size() == 0) R_diag = Vec::Constant(N, 1.0);
    if (eta_f.size() == 0) eta_f = Vec::Constant(N, 1e6);
    if (eta_u.size() == 0) eta_u = Vec::Constant(N, 1e3);
    if (p_ibr_star.size() == 0) p_ibr_star = Vec::Constant(N, 0.8);
    if (u_lo.size() == 0) u_lo = Vec::Constant(N, -1.0);
    if (u_hi.size() == 0) u_hi = Vec::Constant(N, 1.0);
}

void MpcConfig::validate(int N) const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("mpc: " + m); };
    if (H < 2) fail("H must be at least 2");
    if (h < 1 || h >= H) fail("need 1 <= h < H");
    if (n_r < 1 || n_r >= H) fail("need 1 <= n_r < H");
    if (dt <= 0) fail("dt must be positive");
    if (!(df_lo < 0 && 0 < df_hi)) fail("frequency band must contain zero");
    if (!(ptl_lo < ptl_hi)) fail("tie-line bounds inverted");
    if (du_max <= 0 || rocof_max <= 0 || f0 <= 0) fail("du_max, rocof_max and f0 must be positive");
    for (const Vec* v : {&Q_diag, &R_diag, &eta_f, &eta_u, &p_ibr_star, &u_lo, &u_hi})
        if (v->size() != N) fail("vector parameters need one entry per region");
    if ((Q_diag.array() <= 0).any() || (R_diag.array() <= 0).any()) fail("Q and R must be positive definite");
    if ((eta_f.array() < 0).any() || (eta_u.array() < 0).any()) fail("slack weights must be nonnegative");
    if ((u_lo.array() > u_hi.array()).any()) fail("scheduled bounds inverted");
    if (first_command_delay_s < 0) fail("first command delay must be nonnegative");
}

const char* to_string(ConstraintClass c) {
    switch (c) {
        case ConstraintClass::Frequency: return "frequency";
        case ConstraintClass::Rocof: return "rocof";
        case ConstraintClass::TieLine: return "tie_line";
        case ConstraintClass::Slew: return "slew";
        case ConstraintClass::Headroom: return "headroom";
        case ConstraintClass::Schedule: return "schedule";
        case ConstraintClass::SlackSign: return "slack_sign";
    }
    return "?";
}

DiscretePrimaryFilter tustin_primary(const PrimaryParams& p, double dt) {
    if (dt <= 0) throw std::invalid_argument("tustin_primary: step must be positive");
    StateSpace f = primary_tf(p);
    const Mat I = Mat::Identity(2, 2);
    Mat M = (I - f.A * dt / 2).inverse();
    DiscretePrimaryFilter d;
    d.A = M * (I + f.A * dt / 2);
    d.B = M * f.B * dt;
    d.C = f.C * M;
    d.D = f.D + f.C * M * f.B * dt / 2;
    d.z = Vec::Zero(2);
    return d;
}

namespace {

template <class Blk>
void block_diag(const std::vector<Blk>& parts, Mat& A, Mat& B, Mat& C, Mat& D) {
    const int N = static_cast<int>(parts.size());
    A = Mat::Zero(2 * N, 2 * N);
    B = Mat::Zero(2 * N, N);
    C = Mat::Zero(N, 2 * N);
    D = Mat::Zero(N, N);
    for (int i = 0; i < N; ++i) {
        A.block(2 * i, 2 * i, 2, 2) = parts[i].A;
        B.block(2 * i, i, 2, 1) = parts[i].B;
        C.block(i, 2 * i, 1, 2) = parts[i].C;
        D(i, i) = parts[i].D(0, 0);
    }
}

}  // namespace

DiscretePrimaryFilter tustin_bank(const std::vector<PrimaryParams>& p, double dt) {
    std::vector<DiscretePrimaryFilter> parts;
    for (const auto& q : p) parts.push_back(tustin_primary(q, dt));
    DiscretePrimaryFilter d;
    block_diag(parts, d.A, d.B, d.C, d.D);
    d.z = Vec::Zero(2 * static_cast<int>(p.size()));
    return d;
}

StateSpace primary_bank(const std::vector<PrimaryParams>& p) {
    std::vector<StateSpace> parts;
    for (const auto& q : p) parts.push_back(primary_tf(q));
    StateSpace s;
    block_diag(parts, s.A, s.B, s.C, s.D);
    return s;
}

PredictionModel build_prediction_model(const ReducedGridModel& g, const std::vector<PrimaryParams>& p,
                                       bool primary_on, const MpcConfig& cfg) {
    const int r = g.r(), N = g.n_regions, L = g.n_lines;
    if (static_cast<int>(p.size()) != N) throw std::invalid_argument("prediction model: one primary parameter set per region");
    cfg.validate(N);
    PredictionModel pm;
    pm.r = r;
    pm.N = N;
    pm.L = L;
    const int nx = r + 2 * N;
    const Mat& Lam = g.Lambda;
    const Mat C1 = g.C1;

    if (cfg.prediction == PrimaryPrediction::JointZoh) {
        StateSpace F = primary_bank(p);
        if (!primary_on) {
            F.C.setZero();
            F.D.setZero();
        }
        Mat AJ = Mat::Zero(nx, nx);
        AJ.topLeftCorner(r, r) = g.ss.A - g.ss.B * Lam * F.D * C1;
        AJ.topRightCorner(r, 2 * N) = -g.ss.B * Lam * F.C;
        AJ.bottomLeftCorner(2 * N, r) = F.B * C1;
        AJ.bottomRightCorner(2 * N, 2 * N) = F.A;
        Mat BJ = Mat::Zero(nx, 2 * N);
        BJ.topLeftCorner(r, N) = g.ss.B;
        BJ.topRightCorner(r, N) = -g.ss.B * Lam;
        Mat Ad, Bd;
        zoh_discretize(AJ, BJ, cfg.dt, Ad, Bd);
        pm.Ad = Ad;
        pm.Bp = Bd.leftCols(N);
        pm.Bu = Bd.rightCols(N);
        pm.Cnu = Mat(N, nx);
        pm.Cnu << F.D * C1, F.C;
    } else {
        DiscretePrimaryFilter T = tustin_bank(p, cfg.dt);
        if (!primary_on) {
            T.C.setZero();
            T.D.setZero();
        }
        Mat Ad, Bd;
        discretize_reduced(g, cfg.dt, Ad, Bd);
        pm.Ad = Mat::Zero(nx, nx);
        pm.Ad.topLeftCorner(r, r) = Ad - Bd * Lam * T.D * C1;
        pm.Ad.topRightCorner(r, 2 * N) = -Bd * Lam * T.C;
        pm.Ad.bottomLeftCorner(2 * N, r) = T.B * C1;
        pm.Ad.bottomRightCorner(2 * N, 2 * N) = T.A;
        pm.Bp = Mat::Zero(nx, N);
        pm.Bp.topRows(r) = Bd;
        pm.Bu = Mat::Zero(nx, N);
        pm.Bu.topRows(r) = -Bd * Lam;
        pm.Cnu = Mat(N, nx);
        pm.Cnu << T.D * C1, T.C;
    }
    pm.Cf = Mat::Zero(N, nx);
    pm.Cf.leftCols(r) = C1;
    pm.Ctl = Mat::Zero(L, nx);
    pm.Ctl.leftCols(r) = g.C2;
    return pm;
}

namespace {

struct RowSink {
    std::vector<Mat> G;
    std::vector<Vec> h;
    std::vector<QpRowBlock> blocks;
    int rows = 0;

    // Aff v <= b
    void add(ConstraintClass c, const Mat& Aff, const Vec& b) {
        if (!blocks.empty() && blocks.back().cls == c && blocks.back().end == rows) {
            blocks.back().end += static_cast<int>(Aff.rows());
        } else {
            blocks.push_back({c, rows, rows + static_cast<int>(Aff.rows())});
        }
        rows += static_cast<int>(Aff.rows());
        G.push_back(Aff);
        h.push_back(b);
    }
};

}  // namespace

CondensedQp build_qp(const PredictionModel& pm, const MpcConfig& cfg, const Vec& xhat0,
                     const Vec& dP, const Vec& u0, const Vec& z0) {
    const int N = pm.N, H = cfg.H, nx = static_cast<int>(pm.Ad.rows());
    if (xhat0.size() != pm.r || dP.size() != N || u0.size() != N || z0.size() != nx - pm.r)
        throw std::invalid_argument("build_qp: dimension mismatch");
    cfg.validate(N);
    const int nv = (H - 1) * N + 2 * N;
    const int eu = (H - 1) * N, ef = (H - 1) * N + N;
    CondensedQp out;
    out.nv = nv;
    out.Xlin = Mat::Zero(H * nx, nv);
    out.Xconst = Vec::Zero(H * nx);
    out.Mulin = Mat::Zero((H - 1) * N, nv);
    out.Muconst = Vec::Zero((H - 1) * N);

    Mat EU = Mat::Zero(N, nv), EF = Mat::Zero(N, nv);
    EU.middleCols(eu, N) = Mat::Identity(N, N);
    EF.middleCols(ef, N) = Mat::Identity(N, N);

    Vec Xc(nx);
    Xc << xhat0, z0;
    Mat Xl = Mat::Zero(nx, nv);
    Vec uc = u0;
    Mat ul = Mat::Zero(N, nv);
    const Vec ones = Vec::Ones(N);

    QpProblem& qp = out.qp;
    qp.P = Mat::Zero(nv, nv);
    qp.q = Vec::Zero(nv);
    qp.q.segment(eu, N) = cfg.eta_u;
    qp.q.segment(ef, N) = cfg.eta_f;
    const Mat Q = cfg.Q_diag.asDiagonal();
    const Mat R = cfg.R_diag.asDiagonal();
    const Vec dPterm = pm.Bp * dP;

    RowSink rows;
    std::vector<Vec> fc(H + 1);
    std::vector<Mat> fl(H + 1);
    fc[0] = pm.Cf * Xc;
    fl[0] = Mat::Zero(N, nv);

    for (int k = 0; k < H; ++k) {
        Xc = pm.Ad * Xc + dPterm + pm.Bu * uc;
        Xl = pm.Ad * Xl + pm.Bu * ul;
        out.Xconst.segment(k * nx, nx) = Xc;
        out.Xlin.middleRows(k * nx, nx) = Xl;

        fc[k + 1] = pm.Cf * Xc;
        fl[k + 1] = pm.Cf * Xl;
        // df_lo - eps_f <= f0 Cf X <= df_hi + eps_f
        rows.add(ConstraintClass::Frequency, cfg.f0 * fl[k + 1] - EF, cfg.df_hi * ones - cfg.f0 * fc[k + 1]);
        rows.add(ConstraintClass::Frequency, -cfg.f0 * fl[k + 1] - EF, -cfg.df_lo * ones + cfg.f0 * fc[k + 1]);
        if (pm.L > 0) {
            Vec tc = pm.Ctl * Xc;
            Mat tl = pm.Ctl * Xl;
            const Vec onesL = Vec::Ones(pm.L);
            rows.add(ConstraintClass::TieLine, tl, cfg.ptl_hi * onesL - tc);
            rows.add(ConstraintClass::TieLine, -tl, -cfg.ptl_lo * onesL + tc);
        }
        if (k < H - 1) {
            Mat S = Mat::Zero(N, nv);
            S.middleCols(k * N, N) = Mat::Identity(N, N);
            ul += S;
            Vec muc = uc + pm.Cnu * Xc;
            Mat mul = ul + pm.Cnu * Xl;
            out.Muconst.segment(k * N, N) = muc;
            out.Mulin.middleRows(k * N, N) = mul;
            rows.add(ConstraintClass::Slew, S, cfg.du_max * ones);
            rows.add(ConstraintClass::Slew, -S, cfg.du_max * ones);
            rows.add(ConstraintClass::Headroom, mul, (ones - cfg.p_ibr_star) - muc);
            rows.add(ConstraintClass::Headroom, -mul, cfg.p_ibr_star + muc);
            rows.add(ConstraintClass::Schedule, mul - EU, cfg.u_hi - muc);
            rows.add(ConstraintClass::Schedule, -mul - EU, -cfg.u_lo + muc);
            qp.P += 2.0 * (fl[k + 1].transpose() * Q * fl[k + 1] + S.transpose() * R * S);
            qp.q += 2.0 * fl[k + 1].transpose() * Q * fc[k + 1];
        }
    }
    const double scale = cfg.f0 / (cfg.n_r * cfg.dt);
    for (int k = 0; k + cfg.n_r <= H; ++k) {
        Mat dl = scale * (fl[k + cfg.n_r] - fl[k]);
        Vec dc = scale * (fc[k + cfg.n_r] - fc[k]);
        rows.add(ConstraintClass::Rocof, dl, cfg.rocof_max * ones - dc);
        rows.add(ConstraintClass::Rocof, -dl, cfg.rocof_max * ones + dc);
    }
    rows.add(ConstraintClass::SlackSign, -EU, Vec::Zero(N));
    rows.add(ConstraintClass::SlackSign, -EF, Vec::Zero(N));

    qp.G.resize(rows.rows, nv);
    qp.h.resize(rows.rows);
    int at = 0;
    for (std::size_t i = 0; i < rows.G.size(); ++i) {
        const int m = static_cast<int>(rows.G[i].rows());
        qp.G.middleRows(at, m) = rows.G[i];
        qp.h.segment(at, m) = rows.h[i];
        at += m;
    }
    qp.P = 0.5 * (qp.P + qp.P.transpose());
    qp.Aeq = Mat(0, nv);
    qp.beq = Vec(0);
    out.blocks = rows.blocks;
    return out;
}

namespace {

bool is_hard(ConstraintClass c) {
    return c == ConstraintClass::Rocof || c == ConstraintClass::TieLine || c == ConstraintClass::Slew ||
           c == ConstraintClass::Headroom;
}

QpProblem without_class(const CondensedQp& c, ConstraintClass drop) {
    std::vector<int> keep;
    for (const auto& b : c.blocks)
        if (b.cls != drop)
            for (int i = b.begin; i < b.end; ++i) keep.push_back(i);
    QpProblem p = c.qp;
    p.G.resize(static_cast<int>(keep.size()), c.nv);
    p.h.resize(static_cast<int>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        p.G.row(static_cast<int>(i)) = c.qp.G.row(keep[i]);
        p.h(static_cast<int>(i)) = c.qp.h(keep[i]);
    }
    return p;
}

}  // namespace

MpcSolution solve_horizon(const PredictionModel& pm, const MpcConfig& cfg, const Vec& xhat0,
                          const Vec& dP, const Vec& u0, const Vec& z0) {
    CondensedQp c = build_qp(pm, cfg, xhat0, dP, u0, z0);
    QpResult r = solve_qp(c.qp);
    MpcSolution s;
    s.status = r.status;
    s.kkt_error = r.kkt_error;
    const int N = pm.N, H = cfg.H, nx = static_cast<int>(pm.Ad.rows());
    if (r.status != QpStatus::Optimal) {
        if (r.status == QpStatus::Infeasible) {
            for (ConstraintClass cls : {ConstraintClass::Rocof, ConstraintClass::TieLine, ConstraintClass::Slew,
                                        ConstraintClass::Headroom}) {
                if (solve_qp(without_class(c, cls)).status == QpStatus::Optimal) {
                    s.infeasible_class = to_string(cls);
                    break;
                }
            }
            if (s.infeasible_class.empty()) s.infeasible_class = "combined";
        }
        return s;
    }
    const Vec& v = r.x;
    Vec u = u0;
    for (int k = 1; k < H; ++k) {
        Vec d = v.segment((k - 1) * N, N);
        u += d;
        s.du.push_back(d);
        s.u.push_back(u);
    }
    s.eps_u = v.segment((H - 1) * N, N);
    s.eps_f = v.segment((H - 1) * N + N, N);
    Vec X = c.Xlin * v + c.Xconst;
    for (int k = 0; k < H; ++k) s.x.push_back(X.segment(k * nx, nx));
    // constant part of the tracking cost completes the objective value
    double cst = 0;
    for (int k = 0; k < H - 1; ++k) {
        Vec f = pm.Cf * c.Xconst.segment(k * nx, nx);
        cst += f.dot(cfg.Q_diag.asDiagonal() * f);
    }
    s.objective = r.objective + cst;
    Vec viol = c.qp.G * v - c.qp.h;
    for (const auto& b : c.blocks)
        if (is_hard(b.cls))
            for (int i = b.begin; i < b.end; ++i) s.hard_violation = std::max(s.hard_violation, viol(i));
    return s;
}

MpcController::MpcController(PredictionModel pm, MpcConfig cfg, std::vector<PrimaryParams> primary, bool primary_on)
    : pm_(std::move(pm)), cfg_(std::move(cfg)) {
    cfg_.validate(pm_.N);
    tustin_ = tustin_bank(primary, cfg_.dt);
    if (!primary_on) {
        tustin_.C.setZero();
        tustin_.D.setZero();
    }
    u_ = Vec::Zero(pm_.N);
}

bool MpcController::due(double t) const {
    return t + 1e-9 >= cfg_.first_command_delay_s + next_trigger_ * cfg_.Ts();
}

MpcSolution MpcController::trigger(double t, const Vec& xhat, const Vec& dphat, const Vec& z_primary) {
    const Vec& z0 = cfg_.prediction == PrimaryPrediction::Tustin ? tustin_.z : z_primary;
    MpcSolution s = solve_horizon(pm_, cfg_, xhat, dphat, u_, z0);
    ++solves_;
    ++next_trigger_;
    plan_t0_ = t;
    plan_.clear();
    if (s.status == QpStatus::Optimal) {
        for (int k = 0; k < cfg_.h; ++k) plan_.push_back(s.u[k]);
        worst_violation_ = std::max(worst_violation_, s.hard_violation);
        spdlog::debug("mpc t={:.2f} objective={:.6g} eps_f={:.3g} eps_u={:.3g}", t, s.objective,
                      s.eps_f.maxCoeff(), s.eps_u.maxCoeff());
    } else {
        ++alarms_;
        for (int k = 0; k < cfg_.h; ++k) plan_.push_back(u_);
        spdlog::warn("mpc alarm at t={:.2f}: QP {} ({}), holding previous command", t, to_string(s.status),
                     s.infeasible_class.empty() ? "no class" : s.infeasible_class);
    }
    return s;
}

const Vec& MpcController::command(double t) {
    if (plan_.empty()) return u_;
    const double steps = (t - plan_t0_) / cfg_.dt;
    const long j = static_cast<long>(std::floor(steps + 1e-9));
    // u_1 takes effect one step after the solve; u_0 (in effect at the solve) holds until then
    if (j >= 1 && j <= cfg_.h) u_ = plan_[j - 1];
    return u_;
}

void MpcController::sample_frequency(double t, const Vec& df_pu) {
    if (cfg_.prediction != PrimaryPrediction::Tustin) return;
    const long s = std::lround(t / cfg_.dt);
    if (std::abs(t - s * cfg_.dt) > 1e-9 || s == last_sample_) return;
    last_sample_ = s;
    tustin_.z = tustin_.A * tustin_.z + tustin_.B * df_pu;
}

}  // namespace gridfreq
