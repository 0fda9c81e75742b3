#pragma once

#include "gridfreq/model_reduction.hpp"
#include "gridfreq/primary_control.hpp"

#include <string>
#include <vector>

namespace gridfreq {

// How the primary-control contribution nu_k is generated inside the prediction.
enum class PrimaryPrediction {
    JointZoh,  // continuous F(s) discretized together with the reduced plant
    Tustin,    // bilinear F(s) driven by the sampled predicted frequency
};

struct MpcConfig {
    int H = 25;
    int h = 10;
    double dt = 0.2;
    Vec Q_diag, R_diag, eta_f, eta_u;
    double df_lo = -0.015, df_hi = 0.015;  // Hz
    double f0 = 60.0;
    double rocof_max = 0.6;  // Hz/s
    int n_r = 5;
    double ptl_lo = -0.15, ptl_hi = 0.15;
    double du_max = 0.002;
    Vec p_ibr_star;
    Vec u_lo, u_hi;
    double first_command_delay_s = 1.0;
    PrimaryPrediction prediction = PrimaryPrediction::JointZoh;

    double Ts() const { return h * dt; }
    // Fills unset vectors with the default weights for N regions.
    void fill_defaults(int N);
    void validate(int N) const;
};

// Discrete primary controller bank: one 2-state block per region.
struct DiscretePrimaryFilter {
    Mat A, B, C, D;
    Vec z;
};

DiscretePrimaryFilter tustin_primary(const PrimaryParams& p, double dt);
DiscretePrimaryFilter tustin_bank(const std::vector<PrimaryParams>& p, double dt);
// Continuous block-diagonal F bank.
StateSpace primary_bank(const std::vector<PrimaryParams>& p);

// X = [xhat; z]: X+ = Ad X + Bp dP + Bu u, nu = Cnu X.
struct PredictionModel {
    Mat Ad, Bp, Bu, Cnu, Cf, Ctl;
    int r = 0;
    int N = 0;
    int L = 0;
};

PredictionModel build_prediction_model(const ReducedGridModel& g, const std::vector<PrimaryParams>& p,
                                       bool primary_on, const MpcConfig& cfg);

enum class ConstraintClass { Frequency, Rocof, TieLine, Slew, Headroom, Schedule, SlackSign };
const char* to_string(ConstraintClass c);

struct QpRowBlock {
    ConstraintClass cls;
    int begin, end;
};

struct CondensedQp {
    QpProblem qp;
    std::vector<QpRowBlock> blocks;
    // affine maps from v to predicted X_1..X_H (stacked) and mu_1..mu_{H-1}
    Mat Xlin;
    Vec Xconst;
    Mat Mulin;
    Vec Muconst;
    int nv = 0;
};

CondensedQp build_qp(const PredictionModel& pm, const MpcConfig& cfg, const Vec& xhat0,
                     const Vec& dP, const Vec& u0, const Vec& z0);

struct MpcSolution {
    std::vector<Vec> du;  // k = 1..H-1
    std::vector<Vec> u;   // k = 1..H-1
    Vec eps_f, eps_u;
    std::vector<Vec> x;   // predicted X_1..X_H
    double objective = 0.0;
    QpStatus status = QpStatus::MaxIter;
    double kkt_error = 0.0;
    double hard_violation = 0.0;  // largest violation over hard classes
    std::string infeasible_class;
};

MpcSolution solve_horizon(const PredictionModel& pm, const MpcConfig& cfg, const Vec& xhat0,
                          const Vec& dP, const Vec& u0, const Vec& z0);

// Receding-horizon controller with zero-order-hold command output at dt granularity.
class MpcController {
public:
    MpcController(PredictionModel pm, MpcConfig cfg, std::vector<PrimaryParams> primary, bool primary_on);

    bool due(double t) const;
    // Solves at time t and loads the next h setpoints. Returns the solution for logging.
    MpcSolution trigger(double t, const Vec& xhat, const Vec& dphat, const Vec& z_primary);
    // Command in effect at time t.
    const Vec& command(double t);
    // Advances the sampled primary filter (Tustin mode only) with measured frequency.
    void sample_frequency(double t, const Vec& df_pu);
    Vec primary_state() const { return tustin_.z; }

    const MpcConfig& config() const { return cfg_; }
    const PredictionModel& model() const { return pm_; }
    int alarms() const { return alarms_; }
    int solves() const { return solves_; }
    double worst_hard_violation() const { return worst_violation_; }

private:
    PredictionModel pm_;
    MpcConfig cfg_;
    DiscretePrimaryFilter tustin_;
    Vec u_;
    std::vector<Vec> plan_;
    double plan_t0_ = 0.0;
    int next_trigger_ = 0;
    long last_sample_ = -1;
    int alarms_ = 0;
    int solves_ = 0;
    double worst_violation_ = 0.0;
};

}  // namespace gridfreq
