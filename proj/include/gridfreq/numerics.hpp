#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace gridfreq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Dense (A, B, C, D) realization. Continuous or discrete depending on context.
struct StateSpace {
    Mat A, B, C, D;
    std::vector<std::string> state_labels;

    int nx() const { return static_cast<int>(A.rows()); }
    int nu() const { return static_cast<int>(B.cols()); }
    int ny() const { return static_cast<int>(C.rows()); }
};

// e^{tA} by scaling-and-squaring Pade.
Mat expm(const Mat& A, double t = 1.0);

// Exact zero-order-hold pair from exp([[A,B],[0,0]] dt).
void zoh_discretize(const Mat& A, const Mat& B, double dt, Mat& Ad, Mat& Bd);

bool is_hurwitz(const Mat& A, double margin = 0.0);
double spectral_abscissa(const Mat& A);

// Solves A W + W A^T + Q = 0 by Kronecker vectorization.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

struct AreOptions {
    int max_iter = 50;
    double tol = 1e-12;
};

// Stabilizing solution of A S + S A^T - S C^T Rv^-1 C S + Qw = 0.
Mat solve_filter_are(const Mat& A, const Mat& C, const Mat& Qw, const Mat& Rv,
                     const AreOptions& opt = {});

double filter_are_residual(const Mat& A, const Mat& C, const Mat& Qw, const Mat& Rv,
                           const Mat& S);

struct QpProblem {
    Mat P;
    Vec q;
    Mat G;  // G x <= h
    Vec h;
    Mat Aeq;  // Aeq x = beq (optional, zero rows allowed)
    Vec beq;
};

enum class QpStatus { Optimal, Infeasible, Unbounded, MaxIter };

const char* to_string(QpStatus s);

struct QpResult {
    Vec x;
    Vec z;  // inequality multipliers
    Vec y;  // equality multipliers
    QpStatus status = QpStatus::MaxIter;
    int iterations = 0;
    double objective = 0.0;
    double kkt_error = 0.0;
};

struct QpOptions {
    int max_iter = 200;
    double tol = 1e-9;
    bool polish = true;
};

QpResult solve_qp(const QpProblem& p, const QpOptions& opt = {});

// Largest violation among stationarity, primal and dual feasibility and complementarity.
double qp_kkt_error(const QpProblem& p, const Vec& x, const Vec& z, const Vec& y);

using InputSignal = std::function<Vec(double)>;

// Propagates x' = Ax + Bu with u held over each dt step. Returns states column-wise,
// first column x0, last column x(t_end).
Mat integrate_lti(const Mat& A, const Mat& B, const InputSignal& u, const Vec& x0,
                  double dt, double t_end);

int steps_for(double t, double dt);

}  // namespace gridfreq
