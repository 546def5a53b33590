#pragma once

#include "curvestream/assembly.hpp"
#include "curvestream/curves.hpp"
#include "curvestream/distributions.hpp"

#include <vector>

namespace curvestream {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

struct HyperparametersTwoLevel {
    VectorXd mu_beta;
    MatrixXd Sigma_beta;
    double nu_eps = 1.0, s_eps = 1e5;
    double nu_gbl = 1.0, s_gbl = 1e5;
    double nu_grp = 1.0, s_grp = 1e5;
    double nu_Sigma = 2.0;
    VectorXd s_Sigma;

    // d is the dimension of the fixed effects (2, or 4 for the contrast layout).
    static HyperparametersTwoLevel defaults(int d = 2);
};

struct HyperparametersThreeLevel {
    VectorXd mu_beta;
    MatrixXd Sigma_beta;
    double nu_eps = 1.0, s_eps = 1e5;
    double nu_gbl = 1.0, s_gbl = 1e5;
    double nu_grp_g = 1.0, s_grp_g = 1e5;
    double nu_grp_h = 1.0, s_grp_h = 1e5;
    double nu_Sigma_g = 2.0;
    VectorXd s_Sigma_g;
    double nu_Sigma_h = 2.0;
    VectorXd s_Sigma_h;

    static HyperparametersThreeLevel defaults();
};

void validate(const HyperparametersTwoLevel& h, int d);
void validate(const HyperparametersThreeLevel& h);

// ---------------------------------------------------------------------------
// q-density state
// ---------------------------------------------------------------------------

// A variance sigma^2 with its auxiliary a: q(sigma^2) and q(a) are Inverse-chi^2.
struct ScaleFactor {
    InverseChiSq sigma_sq;
    InverseChiSq a;
    double mu_recip_sigma_sq = 1.0;
    double mu_recip_a = 1.0;
};

// A covariance matrix Sigma with its diagonal auxiliary A.
struct CovFactor {
    InverseGWishart Sigma;
    InverseGWishart A;
    MatrixXd M_Sigma_inv;
    MatrixXd M_A_inv;
};

// Expectations under q(beta, u) that feed the variance updates and the lower bound.
struct TwoLevelCoefStats {
    double sq_residual = 0.0;  // E ||y - C (beta, u)||^2
    MatrixXd lin_outer;        // sum_i E(u_lin,i u_lin,i^T)
    double grp_sq = 0.0;       // sum_i E ||u_grp,i||^2
    VectorXd gbl_sq;           // E ||u_gbl,b||^2 per global block
};

struct QStateTwoLevel {
    TwoLevelSolution coef;  // mu_q(beta,u_gbl) = x1, Sigma_q = A11, per group x2 / A22 / A12
    TwoLevelCoefStats stats;
    ScaleFactor eps;
    std::vector<ScaleFactor> gbl;
    ScaleFactor grp;
    CovFactor Sigma;
    double elbo_const = 0.0;
};

struct ThreeLevelCoefStats {
    double sq_residual = 0.0;
    MatrixXd lin_g_outer, lin_h_outer;
    double grp_g_sq = 0.0, grp_h_sq = 0.0, gbl_sq = 0.0;
};

struct QStateThreeLevel {
    ThreeLevelSolution coef;
    ThreeLevelCoefStats stats;
    ScaleFactor eps, gbl, grp_g, grp_h;
    CovFactor Sigma_g, Sigma_h;
};

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

enum class ConvergenceMetric { Elbo, ParamChange };

struct FitOptions {
    int max_iterations = 500;
    double rel_tol = 1e-5;
    ConvergenceMetric metric = ConvergenceMetric::Elbo;
    bool fixed_iterations = false;  // run exactly max_iterations cycles
    bool record_elbo = true;
    Execution execution = Execution::Parallel;
};

struct MfvbFitTwoLevel {
    TwoLevelCurveModel model;
    HyperparametersTwoLevel hyper;
    QStateTwoLevel state;
    int iterations = 0;
    bool converged = false;
    std::vector<double> elbo_trace;
    double seconds = 0.0;
};

struct MfvbFitThreeLevel {
    ThreeLevelCurveModel model;
    HyperparametersThreeLevel hyper;
    QStateThreeLevel state;
    int iterations = 0;
    bool converged = false;
    std::vector<double> change_trace;
    double seconds = 0.0;
};

// Shape parameters of the IGW prior and q-densities for a d x d covariance with nu hyperparameter.
double igw_prior_shape(double nu, int d);
double igw_aux_shape(double nu, int d);

QStateTwoLevel init_q_state(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper);
QStateThreeLevel init_q_state(const ThreeLevelDesign& des, const HyperparametersThreeLevel& hyper);

TwoLevelSparseProblem build_two_level_mfvb_blocks(const QStateTwoLevel& state, const TwoLevelDesign& des,
                                                  const HyperparametersTwoLevel& hyper,
                                                  Execution ex = Execution::Parallel);
ThreeLevelSparseProblem build_three_level_mfvb_blocks(const QStateThreeLevel& state, const ThreeLevelDesign& des,
                                                      const HyperparametersThreeLevel& hyper,
                                                      Execution ex = Execution::Parallel);

TwoLevelCoefStats coef_stats(const TwoLevelSolution& coef, const TwoLevelDesign& des,
                             Execution ex = Execution::Parallel);
ThreeLevelCoefStats coef_stats(const ThreeLevelSolution& coef, const ThreeLevelDesign& des,
                               Execution ex = Execution::Parallel);

// Variance-parameter and auxiliary updates from state.stats (everything after the solve in a cycle).
void update_variance_factors(QStateTwoLevel& state, const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper);
void update_variance_factors(QStateThreeLevel& state, const ThreeLevelDesign& des,
                             const HyperparametersThreeLevel& hyper);

QStateTwoLevel mfvb_cycle_two_level(const QStateTwoLevel& state, const TwoLevelDesign& des,
                                    const HyperparametersTwoLevel& hyper, Execution ex = Execution::Parallel);
QStateThreeLevel mfvb_cycle_three_level(const QStateThreeLevel& state, const ThreeLevelDesign& des,
                                        const HyperparametersThreeLevel& hyper, Execution ex = Execution::Parallel);

// Lower bound on the marginal log-likelihood at the current state (after at least one cycle).
double elbo_two_level(const QStateTwoLevel& state, const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper);

// Largest relative change across the monitored variational parameters.
double param_change(const QStateTwoLevel& prev, const QStateTwoLevel& cur);
double param_change(const QStateThreeLevel& prev, const QStateThreeLevel& cur);

MfvbFitTwoLevel fit_mfvb(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, const FitOptions& opts = {});
MfvbFitThreeLevel fit_mfvb(const ThreeLevelDesign& des, const HyperparametersThreeLevel& hyper,
                           FitOptions opts = {.metric = ConvergenceMetric::ParamChange});

CurveBand credible_band(const MfvbFitTwoLevel& fit, const VectorXd& grid, const CurveTarget& target, double level);
CurveBand credible_band(const MfvbFitThreeLevel& fit, const VectorXd& grid, const CurveTarget& target, double level);

} // namespace curvestream
