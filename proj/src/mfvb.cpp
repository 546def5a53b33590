#include "curvestream/mfvb.hpp"

#include "curvestream/errors.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace curvestream {

namespace {

using Eigen::Index;

constexpr double kLog2 = std::numbers::ln2;
const double kLogPi = std::log(std::numbers::pi);

// sum over rows of (L A) .* R, summed: tr(R^T L A)
double trace_form(const MatrixXd& L, const MatrixXd& A, const MatrixXd& R)
{
    return ((L * A).array() * R.array()).sum();
}

double log_mv_gamma(int d, double a)
{
    double out = 0.25 * d * (d - 1) * kLogPi;
    for (int j = 1; j <= d; ++j) out += std::lgamma(a + 0.5 * (1 - j));
    return out;
}

void check_finite(double v, const char* what)
{
    if (!std::isfinite(v)) throw NonFiniteUpdate(std::string("non-finite update of ") + what);
}

void check_finite(const MatrixXd& v, const char* what)
{
    if (!v.allFinite()) throw NonFiniteUpdate(std::string("non-finite update of ") + what);
}

void check_positive(double v, const char* what)
{
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + " must be positive and finite");
}

double recip_moment(const InverseChiSq& d, const char* what)
{
    check_finite(d.lambda, what);
    return inv_chisq_reciprocal_moment(d);
}

MatrixXd inverse_moment(const InverseGWishart& d, const char* what)
{
    check_finite(d.Lambda, what);
    return igw_inverse_moment(d);
}

ScaleFactor make_scale_factor(double xi_sigma, double nu)
{
    ScaleFactor f;
    f.sigma_sq = {xi_sigma, xi_sigma};
    f.a = {nu + 1.0, nu + 1.0};
    f.mu_recip_sigma_sq = 1.0;
    f.mu_recip_a = 1.0;
    return f;
}

CovFactor make_cov_factor(int d, double xi_sigma, double xi_a)
{
    CovFactor f;
    f.Sigma = {Graph::Full, xi_sigma, (xi_sigma - d + 1.0) * MatrixXd::Identity(d, d)};
    f.A = {Graph::Diag, xi_a, xi_a * MatrixXd::Identity(d, d)};
    f.M_Sigma_inv = MatrixXd::Identity(d, d);
    f.M_A_inv = MatrixXd::Identity(d, d);
    return f;
}

void update_cov(CovFactor& f, const MatrixXd& outer, const char* what)
{
    f.Sigma.Lambda = f.M_A_inv + outer;
    symmetrize(f.Sigma.Lambda);
    f.M_Sigma_inv = inverse_moment(f.Sigma, what);
}

void update_cov_aux(CovFactor& f, double nu, const VectorXd& s, const char* what)
{
    const Index d = f.M_Sigma_inv.rows();
    f.A.Lambda = MatrixXd::Zero(d, d);
    for (Index j = 0; j < d; ++j) f.A.Lambda(j, j) = f.M_Sigma_inv(j, j) + 1.0 / (nu * s[j] * s[j]);
    f.M_A_inv = inverse_moment(f.A, what);
}

void update_scale(ScaleFactor& f, double accum, const char* what)
{
    f.sigma_sq.lambda = f.mu_recip_a + accum;
    f.mu_recip_sigma_sq = recip_moment(f.sigma_sq, what);
}

void update_scale_aux(ScaleFactor& f, double nu, double s, const char* what)
{
    f.a.lambda = f.mu_recip_sigma_sq + 1.0 / (nu * s * s);
    f.mu_recip_a = recip_moment(f.a, what);
}

// Terms of the lower bound contributed by one (sigma^2, a) pair that vary with the state.
double scale_pair_terms(const ScaleFactor& f, double nu, double s)
{
    return -0.5 * f.mu_recip_a * f.mu_recip_sigma_sq - f.mu_recip_a / (2.0 * nu * s * s) -
           0.5 * f.sigma_sq.xi * std::log(f.sigma_sq.lambda) + 0.5 * f.sigma_sq.lambda * f.mu_recip_sigma_sq -
           0.5 * f.a.xi * std::log(f.a.lambda) + 0.5 * f.a.lambda * f.mu_recip_a;
}

double scale_pair_const(double xi_sigma, double xi_a, double nu, double s)
{
    return -0.5 * nu * kLog2 - std::lgamma(0.5 * nu) - 0.5 * std::log(2.0 * nu * s * s) - std::lgamma(0.5) +
           std::lgamma(0.5 * xi_sigma) + 0.5 * xi_sigma * kLog2 + std::lgamma(0.5 * xi_a) + 0.5 * xi_a * kLog2;
}

double cov_terms(const CovFactor& f, double nu, const VectorXd& s)
{
    const Index d = f.M_Sigma_inv.rows();
    const double kappa_q = f.Sigma.xi - d + 1.0;
    double v = -0.5 * (f.M_A_inv * f.M_Sigma_inv).trace();
    v += -0.5 * kappa_q * spd_logdet(f.Sigma.Lambda, "Lambda_q(Sigma)") +
         0.5 * (f.Sigma.Lambda * f.M_Sigma_inv).trace();
    for (Index j = 0; j < d; ++j) {
        const double lam0 = 1.0 / (nu * s[j] * s[j]);
        v += -0.5 * lam0 * f.M_A_inv(j, j);
        v += -0.5 * f.A.xi * std::log(f.A.Lambda(j, j)) + 0.5 * f.A.Lambda(j, j) * f.M_A_inv(j, j);
    }
    return v;
}

double cov_const(int d, double xi_sigma, double xi_a, double nu, const VectorXd& s)
{
    const double kappa0 = igw_prior_shape(nu, d) - d + 1.0;
    const double kappa_q = xi_sigma - d + 1.0;
    double v = -0.5 * kappa0 * d * kLog2 - log_mv_gamma(d, 0.5 * kappa0);
    v += 0.5 * kappa_q * d * kLog2 + log_mv_gamma(d, 0.5 * kappa_q);
    for (int j = 0; j < d; ++j) {
        const double lam0 = 1.0 / (nu * s[j] * s[j]);
        v += 0.5 * std::log(0.5 * lam0) - std::lgamma(0.5);
        v += std::lgamma(0.5 * xi_a) + 0.5 * xi_a * kLog2;
    }
    return v;
}

double rel_change(double prev, double cur) { return std::abs(cur - prev) / std::max(std::abs(cur), 1e-300); }

double rel_change(const MatrixXd& prev, const MatrixXd& cur)
{
    return (cur - prev).norm() / std::max(cur.norm(), 1e-300);
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

// -------------------------------------------------------------------------
// Hyperparameters
// -------------------------------------------------------------------------

HyperparametersTwoLevel HyperparametersTwoLevel::defaults(int d)
{
    HyperparametersTwoLevel h;
    h.mu_beta = VectorXd::Zero(d);
    h.Sigma_beta = 1e10 * MatrixXd::Identity(d, d);
    h.s_Sigma = VectorXd::Constant(d, 1e5);
    return h;
}

HyperparametersThreeLevel HyperparametersThreeLevel::defaults()
{
    HyperparametersThreeLevel h;
    h.mu_beta = VectorXd::Zero(2);
    h.Sigma_beta = 1e10 * MatrixXd::Identity(2, 2);
    h.s_Sigma_g = VectorXd::Constant(2, 1e5);
    h.s_Sigma_h = VectorXd::Constant(2, 1e5);
    return h;
}

void validate(const HyperparametersTwoLevel& h, int d)
{
    if (h.mu_beta.size() != d || h.Sigma_beta.rows() != d || h.Sigma_beta.cols() != d || h.s_Sigma.size() != d) {
        throw DimensionMismatch("hyperparameter dimensions must match the fixed-effect dimension " + std::to_string(d));
    }
    for (auto [v, name] : {std::pair{h.nu_eps, "nu_eps"}, {h.s_eps, "s_eps"}, {h.nu_gbl, "nu_gbl"},
                           {h.s_gbl, "s_gbl"}, {h.nu_grp, "nu_grp"}, {h.s_grp, "s_grp"}, {h.nu_Sigma, "nu_Sigma"}}) {
        check_positive(v, name);
    }
    for (Index j = 0; j < d; ++j) check_positive(h.s_Sigma[j], "s_Sigma");
    if (!h.mu_beta.allFinite()) throw ValidationError("mu_beta must be finite");
    Eigen::LLT<MatrixXd> llt(h.Sigma_beta);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite("Sigma_beta is not positive definite");
}

void validate(const HyperparametersThreeLevel& h)
{
    if (h.mu_beta.size() != 2 || h.Sigma_beta.rows() != 2 || h.Sigma_beta.cols() != 2 || h.s_Sigma_g.size() != 2 ||
        h.s_Sigma_h.size() != 2) {
        throw DimensionMismatch("three-level hyperparameters must be two-dimensional");
    }
    for (auto [v, name] :
         {std::pair{h.nu_eps, "nu_eps"}, {h.s_eps, "s_eps"}, {h.nu_gbl, "nu_gbl"}, {h.s_gbl, "s_gbl"},
          {h.nu_grp_g, "nu_grp_g"}, {h.s_grp_g, "s_grp_g"}, {h.nu_grp_h, "nu_grp_h"}, {h.s_grp_h, "s_grp_h"},
          {h.nu_Sigma_g, "nu_Sigma_g"}, {h.nu_Sigma_h, "nu_Sigma_h"}}) {
        check_positive(v, name);
    }
    for (Index j = 0; j < 2; ++j) {
        check_positive(h.s_Sigma_g[j], "s_Sigma_g");
        check_positive(h.s_Sigma_h[j], "s_Sigma_h");
    }
    Eigen::LLT<MatrixXd> llt(h.Sigma_beta);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite("Sigma_beta is not positive definite");
}

double igw_prior_shape(double nu, int d) { return nu + 2.0 * d - 2.0; }
double igw_aux_shape(double nu, int d) { return nu + d; }

// -------------------------------------------------------------------------
// Two-level
// -------------------------------------------------------------------------

QStateTwoLevel init_q_state(const TwoLevelDesign& des, const HyperparametersTwoLevel& h)
{
    const int d = des.d(), m = des.m();
    validate(h, d);
    QStateTwoLevel s;
    const double N = static_cast<double>(des.total_obs());
    s.eps = make_scale_factor(h.nu_eps + N, h.nu_eps);
    for (int K : des.gbl_blocks) s.gbl.push_back(make_scale_factor(h.nu_gbl + K, h.nu_gbl));
    s.grp = make_scale_factor(h.nu_grp + static_cast<double>(m) * des.K_grp(), h.nu_grp);
    s.Sigma = make_cov_factor(d, igw_prior_shape(h.nu_Sigma, d) + m, igw_aux_shape(h.nu_Sigma, d));

    const double P = des.p() + static_cast<double>(m) * des.q();
    double c = -0.5 * N * std::log(2.0 * std::numbers::pi) + 0.5 * P -
               0.5 * spd_logdet(h.Sigma_beta, "Sigma_beta");
    c += scale_pair_const(s.eps.sigma_sq.xi, s.eps.a.xi, h.nu_eps, h.s_eps);
    for (const auto& g : s.gbl) c += scale_pair_const(g.sigma_sq.xi, g.a.xi, h.nu_gbl, h.s_gbl);
    c += scale_pair_const(s.grp.sigma_sq.xi, s.grp.a.xi, h.nu_grp, h.s_grp);
    c += cov_const(d, s.Sigma.Sigma.xi, s.Sigma.A.xi, h.nu_Sigma, h.s_Sigma);
    s.elbo_const = c;
    return s;
}

TwoLevelSparseProblem build_two_level_mfvb_blocks(const QStateTwoLevel& s, const TwoLevelDesign& des,
                                                  const HyperparametersTwoLevel& h, Execution ex)
{
    TwoLevelScales sc;
    sc.data = std::sqrt(s.eps.mu_recip_sigma_sq);
    sc.beta_rows = true;
    sc.beta_root = matrix_inv_sqrt(h.Sigma_beta);
    sc.beta_rhs = sc.beta_root * h.mu_beta;
    VectorXd per_block(static_cast<Index>(s.gbl.size()));
    for (std::size_t b = 0; b < s.gbl.size(); ++b) per_block[static_cast<Index>(b)] = std::sqrt(s.gbl[b].mu_recip_sigma_sq);
    sc.gbl = expand_blocks(des.gbl_blocks, per_block);
    sc.lin = matrix_sqrt(s.Sigma.M_Sigma_inv);
    sc.grp = std::sqrt(s.grp.mu_recip_sigma_sq);
    return assemble_two_level(des, sc, ex);
}

TwoLevelCoefStats coef_stats(const TwoLevelSolution& coef, const TwoLevelDesign& des, Execution ex)
{
    const int m = des.m(), d = des.d(), Kr = des.K_grp();
    std::vector<double> sq(m), grp(m);
    std::vector<MatrixXd> lin(m);
    for_each_index(m, ex, [&](int i) {
        const auto& g = des.groups[i];
        const auto& c = coef.groups[i];
        MatrixXd Cg(g.y.size(), des.p()), Cr(g.y.size(), des.q());
        Cg << g.X, g.Zgbl;
        Cr << g.X, g.Zgrp;
        const VectorXd r = g.y - Cg * coef.x1 - Cr * c.x2;
        sq[i] = r.squaredNorm() + trace_form(Cg, coef.A11, Cg) + trace_form(Cr, c.A22, Cr) +
                2.0 * trace_form(Cg, c.A12, Cr);
        const VectorXd mu_lin = c.x2.head(d);
        lin[i] = mu_lin * mu_lin.transpose() + c.A22.topLeftCorner(d, d);
        grp[i] = c.x2.tail(Kr).squaredNorm() + c.A22.bottomRightCorner(Kr, Kr).trace();
    });
    TwoLevelCoefStats st;
    st.lin_outer = MatrixXd::Zero(d, d);
    for (int i = 0; i < m; ++i) {
        st.sq_residual += sq[i];
        st.lin_outer += lin[i];
        st.grp_sq += grp[i];
    }
    symmetrize(st.lin_outer);
    st.gbl_sq.resize(static_cast<Index>(des.gbl_blocks.size()));
    Index r = d;
    for (std::size_t b = 0; b < des.gbl_blocks.size(); ++b) {
        const int K = des.gbl_blocks[b];
        st.gbl_sq[static_cast<Index>(b)] = coef.x1.segment(r, K).squaredNorm() + coef.A11.block(r, r, K, K).trace();
        r += K;
    }
    return st;
}

void update_variance_factors(QStateTwoLevel& s, const TwoLevelDesign& des, const HyperparametersTwoLevel& h)
{
    (void)des;
    const auto& st = s.stats;
    update_scale(s.eps, st.sq_residual, "lambda_q(sigma_eps^2)");
    update_cov(s.Sigma, st.lin_outer, "Lambda_q(Sigma)");
    for (std::size_t b = 0; b < s.gbl.size(); ++b) {
        update_scale(s.gbl[b], st.gbl_sq[static_cast<Index>(b)], "lambda_q(sigma_gbl^2)");
    }
    update_scale(s.grp, st.grp_sq, "lambda_q(sigma_grp^2)");

    update_scale_aux(s.eps, h.nu_eps, h.s_eps, "lambda_q(a_eps)");
    update_cov_aux(s.Sigma, h.nu_Sigma, h.s_Sigma, "Lambda_q(A_Sigma)");
    for (auto& g : s.gbl) update_scale_aux(g, h.nu_gbl, h.s_gbl, "lambda_q(a_gbl)");
    update_scale_aux(s.grp, h.nu_grp, h.s_grp, "lambda_q(a_grp)");
}

QStateTwoLevel mfvb_cycle_two_level(const QStateTwoLevel& state, const TwoLevelDesign& des,
                                    const HyperparametersTwoLevel& h, Execution ex)
{
    QStateTwoLevel s = state;
    s.coef = solve_two_level(build_two_level_mfvb_blocks(state, des, h, ex), ex);
    check_finite(s.coef.x1, "mu_q(beta,u_gbl)");
    check_finite(s.coef.A11, "Sigma_q(beta,u_gbl)");
    s.stats = coef_stats(s.coef, des, ex);
    check_finite(s.stats.sq_residual, "expected squared residual");
    update_variance_factors(s, des, h);
    return s;
}

double elbo_two_level(const QStateTwoLevel& s, const TwoLevelDesign& des, const HyperparametersTwoLevel& h)
{
    if (s.coef.x1.size() == 0) throw ValidationError("lower bound needs a state produced by at least one cycle");
    const int d = des.d();
    const auto& st = s.stats;
    double v = s.elbo_const;
    v += -0.5 * s.eps.mu_recip_sigma_sq * st.sq_residual;

    const MatrixXd Sb_inv = spd_inverse(h.Sigma_beta, "Sigma_beta");
    const VectorXd diff = s.coef.x1.head(d) - h.mu_beta;
    v += -0.5 * (Sb_inv * (diff * diff.transpose() + s.coef.A11.topLeftCorner(d, d))).trace();
    for (std::size_t b = 0; b < s.gbl.size(); ++b) {
        v += -0.5 * s.gbl[b].mu_recip_sigma_sq * st.gbl_sq[static_cast<Index>(b)];
    }
    v += -0.5 * (s.Sigma.M_Sigma_inv * st.lin_outer).trace();
    v += -0.5 * s.grp.mu_recip_sigma_sq * st.grp_sq;
    v += -0.5 * s.coef.logdet_BtB;

    v += scale_pair_terms(s.eps, h.nu_eps, h.s_eps);
    for (const auto& g : s.gbl) v += scale_pair_terms(g, h.nu_gbl, h.s_gbl);
    v += scale_pair_terms(s.grp, h.nu_grp, h.s_grp);
    v += cov_terms(s.Sigma, h.nu_Sigma, h.s_Sigma);
    if (!std::isfinite(v)) throw NonFiniteUpdate("lower bound is not finite");
    return v;
}

double param_change(const QStateTwoLevel& prev, const QStateTwoLevel& cur)
{
    double c = rel_change(prev.coef.x1, cur.coef.x1);
    c = std::max(c, rel_change(prev.eps.sigma_sq.lambda, cur.eps.sigma_sq.lambda));
    c = std::max(c, rel_change(prev.eps.a.lambda, cur.eps.a.lambda));
    for (std::size_t b = 0; b < cur.gbl.size(); ++b) {
        c = std::max(c, rel_change(prev.gbl[b].sigma_sq.lambda, cur.gbl[b].sigma_sq.lambda));
        c = std::max(c, rel_change(prev.gbl[b].a.lambda, cur.gbl[b].a.lambda));
    }
    c = std::max(c, rel_change(prev.grp.sigma_sq.lambda, cur.grp.sigma_sq.lambda));
    c = std::max(c, rel_change(prev.grp.a.lambda, cur.grp.a.lambda));
    c = std::max(c, rel_change(prev.Sigma.Sigma.Lambda, cur.Sigma.Sigma.Lambda));
    return c;
}

MfvbFitTwoLevel fit_mfvb(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, const FitOptions& opts)
{
    if (opts.max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
    if (!(opts.rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    MfvbFitTwoLevel fit;
    fit.model = des.model;
    fit.hyper = hyper;
    fit.state = init_q_state(des, hyper);
    const bool use_elbo = opts.metric == ConvergenceMetric::Elbo;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        QStateTwoLevel next = mfvb_cycle_two_level(fit.state, des, hyper, opts.execution);
        fit.iterations = it;
        if (opts.record_elbo || (use_elbo && !opts.fixed_iterations)) {
            fit.elbo_trace.push_back(elbo_two_level(next, des, hyper));
        }
        bool done = false;
        if (!opts.fixed_iterations && it > 1) {
            if (use_elbo) {
                const double prev = fit.elbo_trace[fit.elbo_trace.size() - 2];
                done = (fit.elbo_trace.back() - prev) / std::abs(prev) < opts.rel_tol;
            } else {
                done = param_change(fit.state, next) < opts.rel_tol;
            }
        }
        fit.state = std::move(next);
        if (done) {
            fit.converged = true;
            break;
        }
    }
    if (opts.fixed_iterations) fit.converged = true;
    fit.seconds = seconds_since(t0);
    return fit;
}

CurveBand credible_band(const MfvbFitTwoLevel& fit, const VectorXd& grid, const CurveTarget& target, double level)
{
    return make_band(predict_curve(fit.model, fit.state.coef, grid, target), level);
}

// -------------------------------------------------------------------------
// Three-level
// -------------------------------------------------------------------------

QStateThreeLevel init_q_state(const ThreeLevelDesign& des, const HyperparametersThreeLevel& h)
{
    validate(h);
    QStateThreeLevel s;
    const double N = static_cast<double>(des.total_obs());
    const double m = des.m();
    const double cells = static_cast<double>(des.total_cells());
    s.eps = make_scale_factor(h.nu_eps + N, h.nu_eps);
    s.gbl = make_scale_factor(h.nu_gbl + des.K_gbl(), h.nu_gbl);
    s.grp_g = make_scale_factor(h.nu_grp_g + m * des.K_g(), h.nu_grp_g);
    s.grp_h = make_scale_factor(h.nu_grp_h + cells * des.K_h(), h.nu_grp_h);
    s.Sigma_g = make_cov_factor(2, igw_prior_shape(h.nu_Sigma_g, 2) + m, igw_aux_shape(h.nu_Sigma_g, 2));
    s.Sigma_h = make_cov_factor(2, igw_prior_shape(h.nu_Sigma_h, 2) + cells, igw_aux_shape(h.nu_Sigma_h, 2));
    return s;
}

ThreeLevelSparseProblem build_three_level_mfvb_blocks(const QStateThreeLevel& s, const ThreeLevelDesign& des,
                                                      const HyperparametersThreeLevel& h, Execution ex)
{
    ThreeLevelScales sc;
    sc.data = std::sqrt(s.eps.mu_recip_sigma_sq);
    sc.beta_rows = true;
    sc.beta_root = matrix_inv_sqrt(h.Sigma_beta);
    sc.beta_rhs = sc.beta_root * h.mu_beta;
    sc.gbl = std::sqrt(s.gbl.mu_recip_sigma_sq);
    sc.lin_g = matrix_sqrt(s.Sigma_g.M_Sigma_inv);
    sc.grp_g = std::sqrt(s.grp_g.mu_recip_sigma_sq);
    sc.lin_h = matrix_sqrt(s.Sigma_h.M_Sigma_inv);
    sc.grp_h = std::sqrt(s.grp_h.mu_recip_sigma_sq);
    return assemble_three_level(des, sc, ex);
}

ThreeLevelCoefStats coef_stats(const ThreeLevelSolution& coef, const ThreeLevelDesign& des, Execution ex)
{
    const int m = des.m(), Kg = des.K_g(), Kh = des.K_h(), Kgbl = des.K_gbl();
    std::vector<double> sq(m), grp_g(m), grp_h(m);
    std::vector<MatrixXd> lin_g(m), lin_h(m);
    for_each_index(m, ex, [&](int i) {
        const auto& gi = coef.groups[i];
        const VectorXd mu_g = gi.x2.head(2);
        lin_g[i] = mu_g * mu_g.transpose() + gi.A22.topLeftCorner(2, 2);
        grp_g[i] = gi.x2.tail(Kg).squaredNorm() + gi.A22.bottomRightCorner(Kg, Kg).trace();
        sq[i] = 0.0;
        grp_h[i] = 0.0;
        lin_h[i] = MatrixXd::Zero(2, 2);
        for (std::size_t j = 0; j < des.groups[i].size(); ++j) {
            const auto& c = des.groups[i][j];
            const auto& cj = gi.cells[j];
            const Index n = c.y.size();
            MatrixXd Cgbl(n, des.p()), Cg(n, des.q1()), Ch(n, des.q2());
            Cgbl << c.X, c.Zgbl;
            Cg << c.X, c.Zg;
            Ch << c.X, c.Zh;
            const VectorXd r = c.y - Cgbl * coef.x1 - Cg * gi.x2 - Ch * cj.x2;
            sq[i] += r.squaredNorm() + trace_form(Cgbl, coef.A11, Cgbl) + trace_form(Cg, gi.A22, Cg) +
                     trace_form(Ch, cj.A22, Ch) + 2.0 * trace_form(Cgbl, gi.A12, Cg) +
                     2.0 * trace_form(Cgbl, cj.A12, Ch) + 2.0 * trace_form(Cg, cj.A12_group, Ch);
            const VectorXd mu_h = cj.x2.head(2);
            lin_h[i] += mu_h * mu_h.transpose() + cj.A22.topLeftCorner(2, 2);
            grp_h[i] += cj.x2.tail(Kh).squaredNorm() + cj.A22.bottomRightCorner(Kh, Kh).trace();
        }
    });
    ThreeLevelCoefStats st;
    st.lin_g_outer = MatrixXd::Zero(2, 2);
    st.lin_h_outer = MatrixXd::Zero(2, 2);
    for (int i = 0; i < m; ++i) {
        st.sq_residual += sq[i];
        st.lin_g_outer += lin_g[i];
        st.lin_h_outer += lin_h[i];
        st.grp_g_sq += grp_g[i];
        st.grp_h_sq += grp_h[i];
    }
    symmetrize(st.lin_g_outer);
    symmetrize(st.lin_h_outer);
    st.gbl_sq = coef.x1.tail(Kgbl).squaredNorm() + coef.A11.bottomRightCorner(Kgbl, Kgbl).trace();
    return st;
}

void update_variance_factors(QStateThreeLevel& s, const ThreeLevelDesign& des, const HyperparametersThreeLevel& h)
{
    (void)des;
    const auto& st = s.stats;
    update_scale(s.eps, st.sq_residual, "lambda_q(sigma_eps^2)");
    update_cov(s.Sigma_g, st.lin_g_outer, "Lambda_q(Sigma_g)");
    update_cov(s.Sigma_h, st.lin_h_outer, "Lambda_q(Sigma_h)");
    update_scale(s.grp_g, st.grp_g_sq, "lambda_q(sigma_grp_g^2)");
    update_scale(s.grp_h, st.grp_h_sq, "lambda_q(sigma_grp_h^2)");
    update_scale(s.gbl, st.gbl_sq, "lambda_q(sigma_gbl^2)");

    update_scale_aux(s.eps, h.nu_eps, h.s_eps, "lambda_q(a_eps)");
    update_cov_aux(s.Sigma_g, h.nu_Sigma_g, h.s_Sigma_g, "Lambda_q(A_Sigma_g)");
    update_cov_aux(s.Sigma_h, h.nu_Sigma_h, h.s_Sigma_h, "Lambda_q(A_Sigma_h)");
    update_scale_aux(s.gbl, h.nu_gbl, h.s_gbl, "lambda_q(a_gbl)");
    update_scale_aux(s.grp_g, h.nu_grp_g, h.s_grp_g, "lambda_q(a_grp_g)");
    update_scale_aux(s.grp_h, h.nu_grp_h, h.s_grp_h, "lambda_q(a_grp_h)");
}

QStateThreeLevel mfvb_cycle_three_level(const QStateThreeLevel& state, const ThreeLevelDesign& des,
                                        const HyperparametersThreeLevel& h, Execution ex)
{
    QStateThreeLevel s = state;
    s.coef = solve_three_level(build_three_level_mfvb_blocks(state, des, h, ex), ex);
    check_finite(s.coef.x1, "mu_q(beta,u_gbl)");
    check_finite(s.coef.A11, "Sigma_q(beta,u_gbl)");
    s.stats = coef_stats(s.coef, des, ex);
    check_finite(s.stats.sq_residual, "expected squared residual");
    update_variance_factors(s, des, h);
    return s;
}

double param_change(const QStateThreeLevel& prev, const QStateThreeLevel& cur)
{
    double c = rel_change(prev.coef.x1, cur.coef.x1);
    for (auto [a, b] : {std::pair{&prev.eps, &cur.eps}, {&prev.gbl, &cur.gbl}, {&prev.grp_g, &cur.grp_g},
                        {&prev.grp_h, &cur.grp_h}}) {
        c = std::max(c, rel_change(a->sigma_sq.lambda, b->sigma_sq.lambda));
        c = std::max(c, rel_change(a->a.lambda, b->a.lambda));
    }
    c = std::max(c, rel_change(prev.Sigma_g.Sigma.Lambda, cur.Sigma_g.Sigma.Lambda));
    c = std::max(c, rel_change(prev.Sigma_h.Sigma.Lambda, cur.Sigma_h.Sigma.Lambda));
    return c;
}

MfvbFitThreeLevel fit_mfvb(const ThreeLevelDesign& des, const HyperparametersThreeLevel& hyper, FitOptions opts)
{
    if (opts.max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
    if (!(opts.rel_tol > 0.0)) throw ValidationError("rel_tol must be positive");
    const auto t0 = std::chrono::steady_clock::now();
    MfvbFitThreeLevel fit;
    fit.model = des.model;
    fit.hyper = hyper;
    fit.state = init_q_state(des, hyper);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        QStateThreeLevel next = mfvb_cycle_three_level(fit.state, des, hyper, opts.execution);
        fit.iterations = it;
        bool done = false;
        if (it > 1) {
            const double change = param_change(fit.state, next);
            fit.change_trace.push_back(change);
            done = !opts.fixed_iterations && change < opts.rel_tol;
        }
        fit.state = std::move(next);
        if (done) {
            fit.converged = true;
            break;
        }
    }
    if (opts.fixed_iterations) fit.converged = true;
    fit.seconds = seconds_since(t0);
    return fit;
}

CurveBand credible_band(const MfvbFitThreeLevel& fit, const VectorXd& grid, const CurveTarget& target, double level)
{
    return make_band(predict_curve(fit.model, fit.state.coef, grid, target), level);
}

} // namespace curvestream
