#include "curvestream/blup.hpp"

#include "curvestream/distributions.hpp"
#include "curvestream/errors.hpp"

#include <cmath>

namespace curvestream {

namespace {

void check_positive(double v, const char* name)
{
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be positive and finite");
}

void check_cov(const MatrixXd& S, const char* name)
{
    if (S.rows() != S.cols()) throw DimensionMismatch(std::string(name) + " must be square");
    Eigen::LLT<MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite(std::string(name) + " is not positive definite");
}

} // namespace

void validate(const VarianceParamsTwoLevel& v)
{
    check_positive(v.sigma_eps_sq, "sigma_eps_sq");
    check_positive(v.sigma_gbl_sq, "sigma_gbl_sq");
    check_positive(v.sigma_grp_sq, "sigma_grp_sq");
    check_cov(v.Sigma, "Sigma");
}

void validate(const VarianceParamsThreeLevel& v)
{
    check_positive(v.sigma_eps_sq, "sigma_eps_sq");
    check_positive(v.sigma_gbl_sq, "sigma_gbl_sq");
    check_positive(v.sigma_grp_g_sq, "sigma_grp_g_sq");
    check_positive(v.sigma_grp_h_sq, "sigma_grp_h_sq");
    check_cov(v.Sigma_g, "Sigma_g");
    check_cov(v.Sigma_h, "Sigma_h");
}

TwoLevelSparseProblem build_two_level_blup_blocks(const TwoLevelDesign& des, const VarianceParamsTwoLevel& var,
                                                  Execution ex)
{
    validate(var);
    if (var.Sigma.rows() != des.d()) throw DimensionMismatch("Sigma dimension does not match the design");
    TwoLevelScales sc;
    sc.data = 1.0 / std::sqrt(var.sigma_eps_sq);
    sc.gbl = VectorXd::Constant(des.K_gbl(), 1.0 / std::sqrt(var.sigma_gbl_sq));
    sc.lin = matrix_inv_sqrt(var.Sigma);
    sc.grp = 1.0 / std::sqrt(var.sigma_grp_sq);
    return assemble_two_level(des, sc, ex);
}

BlupFitTwoLevel fit_blup_two_level(const TwoLevelDesign& des, const VarianceParamsTwoLevel& var, Execution ex)
{
    BlupFitTwoLevel fit;
    fit.model = des.model;
    fit.var = var;
    fit.coef = solve_two_level(build_two_level_blup_blocks(des, var, ex), ex);
    return fit;
}

ThreeLevelSparseProblem build_three_level_blup_blocks(const ThreeLevelDesign& des, const VarianceParamsThreeLevel& var,
                                                      Execution ex)
{
    validate(var);
    ThreeLevelScales sc;
    sc.data = 1.0 / std::sqrt(var.sigma_eps_sq);
    sc.gbl = 1.0 / std::sqrt(var.sigma_gbl_sq);
    sc.lin_g = matrix_inv_sqrt(var.Sigma_g);
    sc.grp_g = 1.0 / std::sqrt(var.sigma_grp_g_sq);
    sc.lin_h = matrix_inv_sqrt(var.Sigma_h);
    sc.grp_h = 1.0 / std::sqrt(var.sigma_grp_h_sq);
    return assemble_three_level(des, sc, ex);
}

BlupFitThreeLevel fit_blup_three_level(const ThreeLevelDesign& des, const VarianceParamsThreeLevel& var, Execution ex)
{
    BlupFitThreeLevel fit;
    fit.model = des.model;
    fit.var = var;
    fit.coef = solve_three_level(build_three_level_blup_blocks(des, var, ex), ex);
    return fit;
}

} // namespace curvestream
