#pragma once

#include "curvestream/assembly.hpp"
#include "curvestream/curves.hpp"

namespace curvestream {

struct VarianceParamsTwoLevel {
    double sigma_eps_sq = 1.0;
    double sigma_gbl_sq = 1.0;
    double sigma_grp_sq = 1.0;
    MatrixXd Sigma = MatrixXd::Identity(2, 2);
};

struct VarianceParamsThreeLevel {
    double sigma_eps_sq = 1.0;
    double sigma_gbl_sq = 1.0;
    double sigma_grp_g_sq = 1.0;
    double sigma_grp_h_sq = 1.0;
    MatrixXd Sigma_g = MatrixXd::Identity(2, 2);
    MatrixXd Sigma_h = MatrixXd::Identity(2, 2);
};

void validate(const VarianceParamsTwoLevel& v);
void validate(const VarianceParamsThreeLevel& v);

struct BlupFitTwoLevel {
    TwoLevelCurveModel model;
    VarianceParamsTwoLevel var;
    TwoLevelSolution coef;  // x1 = (beta, u_gbl), A11 = Cov; per group (u_lin, u_grp) blocks
};

struct BlupFitThreeLevel {
    ThreeLevelCurveModel model;
    VarianceParamsThreeLevel var;
    ThreeLevelSolution coef;
};

TwoLevelSparseProblem build_two_level_blup_blocks(const TwoLevelDesign& des, const VarianceParamsTwoLevel& var,
                                                  Execution ex = Execution::Parallel);
BlupFitTwoLevel fit_blup_two_level(const TwoLevelDesign& des, const VarianceParamsTwoLevel& var,
                                   Execution ex = Execution::Parallel);

ThreeLevelSparseProblem build_three_level_blup_blocks(const ThreeLevelDesign& des, const VarianceParamsThreeLevel& var,
                                                      Execution ex = Execution::Parallel);
BlupFitThreeLevel fit_blup_three_level(const ThreeLevelDesign& des, const VarianceParamsThreeLevel& var,
                                       Execution ex = Execution::Parallel);

inline CurveEstimate predict_curve(const BlupFitTwoLevel& fit, const VectorXd& grid, const CurveTarget& target)
{
    return predict_curve(fit.model, fit.coef, grid, target);
}
inline CurveEstimate predict_curve(const BlupFitThreeLevel& fit, const VectorXd& grid, const CurveTarget& target)
{
    return predict_curve(fit.model, fit.coef, grid, target);
}

} // namespace curvestream
