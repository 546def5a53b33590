#pragma once

#include "curvestream/design.hpp"
#include "curvestream/solvers.hpp"

namespace curvestream {

struct CurveTarget {
    enum class Kind { Global, Group, Subgroup };
    Kind kind = Kind::Global;
    int group = -1;
    int subgroup = -1;

    static CurveTarget global() { return {}; }
    static CurveTarget of_group(int i) { return {Kind::Group, i, -1}; }
    static CurveTarget of_subgroup(int i, int j) { return {Kind::Subgroup, i, j}; }
};

struct CurveEstimate {
    VectorXd x, mean, sd;
};

struct CurveBand {
    VectorXd x, mean, sd, lower, upper;
    double level = 0.0;
};

inline constexpr int kDefaultGridPoints = 201;

// Equispaced grid over the basis boundary.
VectorXd default_grid(const SplineBasis& basis, int points = kDefaultGridPoints);

// Pointwise mean and standard deviation of the fitted curve from the coefficient blocks.
CurveEstimate predict_curve(const TwoLevelCurveModel& model, const TwoLevelSolution& coef, const VectorXd& grid,
                            const CurveTarget& target);
CurveEstimate predict_curve(const ThreeLevelCurveModel& model, const ThreeLevelSolution& coef,
                            const VectorXd& grid, const CurveTarget& target);

// mean +/- z sd with z the (1 + level)/2 standard normal quantile.
CurveBand make_band(const CurveEstimate& est, double level);

// Standard normal CDF and quantile.
double normal_cdf(double x);
double normal_quantile(double p);

} // namespace curvestream
