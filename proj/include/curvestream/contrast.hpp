#pragma once

#include "curvestream/mfvb.hpp"

namespace curvestream {

// Two-category layout. Every observation carries category 1 (A) or 0 (B):
//   X    = [1, x, 1 - iota, (1 - iota) x]
//   Zgbl = [iota . Z_gbl, (1 - iota) . Z_gbl]   with one variance per block
//   Zgrp = [iota . Z_grp, (1 - iota) . Z_grp]   sharing one variance
TwoLevelDesign build_contrast_design(const TwoLevelDataset& data, const SplineBasis& gbl, const SplineBasis& grp);
TwoLevelDesign build_contrast_design(const TwoLevelDataset& data, int gbl_knots = kDefaultGlobalKnots,
                                     int grp_knots = kDefaultGroupKnots);

struct ContrastFit {
    MfvbFitTwoLevel mfvb;
};

ContrastFit fit_contrast(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, const FitOptions& opts = {});
ContrastFit fit_contrast(const TwoLevelDataset& data, const FitOptions& opts = {},
                         int gbl_knots = kDefaultGlobalKnots, int grp_knots = kDefaultGroupKnots);

// Rows pick the coefficients of c(x) = f_B(x) - f_A(x) out of (beta, u_gbl).
MatrixXd contrast_selector(const TwoLevelCurveModel& model, const VectorXd& grid);

CurveBand contrast_curve(const ContrastFit& fit, const VectorXd& grid, double level);

} // namespace curvestream
