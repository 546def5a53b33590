#pragma once

#include "curvestream/design.hpp"
#include "curvestream/solvers.hpp"

namespace curvestream {

// Scalings that turn a design into the b/B/Bdot blocks of the sparse least-squares form.
// Row order within a group: data, [fixed-effect prior], global spline, group linear, group spline.
struct TwoLevelScales {
    double data = 1.0;
    bool beta_rows = false;
    MatrixXd beta_root;  // upper S with S^T S = Sigma_beta^{-1}
    VectorXd beta_rhs;   // S mu_beta
    VectorXd gbl;        // one entry per global spline column
    MatrixXd lin;        // upper S with S^T S = (precision of the group linear effects)
    double grp = 1.0;
};

struct ThreeLevelScales {
    double data = 1.0;
    bool beta_rows = false;
    MatrixXd beta_root;
    VectorXd beta_rhs;
    double gbl = 1.0;
    MatrixXd lin_g;
    double grp_g = 1.0;
    MatrixXd lin_h;
    double grp_h = 1.0;
};

TwoLevelSparseProblem assemble_two_level(const TwoLevelDesign& des, const TwoLevelScales& sc,
                                         Execution ex = Execution::Parallel);
ThreeLevelSparseProblem assemble_three_level(const ThreeLevelDesign& des, const ThreeLevelScales& sc,
                                             Execution ex = Execution::Parallel);

// Expands per-block values to one value per global spline column.
VectorXd expand_blocks(const std::vector<int>& blocks, const VectorXd& per_block);

} // namespace curvestream
