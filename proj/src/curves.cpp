#include "curvestream/curves.hpp"

#include "curvestream/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace curvestream {

namespace {

MatrixXd spline_rows(const VectorXd& grid, const SplineBasis& basis)
{
    MatrixXd C(grid.size(), 2 + basis.K());
    C.leftCols(2) = linear_design(grid);
    C.rightCols(basis.K()) = osullivan_basis(grid, basis);
    return C;
}

// Row-wise quadratic forms c_k^T A e_k for rows c_k of L and e_k of R.
VectorXd row_forms(const MatrixXd& L, const MatrixXd& A, const MatrixXd& R)
{
    return ((L * A).array() * R.array()).rowwise().sum();
}

VectorXd finish_sd(const VectorXd& var)
{
    VectorXd sd(var.size());
    for (Eigen::Index k = 0; k < var.size(); ++k) {
        if (!(var[k] > 0.0)) throw NumericalError("non-positive prediction variance at grid point " + std::to_string(k));
        sd[k] = std::sqrt(var[k]);
    }
    return sd;
}

} // namespace

VectorXd default_grid(const SplineBasis& basis, int points)
{
    if (points < 2) throw ValidationError("grid needs at least two points");
    return VectorXd::LinSpaced(points, basis.a, basis.b);
}

CurveEstimate predict_curve(const TwoLevelCurveModel& model, const TwoLevelSolution& coef, const VectorXd& grid,
                            const CurveTarget& target)
{
    if (model.layout != Layout::Standard) {
        throw ValidationError("curve prediction needs a standard two-level fit; use the contrast curve instead");
    }
    const MatrixXd Cg = spline_rows(grid, model.gbl_basis);
    CurveEstimate out;
    out.x = grid;
    out.mean = Cg * coef.x1;
    VectorXd var = row_forms(Cg, coef.A11, Cg);
    if (target.kind == CurveTarget::Kind::Group) {
        if (target.group < 0 || target.group >= static_cast<int>(coef.groups.size())) {
            throw UnknownGroup("group index " + std::to_string(target.group) + " out of range");
        }
        const auto& g = coef.groups[target.group];
        const MatrixXd Cr = spline_rows(grid, model.grp_basis);
        out.mean += Cr * g.x2;
        var += row_forms(Cr, g.A22, Cr) + 2.0 * row_forms(Cg, g.A12, Cr);
    } else if (target.kind == CurveTarget::Kind::Subgroup) {
        throw ValidationError("subgroup targets need a three-level fit");
    }
    out.sd = finish_sd(var);
    return out;
}

CurveEstimate predict_curve(const ThreeLevelCurveModel& model, const ThreeLevelSolution& coef,
                            const VectorXd& grid, const CurveTarget& target)
{
    const MatrixXd Cgbl = spline_rows(grid, model.gbl_basis);
    CurveEstimate out;
    out.x = grid;
    out.mean = Cgbl * coef.x1;
    VectorXd var = row_forms(Cgbl, coef.A11, Cgbl);
    if (target.kind != CurveTarget::Kind::Global) {
        if (target.group < 0 || target.group >= static_cast<int>(coef.groups.size())) {
            throw UnknownGroup("group index " + std::to_string(target.group) + " out of range");
        }
        const auto& g = coef.groups[target.group];
        const MatrixXd Cg = spline_rows(grid, model.g_basis);
        out.mean += Cg * g.x2;
        var += row_forms(Cg, g.A22, Cg) + 2.0 * row_forms(Cgbl, g.A12, Cg);
        if (target.kind == CurveTarget::Kind::Subgroup) {
            if (target.subgroup < 0 || target.subgroup >= static_cast<int>(g.cells.size())) {
                throw UnknownGroup("subgroup index " + std::to_string(target.subgroup) + " out of range");
            }
            const auto& c = g.cells[target.subgroup];
            const MatrixXd Ch = spline_rows(grid, model.h_basis);
            out.mean += Ch * c.x2;
            var += row_forms(Ch, c.A22, Ch) + 2.0 * row_forms(Cgbl, c.A12, Ch) + 2.0 * row_forms(Cg, c.A12_group, Ch);
        }
    }
    out.sd = finish_sd(var);
    return out;
}

CurveBand make_band(const CurveEstimate& est, double level)
{
    if (!(level >= 0.0 && level < 1.0)) throw ValidationError("band level must lie in [0, 1)");
    const double z = level == 0.0 ? 0.0 : normal_quantile(0.5 * (1.0 + level));
    CurveBand band;
    band.x = est.x;
    band.mean = est.mean;
    band.sd = est.sd;
    band.lower = est.mean - z * est.sd;
    band.upper = est.mean + z * est.sd;
    band.level = level;
    return band;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal quantile needs 0 < p < 1");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

} // namespace curvestream
