#include "curvestream/contrast.hpp"

#include "curvestream/errors.hpp"

#include <spdlog/spdlog.h>

namespace curvestream {

namespace {

VectorXd iota_of(const TwoLevelGroupData& g, const std::string& label)
{
    if (g.category.empty()) throw ValidationError("group '" + label + "' has no category column");
    VectorXd iota(g.x.size());
    for (Eigen::Index k = 0; k < iota.size(); ++k) {
        const int c = g.category[static_cast<std::size_t>(k)];
        if (c != 0 && c != 1) throw ValidationError("group '" + label + "': category must be 0 or 1");
        iota[k] = c;
    }
    return iota;
}

MatrixXd masked_pair(const MatrixXd& Z, const VectorXd& iota)
{
    MatrixXd out(Z.rows(), 2 * Z.cols());
    out << iota.asDiagonal() * Z, (1.0 - iota.array()).matrix().asDiagonal() * Z;
    return out;
}

} // namespace

TwoLevelDesign build_contrast_design(const TwoLevelDataset& data, const SplineBasis& gbl, const SplineBasis& grp)
{
    validate(data);
    TwoLevelDesign des;
    des.model.layout = Layout::Contrast;
    des.model.gbl_basis = gbl;
    des.model.grp_basis = grp;
    des.model.labels = data.labels;
    des.gbl_blocks = {gbl.K(), gbl.K()};
    des.groups.resize(data.groups.size());
    double n_a = 0.0, n = 0.0;
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        const VectorXd iota = iota_of(g, data.labels[i]);
        n_a += iota.sum();
        n += static_cast<double>(iota.size());
        auto& out = des.groups[i];
        out.y = g.y;
        const VectorXd b = 1.0 - iota.array();
        out.X.resize(g.x.size(), 4);
        out.X << VectorXd::Ones(g.x.size()), g.x, b, b.cwiseProduct(g.x);
        out.Zgbl = masked_pair(osullivan_basis(g.x, gbl), iota);
        out.Zgrp = masked_pair(osullivan_basis(g.x, grp), iota);
    }
    if (n_a == 0.0 || n_a == n) {
        spdlog::warn("contrast design: only one category present");
        throw SingleCategory("both categories must be present for a contrast fit");
    }
    return des;
}

TwoLevelDesign build_contrast_design(const TwoLevelDataset& data, int gbl_knots, int grp_knots)
{
    validate(data);
    const VectorXd x = data.all_x();
    return build_contrast_design(data, make_spline_basis(x, gbl_knots), make_spline_basis(x, grp_knots));
}

ContrastFit fit_contrast(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, const FitOptions& opts)
{
    if (des.model.layout != Layout::Contrast) throw ValidationError("fit_contrast needs a contrast-layout design");
    return {fit_mfvb(des, hyper, opts)};
}

ContrastFit fit_contrast(const TwoLevelDataset& data, const FitOptions& opts, int gbl_knots, int grp_knots)
{
    return fit_contrast(build_contrast_design(data, gbl_knots, grp_knots), HyperparametersTwoLevel::defaults(4), opts);
}

MatrixXd contrast_selector(const TwoLevelCurveModel& model, const VectorXd& grid)
{
    if (model.layout != Layout::Contrast) throw ValidationError("contrast selector needs a contrast-layout model");
    const MatrixXd Z = osullivan_basis(grid, model.gbl_basis);
    const Eigen::Index K = Z.cols();
    MatrixXd S = MatrixXd::Zero(grid.size(), 4 + 2 * K);
    S.col(2).setOnes();
    S.col(3) = grid;
    S.middleCols(4, K) = -Z;
    S.middleCols(4 + K, K) = Z;
    return S;
}

CurveBand contrast_curve(const ContrastFit& fit, const VectorXd& grid, double level)
{
    const auto& coef = fit.mfvb.state.coef;
    const MatrixXd S = contrast_selector(fit.mfvb.model, grid);
    if (S.cols() != coef.x1.size()) throw DimensionMismatch("contrast selector does not match the fit");
    CurveEstimate est;
    est.x = grid;
    est.mean = S * coef.x1;
    est.sd = ((S * coef.A11).array() * S.array()).rowwise().sum().max(0.0).sqrt().matrix();
    return make_band(est, level);
}

} // namespace curvestream
