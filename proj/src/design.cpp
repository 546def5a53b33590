#include "curvestream/design.hpp"

#include "curvestream/errors.hpp"

#include <algorithm>

namespace curvestream {

std::size_t TwoLevelDataset::total_obs() const
{
    std::size_t n = 0;
    for (const auto& g : groups) n += static_cast<std::size_t>(g.x.size());
    return n;
}

VectorXd TwoLevelDataset::all_x() const
{
    VectorXd x(static_cast<Eigen::Index>(total_obs()));
    Eigen::Index r = 0;
    for (const auto& g : groups) {
        x.segment(r, g.x.size()) = g.x;
        r += g.x.size();
    }
    return x;
}

std::size_t ThreeLevelDataset::total_obs() const
{
    std::size_t n = 0;
    for (const auto& g : groups)
        for (const auto& c : g.cells) n += static_cast<std::size_t>(c.x.size());
    return n;
}

std::size_t ThreeLevelDataset::total_cells() const
{
    std::size_t n = 0;
    for (const auto& g : groups) n += g.cells.size();
    return n;
}

VectorXd ThreeLevelDataset::all_x() const
{
    VectorXd x(static_cast<Eigen::Index>(total_obs()));
    Eigen::Index r = 0;
    for (const auto& g : groups)
        for (const auto& c : g.cells) {
            x.segment(r, c.x.size()) = c.x;
            r += c.x.size();
        }
    return x;
}

std::size_t TwoLevelDesign::total_obs() const
{
    std::size_t n = 0;
    for (const auto& g : groups) n += static_cast<std::size_t>(g.y.size());
    return n;
}

std::size_t ThreeLevelDesign::total_obs() const
{
    std::size_t n = 0;
    for (const auto& g : groups)
        for (const auto& c : g) n += static_cast<std::size_t>(c.y.size());
    return n;
}

std::size_t ThreeLevelDesign::total_cells() const
{
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
}

void validate(const TwoLevelDataset& data)
{
    if (data.groups.empty()) throw ValidationError("dataset has no groups");
    if (data.labels.size() != data.groups.size()) throw ValidationError("group label count does not match groups");
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        if (g.x.size() == 0) throw ValidationError("group '" + data.labels[i] + "' has no observations");
        if (g.x.size() != g.y.size()) throw ValidationError("group '" + data.labels[i] + "': x and y lengths differ");
        if (!g.x.allFinite() || !g.y.allFinite()) throw ValidationError("group '" + data.labels[i] + "': non-finite value");
        if (!g.category.empty() && g.category.size() != static_cast<std::size_t>(g.x.size())) {
            throw ValidationError("group '" + data.labels[i] + "': category length differs");
        }
    }
}

void validate(const ThreeLevelDataset& data)
{
    if (data.groups.empty()) throw ValidationError("dataset has no groups");
    if (data.labels.size() != data.groups.size()) throw ValidationError("group label count does not match groups");
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        if (g.cells.empty()) throw ValidationError("group '" + data.labels[i] + "' has no subgroups");
        if (g.labels.size() != g.cells.size()) throw ValidationError("subgroup label count mismatch in group '" + data.labels[i] + "'");
        for (std::size_t j = 0; j < g.cells.size(); ++j) {
            const auto& c = g.cells[j];
            const std::string tag = "subgroup '" + data.labels[i] + "/" + g.labels[j] + "'";
            if (c.x.size() == 0) throw ValidationError(tag + " has no observations");
            if (c.x.size() != c.y.size()) throw ValidationError(tag + ": x and y lengths differ");
            if (!c.x.allFinite() || !c.y.allFinite()) throw ValidationError(tag + ": non-finite value");
        }
    }
}

TwoLevelDesign build_two_level_design(const TwoLevelDataset& data, const SplineBasis& gbl, const SplineBasis& grp)
{
    validate(data);
    TwoLevelDesign des;
    des.model.layout = Layout::Standard;
    des.model.gbl_basis = gbl;
    des.model.grp_basis = grp;
    des.model.labels = data.labels;
    des.gbl_blocks = {gbl.K()};
    des.groups.resize(data.groups.size());
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        auto& out = des.groups[i];
        out.y = g.y;
        out.X = linear_design(g.x);
        out.Zgbl = osullivan_basis(g.x, gbl);
        out.Zgrp = osullivan_basis(g.x, grp);
    }
    return des;
}

TwoLevelDesign build_two_level_design(const TwoLevelDataset& data, int gbl_knots, int grp_knots)
{
    validate(data);
    const VectorXd x = data.all_x();
    return build_two_level_design(data, make_spline_basis(x, gbl_knots), make_spline_basis(x, grp_knots));
}

ThreeLevelDesign build_three_level_design(const ThreeLevelDataset& data, const SplineBasis& gbl,
                                          const SplineBasis& g, const SplineBasis& h)
{
    validate(data);
    ThreeLevelDesign des;
    des.model.gbl_basis = gbl;
    des.model.g_basis = g;
    des.model.h_basis = h;
    des.model.labels = data.labels;
    des.groups.resize(data.groups.size());
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        des.model.sublabels.push_back(data.groups[i].labels);
        for (const auto& c : data.groups[i].cells) {
            CellDesign cd;
            cd.y = c.y;
            cd.X = linear_design(c.x);
            cd.Zgbl = osullivan_basis(c.x, gbl);
            cd.Zg = osullivan_basis(c.x, g);
            cd.Zh = osullivan_basis(c.x, h);
            des.groups[i].push_back(std::move(cd));
        }
    }
    return des;
}

ThreeLevelDesign build_three_level_design(const ThreeLevelDataset& data, int gbl_knots, int g_knots, int h_knots)
{
    validate(data);
    const VectorXd x = data.all_x();
    return build_three_level_design(data, make_spline_basis(x, gbl_knots), make_spline_basis(x, g_knots),
                                    make_spline_basis(x, h_knots));
}

int find_label(const std::vector<std::string>& labels, const std::string& label)
{
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw UnknownGroup("unknown group label '" + label + "'");
    return static_cast<int>(it - labels.begin());
}

} // namespace curvestream
