#pragma once

#include "curvestream/splines.hpp"

#include <string>
#include <vector>

namespace curvestream {

// ---------------------------------------------------------------------------
// Raw data
// ---------------------------------------------------------------------------

struct TwoLevelGroupData {
    VectorXd x, y;
    std::vector<int> category;  // optional; 1 = category A, 0 = category B
};

struct TwoLevelDataset {
    std::vector<std::string> labels;
    std::vector<TwoLevelGroupData> groups;

    std::size_t total_obs() const;
    VectorXd all_x() const;
};

struct ThreeLevelCellData {
    VectorXd x, y;
};

struct ThreeLevelGroupData {
    std::vector<std::string> labels;
    std::vector<ThreeLevelCellData> cells;
};

struct ThreeLevelDataset {
    std::vector<std::string> labels;
    std::vector<ThreeLevelGroupData> groups;

    std::size_t total_obs() const;
    std::size_t total_cells() const;
    VectorXd all_x() const;
};

// ---------------------------------------------------------------------------
// Design matrices
// ---------------------------------------------------------------------------

enum class Layout { Standard, Contrast };

struct TwoLevelCurveModel {
    Layout layout = Layout::Standard;
    SplineBasis gbl_basis, grp_basis;
    std::vector<std::string> labels;
};

struct GroupDesign {
    VectorXd y;
    MatrixXd X, Zgbl, Zgrp;
};

struct TwoLevelDesign {
    TwoLevelCurveModel model;
    // Sizes of the consecutive Zgbl column blocks that carry their own variance.
    std::vector<int> gbl_blocks;
    std::vector<GroupDesign> groups;

    int m() const { return static_cast<int>(groups.size()); }
    int d() const { return static_cast<int>(groups.front().X.cols()); }
    int K_gbl() const { return static_cast<int>(groups.front().Zgbl.cols()); }
    int K_grp() const { return static_cast<int>(groups.front().Zgrp.cols()); }
    int p() const { return d() + K_gbl(); }
    int q() const { return d() + K_grp(); }
    std::size_t total_obs() const;
};

struct ThreeLevelCurveModel {
    SplineBasis gbl_basis, g_basis, h_basis;
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> sublabels;
};

struct CellDesign {
    VectorXd y;
    MatrixXd X, Zgbl, Zg, Zh;
};

struct ThreeLevelDesign {
    ThreeLevelCurveModel model;
    std::vector<std::vector<CellDesign>> groups;

    int m() const { return static_cast<int>(groups.size()); }
    int K_gbl() const { return static_cast<int>(groups.front().front().Zgbl.cols()); }
    int K_g() const { return static_cast<int>(groups.front().front().Zg.cols()); }
    int K_h() const { return static_cast<int>(groups.front().front().Zh.cols()); }
    int p() const { return 2 + K_gbl(); }
    int q1() const { return 2 + K_g(); }
    int q2() const { return 2 + K_h(); }
    std::size_t total_obs() const;
    std::size_t total_cells() const;
};

inline constexpr int kDefaultGlobalKnots = 20;
inline constexpr int kDefaultGroupKnots = 10;

void validate(const TwoLevelDataset& data);
void validate(const ThreeLevelDataset& data);

TwoLevelDesign build_two_level_design(const TwoLevelDataset& data, const SplineBasis& gbl, const SplineBasis& grp);
TwoLevelDesign build_two_level_design(const TwoLevelDataset& data, int gbl_knots = kDefaultGlobalKnots,
                                      int grp_knots = kDefaultGroupKnots);

ThreeLevelDesign build_three_level_design(const ThreeLevelDataset& data, const SplineBasis& gbl,
                                          const SplineBasis& g, const SplineBasis& h);
ThreeLevelDesign build_three_level_design(const ThreeLevelDataset& data, int gbl_knots = kDefaultGlobalKnots,
                                          int g_knots = kDefaultGroupKnots, int h_knots = kDefaultGroupKnots);

// Returns the dense index of `label`, throwing UnknownGroup otherwise.
int find_label(const std::vector<std::string>& labels, const std::string& label);

} // namespace curvestream
