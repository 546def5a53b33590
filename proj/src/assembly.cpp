#include "curvestream/assembly.hpp"

#include "curvestream/errors.hpp"

#include <cmath>

namespace curvestream {

VectorXd expand_blocks(const std::vector<int>& blocks, const VectorXd& per_block)
{
    if (static_cast<Eigen::Index>(blocks.size()) != per_block.size()) {
        throw DimensionMismatch("global variance block count mismatch");
    }
    int total = 0;
    for (int b : blocks) total += b;
    VectorXd out(total);
    int r = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        out.segment(r, blocks[k]).setConstant(per_block[static_cast<Eigen::Index>(k)]);
        r += blocks[k];
    }
    return out;
}

TwoLevelSparseProblem assemble_two_level(const TwoLevelDesign& des, const TwoLevelScales& sc, Execution ex)
{
    const int m = des.m();
    const int d = des.d(), Kg = des.K_gbl(), Kr = des.K_grp();
    const int p = d + Kg, q = d + Kr;
    const int nbeta = sc.beta_rows ? d : 0;
    if (sc.gbl.size() != Kg || sc.lin.rows() != d || sc.lin.cols() != d) {
        throw DimensionMismatch("two-level scale dimensions do not match the design");
    }
    if (sc.beta_rows && (sc.beta_root.rows() != d || sc.beta_rhs.size() != d)) {
        throw DimensionMismatch("fixed-effect prior dimensions do not match the design");
    }
    const double root_m = 1.0 / std::sqrt(static_cast<double>(m));

    TwoLevelSparseProblem prob;
    prob.groups.resize(m);
    for_each_index(m, ex, [&](int i) {
        const auto& g = des.groups[i];
        const int n = static_cast<int>(g.y.size());
        const int rows = n + nbeta + Kg + d + Kr;
        auto& blk = prob.groups[i];
        blk.b = VectorXd::Zero(rows);
        blk.B = MatrixXd::Zero(rows, p);
        blk.Bdot = MatrixXd::Zero(rows, q);

        blk.b.head(n) = sc.data * g.y;
        blk.B.block(0, 0, n, d) = sc.data * g.X;
        blk.B.block(0, d, n, Kg) = sc.data * g.Zgbl;
        blk.Bdot.block(0, 0, n, d) = sc.data * g.X;
        blk.Bdot.block(0, d, n, Kr) = sc.data * g.Zgrp;
        int r = n;
        if (sc.beta_rows) {
            blk.b.segment(r, d) = root_m * sc.beta_rhs;
            blk.B.block(r, 0, d, d) = root_m * sc.beta_root;
            r += d;
        }
        blk.B.block(r, d, Kg, Kg).diagonal() = root_m * sc.gbl;
        r += Kg;
        blk.Bdot.block(r, 0, d, d) = sc.lin;
        r += d;
        blk.Bdot.block(r, d, Kr, Kr).diagonal().setConstant(sc.grp);
    });
    return prob;
}

ThreeLevelSparseProblem assemble_three_level(const ThreeLevelDesign& des, const ThreeLevelScales& sc, Execution ex)
{
    const int m = des.m();
    const int Kgbl = des.K_gbl(), Kg = des.K_g(), Kh = des.K_h();
    const int p = des.p(), q1 = des.q1(), q2 = des.q2();
    const int nbeta = sc.beta_rows ? 2 : 0;
    if (sc.lin_g.rows() != 2 || sc.lin_h.rows() != 2) throw DimensionMismatch("three-level linear scale must be 2x2");
    const double root_ndot = 1.0 / std::sqrt(static_cast<double>(des.total_cells()));

    ThreeLevelSparseProblem prob;
    prob.groups.resize(m);
    for_each_index(m, ex, [&](int i) {
        const auto& cells = des.groups[i];
        const double root_ni = 1.0 / std::sqrt(static_cast<double>(cells.size()));
        auto& out = prob.groups[i];
        out.resize(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto& c = cells[j];
            const int n = static_cast<int>(c.y.size());
            const int rows = n + nbeta + Kgbl + 2 + Kg + 2 + Kh;
            auto& blk = out[j];
            blk.b = VectorXd::Zero(rows);
            blk.B = MatrixXd::Zero(rows, p);
            blk.Bdot = MatrixXd::Zero(rows, q1);
            blk.Bddot = MatrixXd::Zero(rows, q2);

            blk.b.head(n) = sc.data * c.y;
            blk.B.block(0, 0, n, 2) = sc.data * c.X;
            blk.B.block(0, 2, n, Kgbl) = sc.data * c.Zgbl;
            blk.Bdot.block(0, 0, n, 2) = sc.data * c.X;
            blk.Bdot.block(0, 2, n, Kg) = sc.data * c.Zg;
            blk.Bddot.block(0, 0, n, 2) = sc.data * c.X;
            blk.Bddot.block(0, 2, n, Kh) = sc.data * c.Zh;
            int r = n;
            if (sc.beta_rows) {
                blk.b.segment(r, 2) = root_ndot * sc.beta_rhs;
                blk.B.block(r, 0, 2, 2) = root_ndot * sc.beta_root;
                r += 2;
            }
            blk.B.block(r, 2, Kgbl, Kgbl).diagonal().setConstant(root_ndot * sc.gbl);
            r += Kgbl;
            blk.Bdot.block(r, 0, 2, 2) = root_ni * sc.lin_g;
            r += 2;
            blk.Bdot.block(r, 2, Kg, Kg).diagonal().setConstant(root_ni * sc.grp_g);
            r += Kg;
            blk.Bddot.block(r, 0, 2, 2) = sc.lin_h;
            r += 2;
            blk.Bddot.block(r, 2, Kh, Kh).diagonal().setConstant(sc.grp_h);
        }
    });
    return prob;
}

} // namespace curvestream
