#include "curvestream/solvers.hpp"

#include "curvestream/errors.hpp"

#include <string>

namespace curvestream {

namespace {

using Eigen::Index;

std::string group_tag(int i) { return "group " + std::to_string(i); }
std::string cell_tag(int i, int j) { return "group " + std::to_string(i) + ", subgroup " + std::to_string(j); }

MatrixXd r_inverse_transpose(const MatrixXd& R)
{
    return R.transpose().triangularView<Eigen::Lower>().solve(MatrixXd::Identity(R.rows(), R.cols()));
}

} // namespace

// -------------------------------------------------------------------------
// Validation
// -------------------------------------------------------------------------

void validate(const TwoLevelSparseProblem& problem)
{
    if (problem.groups.empty()) throw DimensionMismatch("two-level problem has no groups");
    const Index p = problem.groups.front().B.cols();
    const Index q = problem.groups.front().Bdot.cols();
    if (p == 0 || q == 0) throw DimensionMismatch("two-level problem has an empty column block");
    for (std::size_t i = 0; i < problem.groups.size(); ++i) {
        const auto& g = problem.groups[i];
        if (g.B.cols() != p || g.Bdot.cols() != q) {
            throw DimensionMismatch(group_tag(static_cast<int>(i)) + ": inconsistent column counts");
        }
        if (g.B.rows() != g.b.size() || g.Bdot.rows() != g.b.size()) {
            throw DimensionMismatch(group_tag(static_cast<int>(i)) + ": row counts of b, B, Bdot differ");
        }
    }
}

void validate(const ThreeLevelSparseProblem& problem)
{
    if (problem.groups.empty() || problem.groups.front().empty()) {
        throw DimensionMismatch("three-level problem has no cells");
    }
    const auto& first = problem.groups.front().front();
    const Index p = first.B.cols(), q1 = first.Bdot.cols(), q2 = first.Bddot.cols();
    if (p == 0 || q1 == 0 || q2 == 0) throw DimensionMismatch("three-level problem has an empty column block");
    for (std::size_t i = 0; i < problem.groups.size(); ++i) {
        if (problem.groups[i].empty()) throw DimensionMismatch(group_tag(static_cast<int>(i)) + " has no subgroups");
        for (std::size_t j = 0; j < problem.groups[i].size(); ++j) {
            const auto& c = problem.groups[i][j];
            const auto tag = cell_tag(static_cast<int>(i), static_cast<int>(j));
            if (c.B.cols() != p || c.Bdot.cols() != q1 || c.Bddot.cols() != q2) {
                throw DimensionMismatch(tag + ": inconsistent column counts");
            }
            if (c.B.rows() != c.b.size() || c.Bdot.rows() != c.b.size() || c.Bddot.rows() != c.b.size()) {
                throw DimensionMismatch(tag + ": row counts differ");
            }
        }
    }
}

// -------------------------------------------------------------------------
// Two-level streamlined solver
// -------------------------------------------------------------------------

TwoLevelSolution solve_two_level(const TwoLevelSparseProblem& problem, Execution ex)
{
    validate(problem);
    const int m = static_cast<int>(problem.groups.size());
    const Index p = problem.groups.front().B.cols();
    const Index q = problem.groups.front().Bdot.cols();

    std::vector<Index> offset(m + 1, 0);
    for (int i = 0; i < m; ++i) {
        const Index extra = problem.groups[i].b.size() - q;
        if (extra < 0) throw RankDeficient(group_tag(i) + ": fewer rows than columns in Bdot");
        offset[i + 1] = offset[i] + extra;
    }
    if (offset[m] < p) throw RankDeficient("reduced global block has fewer rows than p");

    VectorXd omega3(offset[m]);
    MatrixXd Omega4(offset[m], p);

    struct Stage {
        MatrixXd R, C1;
        VectorXd c1;
        double logdet = 0.0;
    };
    std::vector<Stage> stage(m);

    for_each_index(m, ex, [&](int i) {
        const auto& g = problem.groups[i];
        HouseholderFactor f(g.Bdot, group_tag(i));
        const VectorXd c0 = f.apply_qt(g.b);
        const MatrixXd C0 = f.apply_qt(g.B);
        const Index extra = g.b.size() - q;
        stage[i].R = f.R();
        stage[i].c1 = c0.head(q);
        stage[i].C1 = C0.topRows(q);
        stage[i].logdet = f.log_abs_det_r();
        omega3.segment(offset[i], extra) = c0.tail(extra);
        Omega4.middleRows(offset[i], extra) = C0.bottomRows(extra);
    });

    HouseholderFactor top(Omega4, "reduced global block");
    const VectorXd c = top.apply_qt(omega3).head(p);
    const MatrixXd& R = top.R();

    TwoLevelSolution sol;
    sol.x1 = R.triangularView<Eigen::Upper>().solve(c);
    sol.A11 = inverse_from_r(R);
    sol.groups.resize(m);

    for_each_index(m, ex, [&](int i) {
        const auto& s = stage[i];
        auto& out = sol.groups[i];
        const auto Ri = s.R.triangularView<Eigen::Upper>();
        out.x2 = Ri.solve(s.c1 - s.C1 * sol.x1);
        out.A12 = -sol.A11 * Ri.solve(s.C1).transpose();
        out.A22 = Ri.solve(r_inverse_transpose(s.R) - s.C1 * out.A12);
        symmetrize(out.A22);
    });

    double logdet = top.log_abs_det_r();
    for (const auto& s : stage) logdet += s.logdet;
    sol.logdet_BtB = 2.0 * logdet;
    return sol;
}

// -------------------------------------------------------------------------
// Three-level streamlined solver
// -------------------------------------------------------------------------

ThreeLevelSolution solve_three_level(const ThreeLevelSparseProblem& problem, Execution ex)
{
    validate(problem);
    const int m = static_cast<int>(problem.groups.size());
    const auto& first = problem.groups.front().front();
    const Index p = first.B.cols(), q1 = first.Bdot.cols(), q2 = first.Bddot.cols();

    // Row pre-counts: inner reductions per group, then the outer reduction.
    std::vector<std::vector<Index>> inner(m);
    std::vector<Index> outer(m + 1, 0);
    for (int i = 0; i < m; ++i) {
        const auto& cells = problem.groups[i];
        inner[i].assign(cells.size() + 1, 0);
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const Index extra = cells[j].b.size() - q2;
            if (extra < 0) throw RankDeficient(cell_tag(i, static_cast<int>(j)) + ": fewer rows than columns");
            inner[i][j + 1] = inner[i][j] + extra;
        }
        const Index extra = inner[i].back() - q1;
        if (extra < 0) throw RankDeficient(group_tag(i) + ": reduced group block has fewer rows than q1");
        outer[i + 1] = outer[i] + extra;
    }
    if (outer[m] < p) throw RankDeficient("reduced global block has fewer rows than p");

    VectorXd omega7(outer[m]);
    MatrixXd Omega8(outer[m], p);

    struct CellStage {
        MatrixXd R, D1, Ddot1;
        VectorXd d1;
    };
    struct GroupStage {
        MatrixXd R, C1;
        VectorXd c1;
        std::vector<CellStage> cells;
        double logdet = 0.0;
    };
    std::vector<GroupStage> stage(m);

    for_each_index(m, ex, [&](int i) {
        const auto& cells = problem.groups[i];
        const int n = static_cast<int>(cells.size());
        const Index rows = inner[i].back();
        VectorXd omega9(rows);
        MatrixXd Omega10(rows, p), Omega11(rows, q1);
        auto& gs = stage[i];
        gs.cells.resize(n);
        for (int j = 0; j < n; ++j) {
            const auto& c = cells[j];
            HouseholderFactor f(c.Bddot, cell_tag(i, j));
            const VectorXd d0 = f.apply_qt(c.b);
            const MatrixXd D0 = f.apply_qt(c.B);
            const MatrixXd Ddot0 = f.apply_qt(c.Bdot);
            const Index extra = c.b.size() - q2;
            auto& cs = gs.cells[j];
            cs.R = f.R();
            cs.d1 = d0.head(q2);
            cs.D1 = D0.topRows(q2);
            cs.Ddot1 = Ddot0.topRows(q2);
            gs.logdet += f.log_abs_det_r();
            omega9.segment(inner[i][j], extra) = d0.tail(extra);
            Omega10.middleRows(inner[i][j], extra) = D0.bottomRows(extra);
            Omega11.middleRows(inner[i][j], extra) = Ddot0.bottomRows(extra);
        }
        HouseholderFactor fg(Omega11, group_tag(i) + " (reduced)");
        const VectorXd c0 = fg.apply_qt(omega9);
        const MatrixXd C0 = fg.apply_qt(Omega10);
        const Index extra = rows - q1;
        gs.R = fg.R();
        gs.c1 = c0.head(q1);
        gs.C1 = C0.topRows(q1);
        gs.logdet += fg.log_abs_det_r();
        omega7.segment(outer[i], extra) = c0.tail(extra);
        Omega8.middleRows(outer[i], extra) = C0.bottomRows(extra);
    });

    HouseholderFactor top(Omega8, "reduced global block");
    const VectorXd c = top.apply_qt(omega7).head(p);
    const MatrixXd& R = top.R();

    ThreeLevelSolution sol;
    sol.x1 = R.triangularView<Eigen::Upper>().solve(c);
    sol.A11 = inverse_from_r(R);
    sol.groups.resize(m);

    for_each_index(m, ex, [&](int i) {
        const auto& gs = stage[i];
        auto& og = sol.groups[i];
        const auto Ri = gs.R.triangularView<Eigen::Upper>();
        og.x2 = Ri.solve(gs.c1 - gs.C1 * sol.x1);
        og.A12 = -sol.A11 * Ri.solve(gs.C1).transpose();
        og.A22 = Ri.solve(r_inverse_transpose(gs.R) - gs.C1 * og.A12);
        symmetrize(og.A22);
        og.cells.resize(gs.cells.size());
        for (std::size_t j = 0; j < gs.cells.size(); ++j) {
            const auto& cs = gs.cells[j];
            auto& oc = og.cells[j];
            const auto Rij = cs.R.triangularView<Eigen::Upper>();
            oc.x2 = Rij.solve(cs.d1 - cs.D1 * sol.x1 - cs.Ddot1 * og.x2);
            oc.A12 = -Rij.solve(cs.D1 * sol.A11 + cs.Ddot1 * og.A12.transpose()).transpose();
            oc.A12_group = -Rij.solve(cs.D1 * og.A12 + cs.Ddot1 * og.A22).transpose();
            oc.A22 = Rij.solve(r_inverse_transpose(cs.R) - cs.D1 * oc.A12 - cs.Ddot1 * oc.A12_group);
            symmetrize(oc.A22);
        }
    });

    double logdet = top.log_abs_det_r();
    for (const auto& gs : stage) logdet += gs.logdet;
    sol.logdet_BtB = 2.0 * logdet;
    return sol;
}

// -------------------------------------------------------------------------
// Dense reference
// -------------------------------------------------------------------------

MatrixXd stack_dense(const TwoLevelSparseProblem& problem, VectorXd* b)
{
    validate(problem);
    const Index p = problem.groups.front().B.cols();
    const Index q = problem.groups.front().Bdot.cols();
    const Index m = static_cast<Index>(problem.groups.size());
    Index rows = 0;
    for (const auto& g : problem.groups) rows += g.b.size();
    MatrixXd B = MatrixXd::Zero(rows, p + m * q);
    if (b) b->resize(rows);
    Index r = 0;
    for (Index i = 0; i < m; ++i) {
        const auto& g = problem.groups[i];
        const Index n = g.b.size();
        B.block(r, 0, n, p) = g.B;
        B.block(r, p + i * q, n, q) = g.Bdot;
        if (b) b->segment(r, n) = g.b;
        r += n;
    }
    return B;
}

MatrixXd stack_dense(const ThreeLevelSparseProblem& problem, VectorXd* b)
{
    validate(problem);
    const auto& first = problem.groups.front().front();
    const Index p = first.B.cols(), q1 = first.Bdot.cols(), q2 = first.Bddot.cols();
    Index rows = 0, cols = p;
    for (const auto& cells : problem.groups) {
        cols += q1 + q2 * static_cast<Index>(cells.size());
        for (const auto& c : cells) rows += c.b.size();
    }
    MatrixXd B = MatrixXd::Zero(rows, cols);
    if (b) b->resize(rows);
    Index r = 0, col = p;
    for (const auto& cells : problem.groups) {
        const Index gcol = col;
        col += q1;
        for (const auto& c : cells) {
            const Index n = c.b.size();
            B.block(r, 0, n, p) = c.B;
            B.block(r, gcol, n, q1) = c.Bdot;
            B.block(r, col, n, q2) = c.Bddot;
            if (b) b->segment(r, n) = c.b;
            r += n;
            col += q2;
        }
    }
    return B;
}

namespace {

struct DenseInverse {
    VectorXd x;
    MatrixXd Ainv;
    double logdet;
};

DenseInverse dense_solve(const MatrixXd& B, const VectorXd& b)
{
    const MatrixXd A = B.transpose() * B;
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw Singular("dense oracle: B^T B is not invertible");
    DenseInverse out;
    out.Ainv = llt.solve(MatrixXd::Identity(A.rows(), A.cols()));
    out.x = out.Ainv * (B.transpose() * b);
    out.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return out;
}

MatrixXd sym_block(const MatrixXd& A, Index r, Index n)
{
    MatrixXd out = A.block(r, r, n, n);
    symmetrize(out);
    return out;
}

} // namespace

TwoLevelSolution dense_two_level(const TwoLevelSparseProblem& problem)
{
    VectorXd b;
    const MatrixXd B = stack_dense(problem, &b);
    const Index p = problem.groups.front().B.cols();
    const Index q = problem.groups.front().Bdot.cols();
    const auto d = dense_solve(B, b);
    TwoLevelSolution sol;
    sol.x1 = d.x.head(p);
    sol.A11 = sym_block(d.Ainv, 0, p);
    sol.logdet_BtB = d.logdet;
    sol.groups.resize(problem.groups.size());
    for (std::size_t i = 0; i < problem.groups.size(); ++i) {
        const Index c = p + static_cast<Index>(i) * q;
        sol.groups[i].x2 = d.x.segment(c, q);
        sol.groups[i].A22 = sym_block(d.Ainv, c, q);
        sol.groups[i].A12 = d.Ainv.block(0, c, p, q);
    }
    return sol;
}

ThreeLevelSolution dense_three_level(const ThreeLevelSparseProblem& problem)
{
    VectorXd b;
    const MatrixXd B = stack_dense(problem, &b);
    const auto& first = problem.groups.front().front();
    const Index p = first.B.cols(), q1 = first.Bdot.cols(), q2 = first.Bddot.cols();
    const auto d = dense_solve(B, b);
    ThreeLevelSolution sol;
    sol.x1 = d.x.head(p);
    sol.A11 = sym_block(d.Ainv, 0, p);
    sol.logdet_BtB = d.logdet;
    sol.groups.resize(problem.groups.size());
    Index col = p;
    for (std::size_t i = 0; i < problem.groups.size(); ++i) {
        auto& g = sol.groups[i];
        const Index gc = col;
        g.x2 = d.x.segment(gc, q1);
        g.A22 = sym_block(d.Ainv, gc, q1);
        g.A12 = d.Ainv.block(0, gc, p, q1);
        col += q1;
        g.cells.resize(problem.groups[i].size());
        for (auto& c : g.cells) {
            c.x2 = d.x.segment(col, q2);
            c.A22 = sym_block(d.Ainv, col, q2);
            c.A12 = d.Ainv.block(0, col, p, q2);
            c.A12_group = d.Ainv.block(gc, col, q1, q2);
            col += q2;
        }
    }
    return sol;
}

} // namespace curvestream
