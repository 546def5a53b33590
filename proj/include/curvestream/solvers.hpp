#pragma once

#include "curvestream/linalg.hpp"
#include "curvestream/parallel.hpp"

#include <vector>

namespace curvestream {

// ---------------------------------------------------------------------------
// Two-level problem: B = [B_i | blockdiag(Bdot_i)], b = stack(b_i)
// ---------------------------------------------------------------------------

struct TwoLevelBlock {
    VectorXd b;
    MatrixXd B;     // rows x p
    MatrixXd Bdot;  // rows x q
};

struct TwoLevelSparseProblem {
    std::vector<TwoLevelBlock> groups;
};

struct TwoLevelGroupSolution {
    VectorXd x2;
    MatrixXd A22;  // q x q
    MatrixXd A12;  // p x q
};

struct TwoLevelSolution {
    VectorXd x1;
    MatrixXd A11;
    std::vector<TwoLevelGroupSolution> groups;
    double logdet_BtB = 0.0;  // log|B^T B|
};

// ---------------------------------------------------------------------------
// Three-level problem: cells (i, j) nested in groups i.
// ---------------------------------------------------------------------------

struct ThreeLevelBlock {
    VectorXd b;
    MatrixXd B;      // rows x p
    MatrixXd Bdot;   // rows x q1
    MatrixXd Bddot;  // rows x q2
};

struct ThreeLevelSparseProblem {
    std::vector<std::vector<ThreeLevelBlock>> groups;
};

struct ThreeLevelCellSolution {
    VectorXd x2;
    MatrixXd A22;        // q2 x q2
    MatrixXd A12;        // p x q2, cross block with x1
    MatrixXd A12_group;  // q1 x q2, cross block with the enclosing group's x2
};

struct ThreeLevelGroupSolution {
    VectorXd x2;
    MatrixXd A22;  // q1 x q1
    MatrixXd A12;  // p x q1
    std::vector<ThreeLevelCellSolution> cells;
};

struct ThreeLevelSolution {
    VectorXd x1;
    MatrixXd A11;
    std::vector<ThreeLevelGroupSolution> groups;
    double logdet_BtB = 0.0;
};

void validate(const TwoLevelSparseProblem& problem);
void validate(const ThreeLevelSparseProblem& problem);

TwoLevelSolution solve_two_level(const TwoLevelSparseProblem& problem,
                                 Execution ex = Execution::Parallel);
ThreeLevelSolution solve_three_level(const ThreeLevelSparseProblem& problem,
                                     Execution ex = Execution::Parallel);

// Dense reference: stacks B explicitly, forms (B^T B)^{-1} and slices the labelled blocks.
// Column order is [x1 | group 1 | group 2 | ...] (three-level: [x1 | g1, c11, c12, ... | g2, ...]).
MatrixXd stack_dense(const TwoLevelSparseProblem& problem, VectorXd* b = nullptr);
MatrixXd stack_dense(const ThreeLevelSparseProblem& problem, VectorXd* b = nullptr);
TwoLevelSolution dense_two_level(const TwoLevelSparseProblem& problem);
ThreeLevelSolution dense_three_level(const ThreeLevelSparseProblem& problem);

} // namespace curvestream
