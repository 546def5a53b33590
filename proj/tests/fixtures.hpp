#pragma once

#include "curvestream/design.hpp"
#include "curvestream/simbench.hpp"

#include <random>

namespace fixture {

inline curvestream::TwoLevelDesign small_two_level(int m, std::uint64_t seed, int kgbl = 5, int kgrp = 3,
                                                   int n_min = 8, int n_max = 14)
{
    curvestream::SimConfig cfg;
    cfg.m = m;
    cfg.n_min = n_min;
    cfg.n_max = n_max;
    cfg.seed = seed;
    return curvestream::build_two_level_design(curvestream::simulate_two_level(cfg), kgbl, kgrp);
}

inline curvestream::ThreeLevelDesign small_three_level(int m, int n_min, int n_max, std::uint64_t seed, int o_min = 6,
                                                       int o_max = 10, int kgbl = 4, int kg = 3, int kh = 2)
{
    curvestream::ThreeLevelSimConfig cfg;
    cfg.m = m;
    cfg.n_min = n_min;
    cfg.n_max = n_max;
    cfg.o_min = o_min;
    cfg.o_max = o_max;
    cfg.seed = seed;
    return curvestream::build_three_level_design(curvestream::simulate_three_level(cfg), kgbl, kg, kh);
}

// Design built directly from random matrices, so any column counts are possible.
inline curvestream::TwoLevelDesign raw_two_level(std::mt19937_64& rng, const std::vector<int>& n, int kgbl, int kgrp)
{
    using curvestream::MatrixXd;
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    auto gauss = [&](int r, int c) {
        MatrixXd M(r, c);
        for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = z(rng);
        return M;
    };
    curvestream::TwoLevelDesign des;
    des.gbl_blocks = {kgbl};
    for (int ni : n) {
        curvestream::GroupDesign g;
        g.y = gauss(ni, 1).col(0);
        g.X = MatrixXd::Ones(ni, 2);
        for (int r = 0; r < ni; ++r) g.X(r, 1) = u(rng);
        g.Zgbl = gauss(ni, kgbl);
        g.Zgrp = gauss(ni, kgrp);
        des.groups.push_back(std::move(g));
    }
    return des;
}

inline curvestream::ThreeLevelDesign raw_three_level(std::mt19937_64& rng, const std::vector<std::vector<int>>& o,
                                                     int kgbl, int kg, int kh)
{
    using curvestream::MatrixXd;
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    auto gauss = [&](int r, int c) {
        MatrixXd M(r, c);
        for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = z(rng);
        return M;
    };
    curvestream::ThreeLevelDesign des;
    for (const auto& gi : o) {
        des.groups.emplace_back();
        for (int oij : gi) {
            curvestream::CellDesign c;
            c.y = gauss(oij, 1).col(0);
            c.X = MatrixXd::Ones(oij, 2);
            for (int r = 0; r < oij; ++r) c.X(r, 1) = u(rng);
            c.Zgbl = gauss(oij, kgbl);
            c.Zg = gauss(oij, kg);
            c.Zh = gauss(oij, kh);
            des.groups.back().push_back(std::move(c));
        }
    }
    return des;
}

} // namespace fixture
