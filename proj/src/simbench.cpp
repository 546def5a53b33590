#include "curvestream/simbench.hpp"

#include "curvestream/errors.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace curvestream {

namespace {

using Eigen::Index;

std::mt19937_64 group_stream(std::uint64_t seed, std::uint64_t group)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(group), static_cast<std::uint32_t>(group >> 32)};
    return std::mt19937_64(seq);
}

struct RandomCurve {
    double amplitude, exponent;

    static RandomCurve draw(std::mt19937_64& rng, double scale)
    {
        std::normal_distribution<double> a1(0.25, 0.5);
        std::uniform_int_distribution<int> sign(0, 1), power(1, 3);
        const double amp = a1(rng) * (sign(rng) == 0 ? -1.0 : 1.0);
        return {scale * amp, static_cast<double>(power(rng))};
    }

    double operator()(double x) const { return amplitude * std::sin(2.0 * std::numbers::pi * std::pow(x, exponent)); }
};

void fill_observations(std::mt19937_64& rng, int n, double sigma, const RandomCurve& g, const RandomCurve* h,
                       VectorXd& x, VectorXd& y)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, sigma);
    x.resize(n);
    y.resize(n);
    for (int k = 0; k < n; ++k) {
        x[k] = unif(rng);
        double mean = true_global_curve(x[k]) + g(x[k]);
        if (h) mean += (*h)(x[k]);
        y[k] = mean + noise(rng);
    }
}

double elapsed(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_cap(std::size_t P, int cap)
{
    if (P > static_cast<std::size_t>(cap)) {
        throw DimensionCapExceeded("naive system has " + std::to_string(P) + " coefficients, above the cap of " +
                                   std::to_string(cap));
    }
}

// Dense inverse of the full precision matrix together with log|.|.
MatrixXd dense_spd_inverse(const MatrixXd& Prec, double* logdet)
{
    Eigen::LLT<MatrixXd> llt(Prec);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite("naive precision matrix is not positive definite");
    *logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    MatrixXd inv = llt.solve(MatrixXd::Identity(Prec.rows(), Prec.cols()));
    symmetrize(inv);
    return inv;
}

void scatter(MatrixXd& CtC, Index r, Index c, const MatrixXd& block)
{
    CtC.block(r, c, block.rows(), block.cols()) += block;
    if (r != c) CtC.block(c, r, block.cols(), block.rows()) += block.transpose();
}

struct DenseSystem {
    MatrixXd CtC;
    VectorXd Cty;
    double yty = 0.0;
};

double dense_sq_residual(const DenseSystem& sys, const VectorXd& mu, const MatrixXd& Sigma)
{
    return sys.yty - 2.0 * mu.dot(sys.Cty) + mu.dot(sys.CtC * mu) + (sys.CtC.array() * Sigma.array()).sum();
}

} // namespace

void validate(const SimConfig& cfg)
{
    if (cfg.m < 1) throw ValidationError("simulation needs m >= 1");
    if (cfg.n_min < 1 || cfg.n_max < cfg.n_min) throw ValidationError("invalid group size range");
    if (!(cfg.sigma_eps > 0.0)) throw ValidationError("sigma_eps must be positive");
}

void validate(const ThreeLevelSimConfig& cfg)
{
    if (cfg.m < 1) throw ValidationError("simulation needs m >= 1");
    if (cfg.n_min < 1 || cfg.n_max < cfg.n_min) throw ValidationError("invalid subgroup count range");
    if (cfg.o_min < 1 || cfg.o_max < cfg.o_min) throw ValidationError("invalid subgroup size range");
    if (!(cfg.sigma_eps > 0.0)) throw ValidationError("sigma_eps must be positive");
}

double true_global_curve(double x) { return 3.0 * std::sqrt(x * (1.3 - x)) * normal_cdf(6.0 * x - 3.0); }

VectorXd true_global_curve(const VectorXd& x) { return x.unaryExpr([](double v) { return true_global_curve(v); }); }

TwoLevelDataset simulate_two_level(const SimConfig& cfg)
{
    validate(cfg);
    TwoLevelDataset data;
    data.labels.resize(cfg.m);
    data.groups.resize(cfg.m);
    for_each_index(cfg.m, Execution::Parallel, [&](int i) {
        auto rng = group_stream(cfg.seed, static_cast<std::uint64_t>(i));
        const int n = std::uniform_int_distribution<int>(cfg.n_min, cfg.n_max)(rng);
        const RandomCurve g = RandomCurve::draw(rng, 1.0);
        fill_observations(rng, n, cfg.sigma_eps, g, nullptr, data.groups[i].x, data.groups[i].y);
        data.labels[i] = std::to_string(i + 1);
    });
    return data;
}

ThreeLevelDataset simulate_three_level(const ThreeLevelSimConfig& cfg)
{
    validate(cfg);
    ThreeLevelDataset data;
    data.labels.resize(cfg.m);
    data.groups.resize(cfg.m);
    for_each_index(cfg.m, Execution::Parallel, [&](int i) {
        auto rng = group_stream(cfg.seed, static_cast<std::uint64_t>(i));
        const int n = std::uniform_int_distribution<int>(cfg.n_min, cfg.n_max)(rng);
        const RandomCurve g = RandomCurve::draw(rng, 1.0);
        auto& grp = data.groups[i];
        grp.cells.resize(n);
        for (int j = 0; j < n; ++j) {
            const int o = std::uniform_int_distribution<int>(cfg.o_min, cfg.o_max)(rng);
            const RandomCurve h = RandomCurve::draw(rng, 0.5);
            fill_observations(rng, o, cfg.sigma_eps, g, &h, grp.cells[j].x, grp.cells[j].y);
            grp.labels.push_back(std::to_string(j + 1));
        }
        data.labels[i] = std::to_string(i + 1);
    });
    return data;
}

// ---------------------------------------------------------------------------
// Naive dense MFVB
// ---------------------------------------------------------------------------

std::size_t naive_dimension(const TwoLevelDesign& des)
{
    return static_cast<std::size_t>(des.p()) + static_cast<std::size_t>(des.m()) * des.q();
}

std::size_t naive_dimension(const ThreeLevelDesign& des)
{
    return static_cast<std::size_t>(des.p()) + static_cast<std::size_t>(des.m()) * des.q1() +
           des.total_cells() * static_cast<std::size_t>(des.q2());
}

MfvbFitTwoLevel naive_mfvb(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, int iterations,
                           int dimension_cap)
{
    if (iterations < 1) throw ValidationError("iterations must be at least 1");
    const std::size_t Pz = naive_dimension(des);
    check_cap(Pz, dimension_cap);
    const auto t0 = std::chrono::steady_clock::now();
    const Index P = static_cast<Index>(Pz), p = des.p(), q = des.q(), d = des.d();
    const int m = des.m();

    DenseSystem sys;
    sys.CtC = MatrixXd::Zero(P, P);
    sys.Cty = VectorXd::Zero(P);
    for (int i = 0; i < m; ++i) {
        const auto& g = des.groups[i];
        MatrixXd Cg(g.y.size(), p), Cr(g.y.size(), q);
        Cg << g.X, g.Zgbl;
        Cr << g.X, g.Zgrp;
        const Index off = p + static_cast<Index>(i) * q;
        scatter(sys.CtC, 0, 0, Cg.transpose() * Cg);
        scatter(sys.CtC, 0, off, Cg.transpose() * Cr);
        scatter(sys.CtC, off, off, Cr.transpose() * Cr);
        sys.Cty.head(p) += Cg.transpose() * g.y;
        sys.Cty.segment(off, q) += Cr.transpose() * g.y;
        sys.yty += g.y.squaredNorm();
    }
    const MatrixXd Sb_inv = spd_inverse(hyper.Sigma_beta, "Sigma_beta");

    MfvbFitTwoLevel fit;
    fit.model = des.model;
    fit.hyper = hyper;
    fit.state = init_q_state(des, hyper);
    auto& s = fit.state;
    for (int it = 0; it < iterations; ++it) {
        MatrixXd Prec = s.eps.mu_recip_sigma_sq * sys.CtC;
        VectorXd rhs = s.eps.mu_recip_sigma_sq * sys.Cty;
        Prec.topLeftCorner(d, d) += Sb_inv;
        rhs.head(d) += Sb_inv * hyper.mu_beta;
        Index r = d;
        for (std::size_t b = 0; b < s.gbl.size(); ++b) {
            for (int k = 0; k < des.gbl_blocks[b]; ++k, ++r) Prec(r, r) += s.gbl[b].mu_recip_sigma_sq;
        }
        for (int i = 0; i < m; ++i) {
            const Index off = p + static_cast<Index>(i) * q;
            Prec.block(off, off, d, d) += s.Sigma.M_Sigma_inv;
            for (Index k = d; k < q; ++k) Prec(off + k, off + k) += s.grp.mu_recip_sigma_sq;
        }
        double logdet = 0.0;
        const MatrixXd Sigma = dense_spd_inverse(Prec, &logdet);
        Prec.resize(0, 0);
        const VectorXd mu = Sigma * rhs;

        TwoLevelSolution& c = s.coef;
        c.x1 = mu.head(p);
        c.A11 = Sigma.topLeftCorner(p, p);
        c.logdet_BtB = logdet;
        c.groups.resize(m);
        for (int i = 0; i < m; ++i) {
            const Index off = p + static_cast<Index>(i) * q;
            c.groups[i].x2 = mu.segment(off, q);
            c.groups[i].A22 = Sigma.block(off, off, q, q);
            c.groups[i].A12 = Sigma.block(0, off, p, q);
        }

        TwoLevelCoefStats& st = s.stats;
        st.sq_residual = dense_sq_residual(sys, mu, Sigma);
        st.lin_outer = MatrixXd::Zero(d, d);
        st.grp_sq = 0.0;
        for (int i = 0; i < m; ++i) {
            const Index off = p + static_cast<Index>(i) * q;
            st.lin_outer += mu.segment(off, d) * mu.segment(off, d).transpose() + Sigma.block(off, off, d, d);
            st.grp_sq += mu.segment(off + d, q - d).squaredNorm() + Sigma.block(off + d, off + d, q - d, q - d).trace();
        }
        symmetrize(st.lin_outer);
        st.gbl_sq.resize(static_cast<Index>(s.gbl.size()));
        r = d;
        for (std::size_t b = 0; b < s.gbl.size(); ++b) {
            const int K = des.gbl_blocks[b];
            st.gbl_sq[static_cast<Index>(b)] = mu.segment(r, K).squaredNorm() + Sigma.block(r, r, K, K).trace();
            r += K;
        }
        update_variance_factors(s, des, hyper);
        fit.elbo_trace.push_back(elbo_two_level(s, des, hyper));
    }
    fit.iterations = iterations;
    fit.converged = true;
    fit.seconds = elapsed(t0);
    return fit;
}

MfvbFitThreeLevel naive_mfvb(const ThreeLevelDesign& des, const HyperparametersThreeLevel& hyper, int iterations,
                             int dimension_cap)
{
    if (iterations < 1) throw ValidationError("iterations must be at least 1");
    const std::size_t Pz = naive_dimension(des);
    check_cap(Pz, dimension_cap);
    const auto t0 = std::chrono::steady_clock::now();
    const Index P = static_cast<Index>(Pz), p = des.p(), q1 = des.q1(), q2 = des.q2();
    const int m = des.m();

    // Column offsets: [x1 | g_1, c_11, c_12, ... | g_2, ...]
    std::vector<Index> g_off(m);
    std::vector<std::vector<Index>> c_off(m);
    Index off = p;
    for (int i = 0; i < m; ++i) {
        g_off[i] = off;
        off += q1;
        for (std::size_t j = 0; j < des.groups[i].size(); ++j) {
            c_off[i].push_back(off);
            off += q2;
        }
    }

    DenseSystem sys;
    sys.CtC = MatrixXd::Zero(P, P);
    sys.Cty = VectorXd::Zero(P);
    for (int i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < des.groups[i].size(); ++j) {
            const auto& c = des.groups[i][j];
            const Index n = c.y.size();
            MatrixXd Cgbl(n, p), Cg(n, q1), Ch(n, q2);
            Cgbl << c.X, c.Zgbl;
            Cg << c.X, c.Zg;
            Ch << c.X, c.Zh;
            const Index go = g_off[i], co = c_off[i][j];
            scatter(sys.CtC, 0, 0, Cgbl.transpose() * Cgbl);
            scatter(sys.CtC, 0, go, Cgbl.transpose() * Cg);
            scatter(sys.CtC, 0, co, Cgbl.transpose() * Ch);
            scatter(sys.CtC, go, go, Cg.transpose() * Cg);
            scatter(sys.CtC, go, co, Cg.transpose() * Ch);
            scatter(sys.CtC, co, co, Ch.transpose() * Ch);
            sys.Cty.head(p) += Cgbl.transpose() * c.y;
            sys.Cty.segment(go, q1) += Cg.transpose() * c.y;
            sys.Cty.segment(co, q2) += Ch.transpose() * c.y;
            sys.yty += c.y.squaredNorm();
        }
    }
    const MatrixXd Sb_inv = spd_inverse(hyper.Sigma_beta, "Sigma_beta");

    MfvbFitThreeLevel fit;
    fit.model = des.model;
    fit.hyper = hyper;
    fit.state = init_q_state(des, hyper);
    auto& s = fit.state;
    for (int it = 0; it < iterations; ++it) {
        MatrixXd Prec = s.eps.mu_recip_sigma_sq * sys.CtC;
        VectorXd rhs = s.eps.mu_recip_sigma_sq * sys.Cty;
        Prec.topLeftCorner(2, 2) += Sb_inv;
        rhs.head(2) += Sb_inv * hyper.mu_beta;
        for (Index k = 2; k < p; ++k) Prec(k, k) += s.gbl.mu_recip_sigma_sq;
        for (int i = 0; i < m; ++i) {
            Prec.block(g_off[i], g_off[i], 2, 2) += s.Sigma_g.M_Sigma_inv;
            for (Index k = 2; k < q1; ++k) Prec(g_off[i] + k, g_off[i] + k) += s.grp_g.mu_recip_sigma_sq;
            for (const Index co : c_off[i]) {
                Prec.block(co, co, 2, 2) += s.Sigma_h.M_Sigma_inv;
                for (Index k = 2; k < q2; ++k) Prec(co + k, co + k) += s.grp_h.mu_recip_sigma_sq;
            }
        }
        double logdet = 0.0;
        const MatrixXd Sigma = dense_spd_inverse(Prec, &logdet);
        Prec.resize(0, 0);
        const VectorXd mu = Sigma * rhs;

        ThreeLevelSolution& c = s.coef;
        c.x1 = mu.head(p);
        c.A11 = Sigma.topLeftCorner(p, p);
        c.logdet_BtB = logdet;
        c.groups.resize(m);
        ThreeLevelCoefStats& st = s.stats;
        st.sq_residual = dense_sq_residual(sys, mu, Sigma);
        st.lin_g_outer = MatrixXd::Zero(2, 2);
        st.lin_h_outer = MatrixXd::Zero(2, 2);
        st.grp_g_sq = st.grp_h_sq = 0.0;
        for (int i = 0; i < m; ++i) {
            const Index go = g_off[i];
            auto& gi = c.groups[i];
            gi.x2 = mu.segment(go, q1);
            gi.A22 = Sigma.block(go, go, q1, q1);
            gi.A12 = Sigma.block(0, go, p, q1);
            st.lin_g_outer += mu.segment(go, 2) * mu.segment(go, 2).transpose() + Sigma.block(go, go, 2, 2);
            st.grp_g_sq += mu.segment(go + 2, q1 - 2).squaredNorm() + Sigma.block(go + 2, go + 2, q1 - 2, q1 - 2).trace();
            gi.cells.resize(c_off[i].size());
            for (std::size_t j = 0; j < c_off[i].size(); ++j) {
                const Index co = c_off[i][j];
                auto& cj = gi.cells[j];
                cj.x2 = mu.segment(co, q2);
                cj.A22 = Sigma.block(co, co, q2, q2);
                cj.A12 = Sigma.block(0, co, p, q2);
                cj.A12_group = Sigma.block(go, co, q1, q2);
                st.lin_h_outer += mu.segment(co, 2) * mu.segment(co, 2).transpose() + Sigma.block(co, co, 2, 2);
                st.grp_h_sq +=
                    mu.segment(co + 2, q2 - 2).squaredNorm() + Sigma.block(co + 2, co + 2, q2 - 2, q2 - 2).trace();
            }
        }
        symmetrize(st.lin_g_outer);
        symmetrize(st.lin_h_outer);
        st.gbl_sq = mu.segment(2, p - 2).squaredNorm() + Sigma.block(2, 2, p - 2, p - 2).trace();
        update_variance_factors(s, des, hyper);
    }
    fit.iterations = iterations;
    fit.converged = true;
    fit.seconds = elapsed(t0);
    return fit;
}

// ---------------------------------------------------------------------------
// Timing harness
// ---------------------------------------------------------------------------

std::string to_string(Variant v) { return v == Variant::Naive ? "naive" : "streamlined"; }

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size()) throw DimensionMismatch("slope inputs differ in length");
    if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const Index n = static_cast<Index>(x.size());
    MatrixXd A(n, 2);
    VectorXd b(n);
    for (Index k = 0; k < n; ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw ValidationError("log-log slope needs positive values");
        A(k, 0) = 1.0;
        A(k, 1) = std::log(x[k]);
        b[k] = std::log(y[k]);
    }
    return A.colPivHouseholderQr().solve(b)[1];
}

BenchmarkResult run_benchmark(const BenchmarkOptions& opts)
{
    if (opts.ms.empty()) throw ValidationError("benchmark needs at least one m");
    for (std::size_t k = 1; k < opts.ms.size(); ++k) {
        if (opts.ms[k] <= opts.ms[k - 1]) throw ValidationError("benchmark m values must be ascending");
    }
    if (opts.replications < 1) throw ValidationError("replications must be at least 1");
    if (opts.fixed_iterations < 1) throw ValidationError("fixed iterations must be at least 1");

    FitOptions fo;
    fo.max_iterations = opts.fixed_iterations;
    fo.fixed_iterations = true;
    fo.record_elbo = false;
    fo.execution = opts.parallel ? Execution::Parallel : Execution::Serial;

    auto summarize = [&](int m, Variant v, const std::vector<double>& t) {
        TimingRecord rec;
        rec.m = m;
        rec.variant = v;
        rec.iterations = opts.fixed_iterations;
        rec.replications = static_cast<int>(t.size());
        rec.parallel = opts.parallel;
        double sum = 0.0;
        for (double s : t) sum += s;
        rec.mean_seconds = sum / static_cast<double>(t.size());
        double ss = 0.0;
        for (double s : t) ss += (s - rec.mean_seconds) * (s - rec.mean_seconds);
        rec.sd_seconds = t.size() > 1 ? std::sqrt(ss / static_cast<double>(t.size() - 1)) : 0.0;
        return rec;
    };

    BenchmarkResult res;
    std::vector<double> ms_s, t_s, ms_n, t_n;
    for (const int m : opts.ms) {
        SimConfig cfg;
        cfg.m = m;
        std::vector<double> ts, tn;
        bool naive_ok = opts.include_naive;
        for (int r = 0; r < opts.replications; ++r) {
            cfg.seed = opts.seed + static_cast<std::uint64_t>(r);
            const TwoLevelDesign des = build_two_level_design(simulate_two_level(cfg));
            const auto hyper = HyperparametersTwoLevel::defaults(des.d());
            ts.push_back(fit_mfvb(des, hyper, fo).seconds);
            if (naive_ok) {
                try {
                    tn.push_back(naive_mfvb(des, hyper, opts.fixed_iterations, opts.dimension_cap).seconds);
                } catch (const DimensionCapExceeded& e) {
                    spdlog::info("m = {}: naive variant skipped ({})", m, e.what());
                    res.naive_skipped.push_back(m);
                    naive_ok = false;
                }
            }
        }
        res.records.push_back(summarize(m, Variant::Streamlined, ts));
        ms_s.push_back(m);
        t_s.push_back(res.records.back().mean_seconds);
        if (naive_ok && !tn.empty()) {
            res.records.push_back(summarize(m, Variant::Naive, tn));
            ms_n.push_back(m);
            t_n.push_back(res.records.back().mean_seconds);
        }
    }
    res.slope_streamlined = log_log_slope(ms_s, t_s);
    res.slope_naive = log_log_slope(ms_n, t_n);
    return res;
}

// ---------------------------------------------------------------------------
// Accuracy
// ---------------------------------------------------------------------------

double accuracy(const VectorXd& grid, const VectorXd& q, const VectorXd& p)
{
    return accuracy(grid, q, grid, p);
}

double accuracy(const VectorXd& q_grid, const VectorXd& q, const VectorXd& p_grid, const VectorXd& p)
{
    if (q_grid.size() != p_grid.size() || q_grid != p_grid) throw GridMismatch("densities are on different grids");
    const VectorXd& x = q_grid;
    if (x.size() < 2 || q.size() != x.size() || p.size() != x.size()) {
        throw GridMismatch("density values do not match the grid");
    }
    for (Index k = 1; k < x.size(); ++k) {
        if (!(x[k] > x[k - 1])) throw GridMismatch("grid must be strictly increasing");
    }
    if ((q.array() < 0.0).any() || (p.array() < 0.0).any() || !q.allFinite() || !p.allFinite()) {
        throw NotNormalized("densities must be finite and nonnegative");
    }
    auto trapezoid = [&](const VectorXd& f) {
        double s = 0.0;
        for (Index k = 1; k < x.size(); ++k) s += 0.5 * (f[k] + f[k - 1]) * (x[k] - x[k - 1]);
        return s;
    };
    if (std::abs(trapezoid(q) - 1.0) > kDensityNormTolerance || std::abs(trapezoid(p) - 1.0) > kDensityNormTolerance) {
        throw NotNormalized("density does not integrate to 1 on the grid");
    }
    return 100.0 * (1.0 - 0.5 * trapezoid((q - p).cwiseAbs()));
}

} // namespace curvestream
