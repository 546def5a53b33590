#include "curvestream/contrast.hpp"
#include "curvestream/errors.hpp"
#include "curvestream/io.hpp"
#include "curvestream/parallel.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace curvestream;
using nlohmann::json;

namespace {

struct FitArgs {
    std::string data, method = "mfvb", hyper, out;
    int kgbl = kDefaultGlobalKnots, kgrp = kDefaultGroupKnots, kgrp_h = kDefaultGroupKnots;
    double tol = 1e-5;
    int max_iter = 500;
};

struct PredictArgs {
    std::string fit, grid, target = "global", out;
    double level = 0.95;
    int points = kDefaultGridPoints;
};

struct SimArgs {
    int m = 0;
    std::uint64_t seed = 1;
    double sigma = 0.2;
    std::string out;
};

struct BenchArgs {
    std::string ms = "50,100,200,400", out, json_out;
    int reps = 3, fixed_iters = 50, cap = kDefaultDimensionCap;
    std::uint64_t seed = 1;
    bool parallel = false, no_naive = false;
};

json hyper_json_or_empty(const std::string& path) { return path.empty() ? json::object() : read_json_file(path); }

FitOptions fit_options(const FitArgs& a, ConvergenceMetric metric)
{
    FitOptions o;
    o.rel_tol = a.tol;
    o.max_iterations = a.max_iter;
    o.metric = metric;
    return o;
}

template <class Fit>
void log_mfvb(const Fit& f)
{
    if (f.converged) {
        spdlog::info("converged after {} iterations in {:.3f} s", f.iterations, f.seconds);
    } else {
        spdlog::warn("stopped after {} iterations without meeting the tolerance", f.iterations);
    }
}

void run_fit2(const FitArgs& a)
{
    const auto data = read_two_level_csv(a.data);
    const auto des = build_two_level_design(data, a.kgbl, a.kgrp);
    spdlog::info("two-level design: m = {}, N = {}, K_gbl = {}, K_grp = {}", des.m(), des.total_obs(), des.K_gbl(),
                 des.K_grp());
    const json h = hyper_json_or_empty(a.hyper);
    FitArtifact art;
    if (a.method == "mfvb") {
        auto f = fit_mfvb(des, hyper_two_level_from_json(h, 2), fit_options(a, ConvergenceMetric::Elbo));
        log_mfvb(f);
        art.fit = std::move(f);
    } else {
        art.fit = fit_blup_two_level(des, variances_two_level_from_json(h));
    }
    save_artifact(a.out, art);
}

void run_fit3(const FitArgs& a)
{
    const auto data = read_three_level_csv(a.data);
    const auto des = build_three_level_design(data, a.kgbl, a.kgrp, a.kgrp_h);
    spdlog::info("three-level design: m = {}, cells = {}, N = {}", des.m(), des.total_cells(), des.total_obs());
    const json h = hyper_json_or_empty(a.hyper);
    FitArtifact art;
    if (a.method == "mfvb") {
        auto f = fit_mfvb(des, hyper_three_level_from_json(h), fit_options(a, ConvergenceMetric::ParamChange));
        log_mfvb(f);
        art.fit = std::move(f);
    } else {
        art.fit = fit_blup_three_level(des, variances_three_level_from_json(h));
    }
    save_artifact(a.out, art);
}

void run_contrast_fit(const FitArgs& a)
{
    const auto data = read_two_level_csv(a.data);
    const auto des = build_contrast_design(data, a.kgbl, a.kgrp);
    const auto hyper = hyper_two_level_from_json(hyper_json_or_empty(a.hyper), 4);
    auto f = fit_contrast(des, hyper, fit_options(a, ConvergenceMetric::Elbo));
    log_mfvb(f.mfvb);
    save_artifact(a.out, FitArtifact{std::move(f.mfvb)});
}

// "global", "group=G" or "subgroup=G/H", with G and H the labels from the data.
CurveTarget parse_target(const std::string& s, const FitArtifact& art)
{
    if (s == "global") return CurveTarget::global();
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("target must be global, group=G or subgroup=G/H, got '" + s + "'");
    const std::string kind = s.substr(0, eq), value = s.substr(eq + 1);
    if (kind == "group") {
        const auto& labels = std::visit([](const auto& f) -> const auto& { return f.model.labels; }, art.fit);
        return CurveTarget::of_group(find_label(labels, value));
    }
    if (kind == "subgroup") {
        if (art.level() != 3) throw ValidationError("subgroup targets need a three-level fit");
        const auto slash = value.find('/');
        if (slash == std::string::npos) throw ValidationError("subgroup target must be G/H, got '" + value + "'");
        const auto& model = std::visit(
            [](const auto& f) -> const ThreeLevelCurveModel& {
                if constexpr (std::is_same_v<std::decay_t<decltype(f.model)>, ThreeLevelCurveModel>) {
                    return f.model;
                } else {
                    throw ValidationError("subgroup targets need a three-level fit");
                }
            },
            art.fit);
        const int g = find_label(model.labels, value.substr(0, slash));
        const int h = find_label(model.sublabels[static_cast<std::size_t>(g)], value.substr(slash + 1));
        return CurveTarget::of_subgroup(g, h);
    }
    throw ValidationError("unknown target kind '" + kind + "'");
}

VectorXd grid_for(const PredictArgs& a, const FitArtifact& art)
{
    return a.grid.empty() ? default_grid(global_basis(art), a.points) : read_grid(a.grid);
}

void emit_band(const CurveBand& band, const std::string& out)
{
    if (out.empty()) {
        write_band_csv(std::cout, band);
    } else {
        write_band_csv(out, band);
    }
}

void run_predict(const PredictArgs& a)
{
    const auto art = load_artifact(a.fit);
    emit_band(predict_band(art, grid_for(a, art), parse_target(a.target, art), a.level), a.out);
}

void run_contrast_curve(const PredictArgs& a)
{
    auto art = load_artifact(a.fit);
    if (!art.is_contrast()) throw ValidationError("'" + a.fit + "' is not a contrast fit");
    const VectorXd grid = grid_for(a, art);
    const ContrastFit fit{std::get<MfvbFitTwoLevel>(std::move(art.fit))};
    emit_band(contrast_curve(fit, grid, a.level), a.out);
}

void run_simulate2(const SimArgs& a)
{
    SimConfig cfg;
    if (a.m > 0) cfg.m = a.m;
    cfg.seed = a.seed;
    cfg.sigma_eps = a.sigma;
    write_two_level_csv(a.out, simulate_two_level(cfg));
}

void run_simulate3(const SimArgs& a)
{
    ThreeLevelSimConfig cfg;
    if (a.m > 0) cfg.m = a.m;
    cfg.seed = a.seed;
    cfg.sigma_eps = a.sigma;
    write_three_level_csv(a.out, simulate_three_level(cfg));
}

std::vector<int> parse_int_list(const std::string& s)
{
    std::vector<int> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw ValidationError("not an integer list: '" + s + "'");
        }
    }
    return v;
}

void run_bench(const BenchArgs& a)
{
    BenchmarkOptions o;
    o.ms = parse_int_list(a.ms);
    o.replications = a.reps;
    o.fixed_iterations = a.fixed_iters;
    o.dimension_cap = a.cap;
    o.seed = a.seed;
    o.parallel = a.parallel;
    o.include_naive = !a.no_naive;
    const auto res = run_benchmark(o);
    if (a.out.empty()) {
        write_timing_csv(std::cout, res.records);
    } else {
        std::ofstream out(a.out);
        if (!out) throw ValidationError("cannot open '" + a.out + "' for writing");
        write_timing_csv(out, res.records);
    }
    if (!a.json_out.empty()) {
        std::ofstream out(a.json_out);
        if (!out) throw ValidationError("cannot open '" + a.json_out + "' for writing");
        out << to_json(res).dump(2) << '\n';
    }
    spdlog::info("streamlined log-log slope {:.3f}", res.slope_streamlined);
}

void add_fit_flags(CLI::App* sub, FitArgs& a, bool three_level, bool method)
{
    sub->add_option("--data", a.data, "input CSV")->required()->check(CLI::ExistingFile);
    if (method) sub->add_option("--method", a.method, "mfvb or blup")->check(CLI::IsMember({"mfvb", "blup"}));
    sub->add_option("--kgbl", a.kgbl, "interior knots of the global spline")->check(CLI::PositiveNumber);
    sub->add_option("--kgrp", a.kgrp, "interior knots of the group spline")->check(CLI::PositiveNumber);
    if (three_level) sub->add_option("--kgrp-h", a.kgrp_h, "interior knots of the subgroup spline")->check(CLI::PositiveNumber);
    sub->add_option("--hyper", a.hyper, "JSON overrides (hyperparameters for mfvb, variances for blup)")
        ->check(CLI::ExistingFile);
    sub->add_option("--tol", a.tol, "relative stopping tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", a.max_iter, "iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out, "artifact JSON")->required();
}

void add_predict_flags(CLI::App* sub, PredictArgs& a, bool target)
{
    sub->add_option("--fit", a.fit, "fit artifact JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--grid", a.grid, "grid file (default: equispaced over the training range)")->check(CLI::ExistingFile);
    sub->add_option("--points", a.points, "points in the default grid")->check(CLI::Range(2, 1000000));
    if (target) sub->add_option("--target", a.target, "global | group=G | subgroup=G/H");
    sub->add_option("--level", a.level, "credible level");
    sub->add_option("--out", a.out, "output CSV (default stdout)");
}

void add_sim_flags(CLI::App* sub, SimArgs& a)
{
    sub->add_option("--m", a.m, "number of groups")->check(CLI::PositiveNumber);
    sub->add_option("--seed", a.seed, "seed");
    sub->add_option("--sigma", a.sigma, "noise standard deviation")->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out, "output CSV")->required();
}

void setup_logging(bool quiet, bool json_logs)
{
    auto logger = spdlog::stderr_color_mt("curvestream");
    spdlog::set_default_logger(logger);
    if (json_logs) {
        spdlog::set_pattern(R"({"time":"%Y-%m-%dT%H:%M:%S.%e","level":"%l","msg":"%v"})");
    } else {
        spdlog::set_pattern("[%l] %v");
    }
    spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Streamlined variational inference for multilevel penalized-spline curve models"};
    app.require_subcommand(1);
    bool quiet = false, json_logs = false;
    app.add_flag("--quiet", quiet, "only log warnings and errors");
    app.add_flag("--json-logs", json_logs, "structured log lines on stderr");

    FitArgs f2, f3, fc;
    PredictArgs pr, pc;
    SimArgs s2, s3;
    BenchArgs bn;

    auto* fit2 = app.add_subcommand("fit2", "fit a two-level model");
    add_fit_flags(fit2, f2, false, true);
    auto* fit3 = app.add_subcommand("fit3", "fit a three-level model");
    add_fit_flags(fit3, f3, true, true);
    auto* cfit = app.add_subcommand("contrast-fit", "fit the two-category contrast model");
    add_fit_flags(cfit, fc, false, false);
    auto* predict = app.add_subcommand("predict", "pointwise mean and credible band from a fit");
    add_predict_flags(predict, pr, true);
    auto* ccurve = app.add_subcommand("contrast-curve", "contrast curve and band from a contrast fit");
    add_predict_flags(ccurve, pc, false);
    auto* sim2 = app.add_subcommand("simulate2", "simulate two-level data");
    add_sim_flags(sim2, s2);
    auto* sim3 = app.add_subcommand("simulate3", "simulate three-level data");
    add_sim_flags(sim3, s3);
    auto* bench = app.add_subcommand("bench", "time naive and streamlined fits");
    bench->add_option("--ms", bn.ms, "comma-separated group counts");
    bench->add_option("--reps", bn.reps, "replications")->check(CLI::PositiveNumber);
    bench->add_option("--fixed-iters", bn.fixed_iters, "iterations per fit")->check(CLI::PositiveNumber);
    bench->add_option("--cap", bn.cap, "largest naive system dimension")->check(CLI::PositiveNumber);
    bench->add_option("--seed", bn.seed, "seed");
    bench->add_flag("--parallel", bn.parallel, "run the streamlined fits multithreaded");
    bench->add_flag("--no-naive", bn.no_naive, "skip the naive variant");
    bench->add_option("--out", bn.out, "timing CSV (default stdout)");
    bench->add_option("--json", bn.json_out, "timing JSON with slopes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    setup_logging(quiet, json_logs);
    apply_thread_limit_from_env();

    try {
        if (*fit2) run_fit2(f2);
        if (*fit3) run_fit3(f3);
        if (*cfit) run_contrast_fit(fc);
        if (*predict) run_predict(pr);
        if (*ccurve) run_contrast_curve(pc);
        if (*sim2) run_simulate2(s2);
        if (*sim3) run_simulate3(s3);
        if (*bench) run_bench(bn);
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const NumericalError& e) {
        spdlog::error("numerical failure: {}", e.what());
        return 2;
    }
    return 0;
}
