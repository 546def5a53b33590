#pragma once

#include "curvestream/mfvb.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace curvestream {

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct SimConfig {
    int m = 100;
    int n_min = 30, n_max = 60;
    double sigma_eps = 0.2;
    std::uint64_t seed = 1;
};

struct ThreeLevelSimConfig {
    int m = 10;
    int n_min = 5, n_max = 5;
    int o_min = 128, o_max = 128;
    double sigma_eps = 0.2;
    std::uint64_t seed = 1;
};

void validate(const SimConfig& cfg);
void validate(const ThreeLevelSimConfig& cfg);

// f(x) = 3 sqrt(x (1.3 - x)) Phi(6x - 3)
double true_global_curve(double x);
VectorXd true_global_curve(const VectorXd& x);

// Group i draws from its own generator stream, seeded from (seed, i).
TwoLevelDataset simulate_two_level(const SimConfig& cfg);
ThreeLevelDataset simulate_three_level(const ThreeLevelSimConfig& cfg);

// ---------------------------------------------------------------------------
// Naive dense MFVB
// ---------------------------------------------------------------------------

inline constexpr int kDefaultDimensionCap = 20000;

// Same updates as fit_mfvb, but with the full (C^T C, prior precision) system stored and inverted densely.
// Runs exactly `iterations` cycles.
MfvbFitTwoLevel naive_mfvb(const TwoLevelDesign& des, const HyperparametersTwoLevel& hyper, int iterations,
                           int dimension_cap = kDefaultDimensionCap);
MfvbFitThreeLevel naive_mfvb(const ThreeLevelDesign& des, const HyperparametersThreeLevel& hyper, int iterations,
                             int dimension_cap = kDefaultDimensionCap);

// Number of coefficients in the full system.
std::size_t naive_dimension(const TwoLevelDesign& des);
std::size_t naive_dimension(const ThreeLevelDesign& des);

// ---------------------------------------------------------------------------
// Timing harness
// ---------------------------------------------------------------------------

enum class Variant { Naive, Streamlined };
std::string to_string(Variant v);

struct TimingRecord {
    int m = 0;
    Variant variant = Variant::Streamlined;
    double mean_seconds = 0.0;
    double sd_seconds = 0.0;
    int iterations = 0;
    int replications = 0;
    bool parallel = false;
};

struct BenchmarkOptions {
    std::vector<int> ms{50, 100, 200, 400};
    int replications = 3;
    int fixed_iterations = 50;
    int dimension_cap = kDefaultDimensionCap;
    std::uint64_t seed = 1;
    bool parallel = false;
    bool include_naive = true;
};

struct BenchmarkResult {
    std::vector<TimingRecord> records;
    std::vector<int> naive_skipped;  // m values above the dimension cap
    double slope_streamlined = 0.0;
    double slope_naive = 0.0;  // NaN with fewer than two naive records
};

BenchmarkResult run_benchmark(const BenchmarkOptions& opts);

// Least-squares slope of log(y) on log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Accuracy of a density approximation: 100 (1 - 0.5 int |q - p|), trapezoid rule.
// ---------------------------------------------------------------------------

inline constexpr double kDensityNormTolerance = 1e-3;

double accuracy(const VectorXd& grid, const VectorXd& q, const VectorXd& p);
double accuracy(const VectorXd& q_grid, const VectorXd& q, const VectorXd& p_grid, const VectorXd& p);

} // namespace curvestream
