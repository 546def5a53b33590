// Serial vs OpenMP kernels, and streamlined vs naive fits.
#include "curvestream/mfvb.hpp"
#include "curvestream/parallel.hpp"
#include "curvestream/simbench.hpp"

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <map>

using namespace curvestream;

namespace {

const TwoLevelDesign& design(int m)
{
    static std::map<int, TwoLevelDesign> cache;
    auto it = cache.find(m);
    if (it == cache.end()) {
        SimConfig cfg;
        cfg.m = m;
        it = cache.emplace(m, build_two_level_design(simulate_two_level(cfg))).first;
    }
    return it->second;
}

void BM_Solve(benchmark::State& st, Execution ex)
{
    const auto& des = design(static_cast<int>(st.range(0)));
    const auto hyper = HyperparametersTwoLevel::defaults();
    const auto pr = build_two_level_mfvb_blocks(init_q_state(des, hyper), des, hyper, ex);
    for (auto _ : st) benchmark::DoNotOptimize(solve_two_level(pr, ex));
    st.SetComplexityN(st.range(0));
}

void BM_Cycle(benchmark::State& st, Execution ex)
{
    const auto& des = design(static_cast<int>(st.range(0)));
    const auto hyper = HyperparametersTwoLevel::defaults();
    const auto s0 = init_q_state(des, hyper);
    for (auto _ : st) benchmark::DoNotOptimize(mfvb_cycle_two_level(s0, des, hyper, ex));
    st.SetComplexityN(st.range(0));
}

void BM_NaiveCycle(benchmark::State& st)
{
    const auto& des = design(static_cast<int>(st.range(0)));
    const auto hyper = HyperparametersTwoLevel::defaults();
    for (auto _ : st) benchmark::DoNotOptimize(naive_mfvb(des, hyper, 1));
    st.SetComplexityN(st.range(0));
}

} // namespace

BENCHMARK_CAPTURE(BM_Solve, serial, Execution::Serial)->RangeMultiplier(2)->Range(50, 400)->Complexity();
BENCHMARK_CAPTURE(BM_Solve, parallel, Execution::Parallel)->RangeMultiplier(2)->Range(50, 400)->Complexity();
BENCHMARK_CAPTURE(BM_Cycle, serial, Execution::Serial)->RangeMultiplier(2)->Range(50, 400)->Complexity();
BENCHMARK_CAPTURE(BM_Cycle, parallel, Execution::Parallel)->RangeMultiplier(2)->Range(50, 400)->Complexity();
BENCHMARK(BM_NaiveCycle)->RangeMultiplier(2)->Range(25, 100)->Unit(benchmark::kMillisecond)->Complexity();

int main(int argc, char** argv)
{
    spdlog::set_level(spdlog::level::warn);
    apply_thread_limit_from_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
