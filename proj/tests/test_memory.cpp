// Allocation accounting: malloc and friends are interposed so Eigen and operator new are both counted.
#include "fixtures.hpp"

#include "curvestream/simbench.hpp"

#include <gtest/gtest.h>

#include <malloc.h>

#include <atomic>
#include <cerrno>
#include <cstddef>

extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void* __libc_memalign(std::size_t, std::size_t);
void __libc_free(void*);
}

namespace {

std::atomic<long long> g_live{0}, g_peak{0}, g_largest{0};
std::atomic<bool> g_on{false};

void on_alloc(void* p)
{
    if (!p || !g_on.load(std::memory_order_relaxed)) return;
    const auto sz = static_cast<long long>(malloc_usable_size(p));
    const long long now = g_live.fetch_add(sz) + sz;
    long long peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {}
    long long big = g_largest.load();
    while (sz > big && !g_largest.compare_exchange_weak(big, sz)) {}
}

void on_free(void* p)
{
    if (!p || !g_on.load(std::memory_order_relaxed)) return;
    g_live.fetch_sub(static_cast<long long>(malloc_usable_size(p)));
}

struct Usage {
    long long peak, largest;
};

// Peak bytes above the level at entry. Frees of blocks allocated before entry can push the live count
// negative, which only lowers the reported peak for memory the measured call did not own.
template <class F>
Usage measure(F&& f)
{
    g_live = 0;
    g_peak = 0;
    g_largest = 0;
    g_on = true;
    f();
    g_on = false;
    return {g_peak.load(), g_largest.load()};
}

} // namespace

extern "C" {
void* malloc(std::size_t n)
{
    void* p = __libc_malloc(n);
    on_alloc(p);
    return p;
}
void* calloc(std::size_t a, std::size_t b)
{
    void* p = __libc_calloc(a, b);
    on_alloc(p);
    return p;
}
void* realloc(void* q, std::size_t n)
{
    on_free(q);
    void* p = __libc_realloc(q, n);
    on_alloc(p);
    return p;
}
void* memalign(std::size_t al, std::size_t n)
{
    void* p = __libc_memalign(al, n);
    on_alloc(p);
    return p;
}
void* aligned_alloc(std::size_t al, std::size_t n) { return memalign(al, n); }
int posix_memalign(void** out, std::size_t al, std::size_t n)
{
    void* p = memalign(al, n);
    if (!p) return ENOMEM;
    *out = p;
    return 0;
}
void free(void* p)
{
    on_free(p);
    __libc_free(p);
}
}

using namespace curvestream;

namespace {

TwoLevelDesign sim_design(int m)
{
    SimConfig cfg;
    cfg.m = m;
    return build_two_level_design(simulate_two_level(cfg));
}

} // namespace

TEST(Memory, CounterSeesEigenAllocations)
{
    const auto u = measure([] {
        MatrixXd M = MatrixXd::Ones(300, 300);
        ASSERT_GT(M.sum(), 0.0);
    });
    EXPECT_GE(u.largest, 300LL * 300 * 8);
}

TEST(Memory, StreamlinedFourHundredBelowNaiveHundred)
{
    const auto d100 = sim_design(100);
    const auto d400 = sim_design(400);
    const auto hyper = HyperparametersTwoLevel::defaults();
    FitOptions opts;
    opts.max_iterations = 3;
    opts.fixed_iterations = true;

    const auto naive = measure([&] { naive_mfvb(d100, hyper, 3); });
    const auto fast = measure([&] { fit_mfvb(d400, hyper, opts); });
    const long long P100 = static_cast<long long>(naive_dimension(d100));
    EXPECT_GE(naive.largest, P100 * P100 * 8);
    EXPECT_LT(fast.peak, naive.peak) << "streamlined m=400 peak " << fast.peak << ", naive m=100 peak " << naive.peak;
}

TEST(Memory, NoAllocationQuadraticInGroups)
{
    // The largest block is the stacked reduced global system: rows grow with N, columns stay at p.
    FitOptions opts;
    opts.max_iterations = 2;
    opts.fixed_iterations = true;
    const auto hyper = HyperparametersTwoLevel::defaults();
    const auto d50 = sim_design(50), d400 = sim_design(400);
    const auto small = measure([&] { fit_mfvb(d50, hyper, opts); });
    const auto big = measure([&] { fit_mfvb(d400, hyper, opts); });
    const double n_ratio = static_cast<double>(d400.total_obs()) / static_cast<double>(d50.total_obs());
    EXPECT_LT(static_cast<double>(big.largest) / static_cast<double>(small.largest), 1.5 * n_ratio);
    EXPECT_LT(static_cast<double>(big.peak) / static_cast<double>(small.peak), 1.5 * n_ratio);
    const long long mq = static_cast<long long>(d400.m()) * d400.q();
    EXPECT_LT(big.largest, mq * mq * 8);
    EXPECT_LE(big.largest, static_cast<long long>(d400.total_obs() + d400.m() * (d400.K_gbl() + d400.q())) * d400.p() * 8 + 4096);
}

TEST(Memory, ThreeLevelStreamlinedBelowNaive)
{
    ThreeLevelSimConfig cfg;
    cfg.m = 20;
    const auto des = build_three_level_design(simulate_three_level(cfg));
    const auto hyper = HyperparametersThreeLevel::defaults();
    FitOptions opts{.max_iterations = 2, .metric = ConvergenceMetric::ParamChange, .fixed_iterations = true};
    const auto naive = measure([&] { naive_mfvb(des, hyper, 2); });
    const auto fast = measure([&] { fit_mfvb(des, hyper, opts); });
    EXPECT_LT(fast.peak, naive.peak / 4);
}
