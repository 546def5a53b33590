#include "curvestream/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace curvestream {

void apply_thread_limit_from_env()
{
    const char* v = std::getenv("CURVESTREAM_THREADS");
    if (!v) return;
    int n = 0;
    try {
        n = std::stoi(v);
    } catch (...) {
        return;
    }
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace curvestream
