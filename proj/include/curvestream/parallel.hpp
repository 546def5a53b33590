#pragma once

#include <exception>
#include <limits>

namespace curvestream {

enum class Execution { Parallel, Serial };

// Reads CURVESTREAM_THREADS (if set) and caps the OpenMP team size.
void apply_thread_limit_from_env();
int max_threads();

// Runs f(0..n-1), in parallel when requested. An exception thrown for the
// smallest index is rethrown on the calling thread after the loop.
template <class F>
void for_each_index(int n, Execution ex, F&& f)
{
    std::exception_ptr err;
    int err_index = std::numeric_limits<int>::max();
    const bool par = (ex == Execution::Parallel) && n > 1;
#pragma omp parallel for schedule(dynamic) if (par)
    for (int i = 0; i < n; ++i) {
        try {
            f(i);
        } catch (...) {
#pragma omp critical(curvestream_loop_error)
            {
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    }
    if (err) std::rethrow_exception(err);
}

} // namespace curvestream
