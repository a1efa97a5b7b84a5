#include <algorithm>

#include <omp.h>

#include "espectra/types.hpp"

namespace espectra {

void set_thread_count(int threads) { omp_set_num_threads(std::max(threads, 1)); }

int thread_count() { return omp_get_max_threads(); }

}  // namespace espectra
