#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace hubbard_pert {

// Explicit request wins; otherwise HUBBARD_PERT_THREADS, then hardware concurrency.
int resolve_threads(int requested = 0);

// Runs task(i) for i in [0, count) on `threads` workers. Tasks write only to their own slot,
// so the result is independent of scheduling.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task);

// Pairwise summation in index order.
double pairwise_sum(const double* x, std::size_t n);

// Elementwise pairwise reduction of equally sized partial vectors.
std::vector<double> pairwise_reduce(const std::vector<std::vector<double>>& parts, std::size_t width);

}  // namespace hubbard_pert
