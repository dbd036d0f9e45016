#pragma once

#include <cstddef>
#include <functional>

namespace bpstack {

// Worker cap for every parallel section. 0 restores the default
// (hardware concurrency). Results never depend on this value: tasks write
// into pre-sized slots and reductions run in index order afterwards.
void set_max_threads(std::size_t n);
std::size_t max_threads();

void parallel_for(std::size_t n_tasks, const std::function<void(std::size_t)>& task);

}  // namespace bpstack
