/*
 * pcle-toolkit
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PCLE_PARALLEL_HPP
#define PCLE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace pcle {

/// Worker count from PCLE_THREADS, else the hardware concurrency (at least 1).
int default_threads();

/**
 * Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
 * written to per-index slots so output does not depend on scheduling. If any
 * call throws, the exception of the lowest failing index is rethrown.
 */
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace pcle

#endif // PCLE_PARALLEL_HPP
