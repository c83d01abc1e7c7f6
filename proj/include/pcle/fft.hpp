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

#ifndef PCLE_FFT_HPP
#define PCLE_FFT_HPP

#include <complex>

#include "pcle/image.hpp"

namespace pcle {

using ComplexGrid = Grid<std::complex<double>>;

/// Unnormalized 2-D forward DFT.
ComplexGrid fft2(const ComplexGrid& in);
ComplexGrid fft2(const Grid<double>& in);

/// Inverse 2-D DFT, scaled by 1 / (rows * cols).
ComplexGrid ifft2(const ComplexGrid& in);

/// Smallest n' >= n whose only prime factors are 2, 3 and 5.
Index next_fast_size(Index n);

} // namespace pcle

#endif // PCLE_FFT_HPP
