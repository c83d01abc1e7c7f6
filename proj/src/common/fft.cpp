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

#include "pcle/fft.hpp"

#include <unsupported/Eigen/FFT>

#include <vector>

namespace pcle {

namespace {

ComplexGrid transform(const ComplexGrid& in, bool forward) {
    ComplexGrid out(in.rows(), in.cols());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> src, dst;

    src.resize(std::size_t(in.cols()));
    for (Index r = 0; r < in.rows(); ++r) {
        for (Index c = 0; c < in.cols(); ++c) src[std::size_t(c)] = in(r, c);
        forward ? fft.fwd(dst, src) : fft.inv(dst, src);
        for (Index c = 0; c < in.cols(); ++c) out(r, c) = dst[std::size_t(c)];
    }
    src.resize(std::size_t(in.rows()));
    for (Index c = 0; c < in.cols(); ++c) {
        for (Index r = 0; r < in.rows(); ++r) src[std::size_t(r)] = out(r, c);
        forward ? fft.fwd(dst, src) : fft.inv(dst, src);
        for (Index r = 0; r < in.rows(); ++r) out(r, c) = dst[std::size_t(r)];
    }
    return out;
}

} // namespace

ComplexGrid fft2(const ComplexGrid& in) { return transform(in, true); }

ComplexGrid fft2(const Grid<double>& in) { return transform(in.cast<std::complex<double>>(), true); }

ComplexGrid ifft2(const ComplexGrid& in) { return transform(in, false); }

Index next_fast_size(Index n) {
    for (Index m = std::max<Index>(n, 1);; ++m) {
        Index r = m;
        for (Index p : {2, 3, 5})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

} // namespace pcle
