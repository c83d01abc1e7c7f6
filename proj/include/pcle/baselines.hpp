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

#ifndef PCLE_BASELINES_HPP
#define PCLE_BASELINES_HPP

#include <string>

#include "pcle/image.hpp"

namespace pcle {

enum class Boundary { symmetric, periodic };

Boundary parse_boundary(const std::string& name);
std::string to_string(Boundary b);

struct WienerParams {
    double psf_sigma = 2.0;
    double nsr = 0.01;
    /// Kernel truncation radius in multiples of psf_sigma.
    double psf_support = 4.0;
    Boundary boundary = Boundary::symmetric;

    void validate() const;
};

/// Sampled, truncated, unit-sum Gaussian; (2r + 1) taps with r = ceil(support * sigma).
Eigen::ArrayXd gaussian_kernel_1d(double sigma, double support);

/**
 * Frequency-domain Wiener deconvolution conj(H) / (|H|^2 + nsr) with a Gaussian PSF.
 *
 * Out-of-FoV pixels are filled with the in-FoV mean first. With symmetric
 * boundaries the image is mirror-padded by the kernel radius and up to a
 * 2,3,5-smooth size, then cropped. Output pixels outside the FoV are zero.
 */
Image wiener_deconvolve(const Image& img, const WienerParams& params = {});

struct SharpenParams {
    double radius = 1.5;
    double amount = 1.0;
    bool clamp = true;

    void validate() const;
};

/**
 * Unsharp masking: in + amount * (in - blur(in)).
 *
 * The Gaussian blur (radius = sigma, truncated at 3 sigma) is a normalized
 * convolution over in-FoV neighbours, so masked pixels never leak in.
 */
Image unsharp_sharpen(const Image& img, const SharpenParams& params = {});

inline Image identity_baseline(const Image& img) { return img; }

} // namespace pcle

#endif // PCLE_BASELINES_HPP
