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

#include "pcle/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "pcle/fft.hpp"

namespace pcle {

Boundary parse_boundary(const std::string& name) {
    if (name == "symmetric") return Boundary::symmetric;
    if (name == "periodic") return Boundary::periodic;
    throw InvalidArgument("unknown boundary '" + name + "' (expected symmetric or periodic)");
}

std::string to_string(Boundary b) { return b == Boundary::symmetric ? "symmetric" : "periodic"; }

void WienerParams::validate() const {
    if (!(psf_sigma > 0.0) || !std::isfinite(psf_sigma)) throw InvalidArgument("wiener: psf_sigma must be positive");
    if (!(nsr >= 0.0) || !std::isfinite(nsr)) throw InvalidArgument("wiener: nsr must be non-negative");
    if (!(psf_support > 0.0)) throw InvalidArgument("wiener: psf_support must be positive");
}

void SharpenParams::validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("sharpen: radius must be positive");
    if (!(amount >= 0.0) || !std::isfinite(amount)) throw InvalidArgument("sharpen: amount must be non-negative");
}

Eigen::ArrayXd gaussian_kernel_1d(double sigma, double support) {
    const Index r = Index(std::ceil(support * sigma));
    Eigen::ArrayXd k(2 * r + 1);
    for (Index i = -r; i <= r; ++i) k(i + r) = std::exp(-double(i * i) / (2.0 * sigma * sigma));
    return k / k.sum();
}

namespace {

Index reflect(Index i, Index n) {
    const Index period = 2 * n;
    Index m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

Grid<double> mean_filled(const Image& img) {
    double sum = 0.0;
    Index n = 0;
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            if (img.in_fov(x, y)) {
                sum += img(x, y);
                ++n;
            }
    if (n == 0) throw InvalidArgument("wiener: image has no FoV pixels");
    const double mean = sum / double(n);
    Grid<double> out(img.height(), img.width());
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x) out(y, x) = img.in_fov(x, y) ? img(x, y) : mean;
    return out;
}

Image with_fov(Grid<double> data, const Image& like) {
    if (like.has_fov()) data = like.fov()->select(data, 0.0);
    Image out(std::move(data));
    if (like.has_fov()) out.set_fov(*like.fov());
    return out;
}

} // namespace

Image wiener_deconvolve(const Image& img, const WienerParams& params) {
    params.validate();
    if (img.empty()) throw InvalidArgument("wiener: empty image");
    const Grid<double> filled = mean_filled(img);
    const Index w = img.width(), h = img.height();
    const Eigen::ArrayXd k = gaussian_kernel_1d(params.psf_sigma, params.psf_support);
    const Index r = (k.size() - 1) / 2;

    Index pw = w, ph = h, left = 0, top = 0;
    if (params.boundary == Boundary::symmetric) {
        pw = next_fast_size(w + 2 * r);
        ph = next_fast_size(h + 2 * r);
        left = r;
        top = r;
    }
    Grid<double> padded(ph, pw);
    for (Index y = 0; y < ph; ++y)
        for (Index x = 0; x < pw; ++x) padded(y, x) = filled(reflect(y - top, h), reflect(x - left, w));

    Grid<double> psf = Grid<double>::Zero(ph, pw);
    for (Index j = -r; j <= r; ++j)
        for (Index i = -r; i <= r; ++i) psf(((j % ph) + ph) % ph, ((i % pw) + pw) % pw) += k(j + r) * k(i + r);

    const ComplexGrid H = fft2(psf);
    const ComplexGrid G = H.conjugate() / (H.abs2() + params.nsr).cast<std::complex<double>>();
    // Bins where H vanishes exactly carry no information; with nsr = 0 they would be 0/0.
    const ComplexGrid filter = (H.abs2() + params.nsr > 0.0).select(G, std::complex<double>(0.0));
    const Grid<double> restored = ifft2(fft2(padded) * filter).real();
    return with_fov(restored.block(top, left, h, w), img);
}

Image unsharp_sharpen(const Image& img, const SharpenParams& params) {
    params.validate();
    if (img.empty()) throw InvalidArgument("sharpen: empty image");
    const Eigen::ArrayXd k = gaussian_kernel_1d(params.radius, 3.0);
    const Index r = (k.size() - 1) / 2;
    const Index w = img.width(), h = img.height();
    Grid<double> out = img.data();
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (!img.in_fov(x, y)) {
                out(y, x) = 0.0;
                continue;
            }
            // Detail in - blur(in) accumulated as weighted differences so a flat
            // neighbourhood yields exactly zero.
            const double centre = img(x, y);
            double detail = 0.0, wsum = 0.0;
            for (Index j = -r; j <= r; ++j) {
                const Index yy = y + j;
                if (yy < 0 || yy >= h) continue;
                for (Index i = -r; i <= r; ++i) {
                    const Index xx = x + i;
                    if (xx < 0 || xx >= w || !img.in_fov(xx, yy)) continue;
                    const double wt = k(j + r) * k(i + r);
                    detail += wt * (centre - img(xx, yy));
                    wsum += wt;
                }
            }
            double v = centre + params.amount * (detail / wsum);
            if (params.clamp) v = std::clamp(v, 0.0, 1.0);
            out(y, x) = v;
        }
    Image result(std::move(out));
    if (img.has_fov()) result.set_fov(*img.fov());
    return result;
}

} // namespace pcle
