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

#include "pcle/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pcle {

Mask circular_fov(Index width, Index height, double margin) {
    const double half = 0.5 * double(std::min(width, height));
    if (width <= 0 || height <= 0 || margin < 0.0 || margin >= half)
        throw InvalidArgument("circular_fov: margin must satisfy 0 <= margin < min(width, height)/2");
    const double radius = half - margin;
    const double cx = 0.5 * double(width - 1);
    const double cy = 0.5 * double(height - 1);
    Mask mask(height, width);
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            const double dx = double(x) - cx;
            const double dy = double(y) - cy;
            mask(y, x) = dx * dx + dy * dy <= radius * radius;
        }
    return mask;
}

std::vector<double> fov_values(const Image& img) {
    std::vector<double> out;
    out.reserve(std::size_t(img.valid_count()));
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            if (img.in_fov(x, y)) out.push_back(img(x, y));
    return out;
}

NormalizationStats compute_lr_stats(const std::vector<Image>& images) {
    if (images.empty()) throw InvalidArgument("compute_lr_stats: empty image collection");
    // Two passes for numerical stability.
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t count = 0;
    for (const auto& img : images)
        for (double v : fov_values(img)) {
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            ++count;
        }
    if (count == 0) throw InvalidArgument("compute_lr_stats: no in-FoV pixels");
    const double mean = sum / double(count);
    double ss = 0.0;
    for (const auto& img : images)
        for (double v : fov_values(img)) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(count));
    if (!(hi > lo) || !(sd > 0.0)) throw DegenerateInput("compute_lr_stats: zero variance");
    return {mean, sd};
}

namespace {

template <typename F>
Image map_in_fov(const Image& img, F&& f) {
    Image out(img.width(), img.height(), 0.0);
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            if (img.in_fov(x, y)) out(x, y) = f(img(x, y));
    if (img.has_fov()) out.set_fov(*img.fov());
    return out;
}

} // namespace

Image normalize(const Image& img, const NormalizationStats& stats) {
    if (!(stats.std_lr > 0.0)) throw InvalidArgument("normalize: std_lr must be positive");
    return map_in_fov(img, [&](double v) { return (v - stats.mean_lr) / stats.std_lr; });
}

Image denormalize(const Image& img, const NormalizationStats& stats) {
    return map_in_fov(img, [&](double v) { return v * stats.std_lr + stats.mean_lr; });
}

RescaleResult rescale_unit(const Image& img) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            if (img.in_fov(x, y)) {
                lo = std::min(lo, img(x, y));
                hi = std::max(hi, img(x, y));
            }
    if (!(hi > lo)) return {map_in_fov(img, [](double) { return 0.0; }), true};
    const double span = hi - lo;
    return {map_in_fov(img, [&](double v) { return (v - lo) / span; }), false};
}

std::vector<Patch> extract_patches(const Image& img, Index size, bool full_fov_only,
                                   double min_fov_fraction) {
    if (size <= 0 || size > std::min(img.width(), img.height()))
        throw InvalidArgument("extract_patches: patch size must be in [1, min(width, height)]");
    const Mask valid = img.valid_mask();
    const double tile_area = double(size * size);
    std::vector<Patch> patches;
    for (Index oy = 0; oy + size <= img.height(); oy += size)
        for (Index ox = 0; ox + size <= img.width(); ox += size) {
            const Index inside = valid.block(oy, ox, size, size).count();
            const bool keep = full_fov_only ? inside == size * size
                                            : double(inside) >= min_fov_fraction * tile_area;
            if (keep) patches.push_back({ox, oy, img.data().block(oy, ox, size, size)});
        }
    return patches;
}

} // namespace pcle
