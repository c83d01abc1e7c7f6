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

#ifndef PCLE_FIBRESIM_HPP
#define PCLE_FIBRESIM_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcle/geometry.hpp"
#include "pcle/image.hpp"

namespace pcle {

/**
 * Geometric model of a fibre bundle imaged on a pixel grid.
 *
 * Holds the fibre centres, their Delaunay triangulation and, for every in-FoV
 * pixel, the owning Voronoi cell (nearest fibre, ties to the lower index) and
 * the containing triangle with barycentric weights. Immutable once built.
 */
class FibreLayout {
public:
    /// Builds all derived structures. Throws InvalidArgument on fewer than 3 fibres,
    /// duplicates, positions outside the frame or FoV, or a collinear set.
    FibreLayout(Index width, Index height, Mask fov, std::vector<Point2> fibres);

    Index width() const noexcept { return width_; }
    Index height() const noexcept { return height_; }
    const Mask& fov() const noexcept { return fov_; }
    std::size_t fibre_count() const noexcept { return fibres_.size(); }
    const std::vector<Point2>& fibres() const noexcept { return fibres_; }
    const std::vector<Triangle>& triangles() const noexcept { return tri_.triangles; }
    const std::vector<std::int32_t>& hull() const noexcept { return tri_.hull; }

    /// Linear pixel indices (y * width + x) of each fibre's Voronoi cell within the FoV.
    const std::vector<std::vector<Index>>& cells() const noexcept { return cells_; }

    /// Nearest fibre per pixel, -1 outside the FoV.
    const Grid<std::int32_t>& owner() const noexcept { return owner_; }

    /// Containing Delaunay triangle per pixel, -1 outside the FoV or the hull.
    const Grid<std::int32_t>& containing_triangle() const noexcept { return triangle_of_; }

    /// Barycentric weights of pixel `linear_index` within its containing triangle.
    Eigen::Array3d weights(Index linear_index) const { return weights_.row(linear_index); }

    bool in_hull(Index x, Index y) const { return triangle_of_(y, x) >= 0; }

    /// SHA-256 over frame size, FoV and fibre coordinates.
    const std::string& hash() const noexcept { return hash_; }

private:
    Index width_;
    Index height_;
    Mask fov_;
    std::vector<Point2> fibres_;
    Triangulation tri_;
    std::vector<std::vector<Index>> cells_;
    Grid<std::int32_t> owner_;
    Grid<std::int32_t> triangle_of_;
    Eigen::Array<double, Eigen::Dynamic, 3, Eigen::RowMajor> weights_;
    std::string hash_;
};

struct LayoutParams {
    double spacing = 4.0; ///< lattice pitch in pixels, >= 2
    double jitter = 0.2;  ///< max displacement as a fraction of spacing, in [0, 0.5]
    std::uint64_t seed = 0;

    void validate() const;
};

/**
 * Jittered hexagonal lattice centred on the frame. Each lattice site is moved
 * by a uniform offset in the disc of radius jitter * spacing; sites outside
 * the frame or FoV are discarded, then fibres whose Voronoi cell captures no
 * pixel are pruned so every cell can be sampled.
 */
FibreLayout generate_layout(Index width, Index height, const Mask& fov, const LayoutParams& params);

/// Reads a `fibre_id,x,y` CSV.
FibreLayout load_layout(const std::filesystem::path& path, Index width, Index height, const Mask& fov);
void save_layout(const FibreLayout& layout, const std::filesystem::path& path);

struct NoiseModel {
    double sigma_mult = 0.05;    ///< std of the multiplicative term m
    double sigma_add_rel = 0.01; ///< std of the additive term a, relative to max fs - min fs
    std::uint64_t seed = 0;

    void validate() const;
};

using FibreSignals = Eigen::ArrayXd;

enum class ExtractionMode { voronoi_average, seven_pixel_average };

ExtractionMode parse_extraction_mode(const std::string& name);
std::string to_string(ExtractionMode mode);

FibreSignals extract_signals(const Image& hr, const FibreLayout& layout,
                             ExtractionMode mode = ExtractionMode::voronoi_average);

/// nfs = (1 + m) * fs + a with m ~ N(0, sigma_mult^2), a ~ N(0, (sigma_add_rel * range fs)^2).
FibreSignals add_noise(const FibreSignals& fs, const NoiseModel& model);

/// Piecewise-linear interpolation on the Delaunay triangulation; in-FoV pixels
/// outside the hull take the nearest fibre's value, out-of-FoV pixels are 0.
Image reconstruct(const FibreSignals& signals, const FibreLayout& layout);

struct SimulationMetadata {
    std::string layout_hash;
    std::uint64_t seed = 0;
    double sigma_mult = 0.0;
    double sigma_add_rel = 0.0;
    ExtractionMode mode = ExtractionMode::voronoi_average;
};

struct SimulationResult {
    Image lr;
    SimulationMetadata metadata;
};

SimulationResult simulate_lr(const Image& hr, const FibreLayout& layout, const NoiseModel& model,
                             ExtractionMode mode = ExtractionMode::voronoi_average);

} // namespace pcle

#endif // PCLE_FIBRESIM_HPP
