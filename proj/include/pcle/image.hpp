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

#ifndef PCLE_IMAGE_HPP
#define PCLE_IMAGE_HPP

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "pcle/error.hpp"

namespace pcle {

using Index = Eigen::Index;

/// Row-major dense grid indexed (row, col) = (y, x).
template <typename Scalar>
using Grid = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mask = Grid<bool>;

/**
 * Single-channel intensity image with an optional field-of-view mask.
 *
 * Pixel (x, y) has its centre at continuous coordinate (x, y). Pixels outside
 * the mask are treated as absent by every statistic and metric in the toolkit.
 */
template <typename Scalar>
class BasicImage {
public:
    using scalar_type = Scalar;

    BasicImage() = default;

    BasicImage(Index width, Index height, Scalar fill = Scalar(0))
        : data_(Grid<Scalar>::Constant(height, width, fill)) {}

    explicit BasicImage(Grid<Scalar> data, std::optional<Mask> fov = std::nullopt)
        : data_(std::move(data)) {
        if (fov) set_fov(std::move(*fov));
    }

    Index width() const noexcept { return data_.cols(); }
    Index height() const noexcept { return data_.rows(); }
    Index size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.size() == 0; }

    const Grid<Scalar>& data() const noexcept { return data_; }
    Grid<Scalar>& data() noexcept { return data_; }

    Scalar operator()(Index x, Index y) const { return data_(y, x); }
    Scalar& operator()(Index x, Index y) { return data_(y, x); }

    bool has_fov() const noexcept { return fov_.has_value(); }
    const std::optional<Mask>& fov() const noexcept { return fov_; }

    void set_fov(Mask fov) {
        if (fov.rows() != data_.rows() || fov.cols() != data_.cols())
            throw InvalidArgument("FoV mask dimensions do not match the image");
        fov_ = std::move(fov);
    }

    void clear_fov() noexcept { fov_.reset(); }

    bool in_fov(Index x, Index y) const { return !fov_ || (*fov_)(y, x); }

    /// Mask of pixels that take part in computations (all-true without a FoV).
    Mask valid_mask() const {
        return fov_ ? *fov_ : Mask::Constant(data_.rows(), data_.cols(), true);
    }

    Index valid_count() const { return fov_ ? Index(fov_->count()) : data_.size(); }

    bool same_shape(const BasicImage& other) const noexcept {
        return width() == other.width() && height() == other.height();
    }

    template <typename Other>
    BasicImage<Other> cast() const {
        return BasicImage<Other>(data_.template cast<Other>(), fov_);
    }

private:
    Grid<Scalar> data_;
    std::optional<Mask> fov_;
};

using Image = BasicImage<double>;
using ImageF = BasicImage<float>;

/// Mean and population standard deviation of the LR training population.
struct NormalizationStats {
    double mean_lr = 0.0;
    double std_lr = 1.0;
};

struct Patch {
    Index origin_x = 0;
    Index origin_y = 0;
    Grid<double> data;

    Index size() const noexcept { return data.rows(); }
};

struct RescaleResult {
    Image image;
    bool degenerate = false;
};

/// Centred circle of radius min(width, height)/2 - margin; pixel centres at distance <= radius are inside.
Mask circular_fov(Index width, Index height, double margin);

NormalizationStats compute_lr_stats(const std::vector<Image>& images);

/// Z-score with LR statistics; out-of-FoV pixels are zeroed.
Image normalize(const Image& img, const NormalizationStats& stats);
Image denormalize(const Image& img, const NormalizationStats& stats);

/// Per-frame min-max rescale to [0, 1] over in-FoV pixels.
RescaleResult rescale_unit(const Image& img);

/**
 * Tiles `img` with non-overlapping `size` x `size` squares anchored at (0, 0);
 * trailing rows and columns that do not fill a tile are dropped. A tile is kept
 * if all of its pixels are in the FoV (`full_fov_only`) or if at least
 * `min_fov_fraction` of them are.
 */
std::vector<Patch> extract_patches(const Image& img, Index size, bool full_fov_only,
                                   double min_fov_fraction = 0.5);

/// In-FoV pixel values in row-major order.
std::vector<double> fov_values(const Image& img);

} // namespace pcle

#endif // PCLE_IMAGE_HPP
