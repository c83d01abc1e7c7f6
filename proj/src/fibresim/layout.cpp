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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pcle/fibresim.hpp"
#include "pcle/hash.hpp"
#include "pcle/rng.hpp"

namespace pcle {

namespace {

/// Uniform bucket grid for nearest-fibre queries on the pixel lattice.
class BucketGrid {
public:
    BucketGrid(const std::vector<Point2>& pts, Index width, Index height) : pts_(pts) {
        const double area = double(width) * double(height);
        cell_ = std::max(1.0, std::sqrt(area / double(std::max<std::size_t>(pts.size(), 1))));
        nx_ = Index(std::ceil(double(width) / cell_)) + 1;
        ny_ = Index(std::ceil(double(height) / cell_)) + 1;
        buckets_.resize(std::size_t(nx_ * ny_));
        for (std::size_t i = 0; i < pts.size(); ++i)
            buckets_[std::size_t(bucket_y(pts[i].y) * nx_ + bucket_x(pts[i].x))].push_back(std::int32_t(i));
    }

    /// Nearest point to (x, y); ties resolve to the lower index.
    std::int32_t nearest(double x, double y) const {
        const Index bx = bucket_x(x);
        const Index by = bucket_y(y);
        double best_d2 = std::numeric_limits<double>::infinity();
        std::int32_t best = -1;
        const Index max_ring = std::max(nx_, ny_);
        for (Index ring = 0; ring <= max_ring; ++ring) {
            // Points in rings >= ring are at least (ring - 1) cells away.
            const double reach = double(ring - 1) * cell_;
            if (best >= 0 && ring > 0 && best_d2 < reach * reach) break;
            for (Index gy = by - ring; gy <= by + ring; ++gy) {
                if (gy < 0 || gy >= ny_) continue;
                const bool edge_row = gy == by - ring || gy == by + ring;
                for (Index gx = bx - ring; gx <= bx + ring; gx += (edge_row ? 1 : 2 * std::max<Index>(ring, 1))) {
                    if (gx < 0 || gx >= nx_) continue;
                    for (auto idx : buckets_[std::size_t(gy * nx_ + gx)]) {
                        const double dx = pts_[std::size_t(idx)].x - x;
                        const double dy = pts_[std::size_t(idx)].y - y;
                        const double d2 = dx * dx + dy * dy;
                        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                            best_d2 = d2;
                            best = idx;
                        }
                    }
                }
            }
        }
        return best;
    }

private:
    Index bucket_x(double x) const { return std::clamp(Index(std::floor((x + 0.5) / cell_)), Index(0), nx_ - 1); }
    Index bucket_y(double y) const { return std::clamp(Index(std::floor((y + 0.5) / cell_)), Index(0), ny_ - 1); }

    const std::vector<Point2>& pts_;
    double cell_ = 1.0;
    Index nx_ = 1;
    Index ny_ = 1;
    std::vector<std::vector<std::int32_t>> buckets_;
};

bool inside_frame(const Point2& p, Index width, Index height) {
    return p.x >= -0.5 && p.y >= -0.5 && p.x < double(width) - 0.5 && p.y < double(height) - 0.5;
}

bool inside_fov(const Point2& p, const Mask& fov) {
    const auto x = Index(std::floor(p.x + 0.5));
    const auto y = Index(std::floor(p.y + 0.5));
    return fov(y, x);
}

std::string layout_digest(Index width, Index height, const Mask& fov, const std::vector<Point2>& fibres) {
    std::vector<std::uint8_t> bytes;
    auto put = [&](const void* data, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), b, b + n);
    };
    const std::int64_t dims[2] = {std::int64_t(width), std::int64_t(height)};
    put(dims, sizeof dims);
    for (Index i = 0; i < fov.size(); ++i) bytes.push_back(fov.data()[i] ? 1 : 0);
    for (const auto& p : fibres) {
        put(&p.x, sizeof p.x);
        put(&p.y, sizeof p.y);
    }
    return sha256_hex(std::span<const std::uint8_t>(bytes));
}

} // namespace

FibreLayout::FibreLayout(Index width, Index height, Mask fov, std::vector<Point2> fibres)
    : width_(width), height_(height), fov_(std::move(fov)), fibres_(std::move(fibres)) {
    if (width_ <= 0 || height_ <= 0) throw InvalidArgument("layout: empty frame");
    if (fov_.rows() != height_ || fov_.cols() != width_) throw InvalidArgument("layout: FoV mask size mismatch");
    if (fibres_.size() < 3) throw InvalidArgument("layout: need at least 3 fibres, got " + std::to_string(fibres_.size()));
    for (std::size_t i = 0; i < fibres_.size(); ++i) {
        const auto& p = fibres_[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !inside_frame(p, width_, height_))
            throw InvalidArgument("layout: fibre " + std::to_string(i) + " lies outside the frame");
        if (!inside_fov(p, fov_)) throw InvalidArgument("layout: fibre " + std::to_string(i) + " lies outside the FoV");
    }
    {
        std::vector<Point2> sorted = fibres_;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InvalidArgument("layout: duplicate fibre positions");
    }

    tri_ = delaunay_triangulate(fibres_);

    // Voronoi ownership of every in-FoV pixel.
    BucketGrid grid(fibres_, width_, height_);
    owner_ = Grid<std::int32_t>::Constant(height_, width_, -1);
    cells_.assign(fibres_.size(), {});
    for (Index y = 0; y < height_; ++y)
        for (Index x = 0; x < width_; ++x) {
            if (!fov_(y, x)) continue;
            const auto f = grid.nearest(double(x), double(y));
            owner_(y, x) = f;
            cells_[std::size_t(f)].push_back(y * width_ + x);
        }

    // Containing triangle and barycentric weights; lower triangle index wins on shared edges.
    triangle_of_ = Grid<std::int32_t>::Constant(height_, width_, -1);
    weights_.setZero(width_ * height_, 3);
    for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
        const auto& tr = tri_.triangles[t];
        const Point2& a = fibres_[std::size_t(tr[0])];
        const Point2& b = fibres_[std::size_t(tr[1])];
        const Point2& c = fibres_[std::size_t(tr[2])];
        const Index x0 = std::max<Index>(0, Index(std::ceil(std::min({a.x, b.x, c.x}))));
        const Index x1 = std::min<Index>(width_ - 1, Index(std::floor(std::max({a.x, b.x, c.x}))));
        const Index y0 = std::max<Index>(0, Index(std::ceil(std::min({a.y, b.y, c.y}))));
        const Index y1 = std::min<Index>(height_ - 1, Index(std::floor(std::max({a.y, b.y, c.y}))));
        const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        for (Index y = y0; y <= y1; ++y)
            for (Index x = x0; x <= x1; ++x) {
                if (!fov_(y, x) || triangle_of_(y, x) >= 0) continue;
                const Point2 p{double(x), double(y)};
                if (orient2d(a, b, p) < 0 || orient2d(b, c, p) < 0 || orient2d(c, a, p) < 0) continue;
                triangle_of_(y, x) = std::int32_t(t);
                const double wa = ((b.x - p.x) * (c.y - p.y) - (b.y - p.y) * (c.x - p.x)) / area;
                const double wb = ((c.x - p.x) * (a.y - p.y) - (c.y - p.y) * (a.x - p.x)) / area;
                const double wc = ((a.x - p.x) * (b.y - p.y) - (a.y - p.y) * (b.x - p.x)) / area;
                weights_.row(y * width_ + x) << wa, wb, wc;
            }
    }

    hash_ = layout_digest(width_, height_, fov_, fibres_);
}

void LayoutParams::validate() const {
    if (!(spacing >= 2.0) || !std::isfinite(spacing)) throw InvalidArgument("layout: spacing must be >= 2 pixels");
    if (!(jitter >= 0.0 && jitter <= 0.5)) throw InvalidArgument("layout: jitter must be in [0, 0.5]");
}

FibreLayout generate_layout(Index width, Index height, const Mask& fov, const LayoutParams& params) {
    params.validate();
    if (fov.rows() != height || fov.cols() != width) throw InvalidArgument("generate_layout: FoV mask size mismatch");

    constexpr double two_pi = 6.283185307179586476925286766559;
    const double row_pitch = params.spacing * std::sqrt(3.0) / 2.0;
    const double cx = 0.5 * double(width - 1);
    const double cy = 0.5 * double(height - 1);
    const Index rows = Index(std::ceil(0.5 * double(height) / row_pitch)) + 1;
    const Index cols = Index(std::ceil(0.5 * double(width) / params.spacing)) + 1;
    const double radius = params.jitter * params.spacing;

    Rng rng(derive_seed(params.seed, "fibre-layout"));
    std::vector<Point2> fibres;
    for (Index j = -rows; j <= rows; ++j) {
        const double shift = (((j % 2) + 2) % 2) ? 0.5 : 0.0;
        for (Index i = -cols; i <= cols; ++i) {
            Point2 p{cx + (double(i) + shift) * params.spacing, cy + double(j) * row_pitch};
            // Always draw, so the stream does not depend on which sites survive.
            const double r = radius * std::sqrt(uniform01(rng));
            const double theta = two_pi * uniform01(rng);
            p.x += r * std::cos(theta);
            p.y += r * std::sin(theta);
            if (inside_frame(p, width, height) && inside_fov(p, fov)) fibres.push_back(p);
        }
    }

    for (;;) {
        if (fibres.size() < 3)
            throw InvalidArgument("generate_layout: fewer than 3 fibres fit in the FoV");
        FibreLayout layout(width, height, fov, fibres);
        std::vector<Point2> kept;
        kept.reserve(fibres.size());
        for (std::size_t i = 0; i < fibres.size(); ++i)
            if (!layout.cells()[i].empty()) kept.push_back(fibres[i]);
        if (kept.size() == fibres.size()) return layout;
        fibres = std::move(kept);
    }
}

FibreLayout load_layout(const std::filesystem::path& path, Index width, Index height, const Mask& fov) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open layout " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty layout file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "fibre_id,x,y") throw IoError(path.string() + ": expected header 'fibre_id,x,y'");
    std::vector<Point2> fibres;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string id, xs, ys;
        if (!std::getline(row, id, ',') || !std::getline(row, xs, ',') || !std::getline(row, ys))
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        try {
            std::size_t used = 0;
            const double x = std::stod(xs, &used);
            if (used != xs.size()) throw std::invalid_argument(xs);
            const double y = std::stod(ys, &used);
            if (used != ys.size()) throw std::invalid_argument(ys);
            fibres.push_back({x, y});
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": invalid coordinate");
        }
    }
    return FibreLayout(width, height, fov, std::move(fibres));
}

void save_layout(const FibreLayout& layout, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write layout " + path.string());
    out << "fibre_id,x,y\n";
    char buf[96];
    for (std::size_t i = 0; i < layout.fibre_count(); ++i) {
        const auto& p = layout.fibres()[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i, p.x, p.y);
        out << buf;
    }
    if (!out) throw IoError("failed writing layout " + path.string());
}

} // namespace pcle
