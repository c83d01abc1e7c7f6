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
#include <array>
#include <cmath>

#include "pcle/fibresim.hpp"
#include "pcle/rng.hpp"

namespace pcle {

void NoiseModel::validate() const {
    if (!(sigma_mult >= 0.0) || !(sigma_add_rel >= 0.0))
        throw InvalidArgument("noise model: sigmas must be non-negative");
}

ExtractionMode parse_extraction_mode(const std::string& name) {
    if (name == "voronoi_average" || name == "voronoi") return ExtractionMode::voronoi_average;
    if (name == "seven_pixel_average" || name == "seven_pixel") return ExtractionMode::seven_pixel_average;
    throw InvalidArgument("unknown extraction mode '" + name + "' (expected voronoi_average or seven_pixel_average)");
}

std::string to_string(ExtractionMode mode) {
    return mode == ExtractionMode::voronoi_average ? "voronoi_average" : "seven_pixel_average";
}

namespace {

void check_frame(const Image& hr, const FibreLayout& layout) {
    if (hr.width() != layout.width() || hr.height() != layout.height())
        throw InvalidArgument("image is " + std::to_string(hr.width()) + "x" + std::to_string(hr.height()) +
                              " but the layout frame is " + std::to_string(layout.width()) + "x" +
                              std::to_string(layout.height()));
}

// Pixel centre nearest to p and its six nearest neighbours, by (distance, y, x).
std::array<std::pair<Index, Index>, 7> seven_nearest(const Point2& p, Index width, Index height) {
    struct Candidate {
        double d2;
        Index y, x;
    };
    std::vector<Candidate> cand;
    const Index cx = Index(std::floor(p.x + 0.5));
    const Index cy = Index(std::floor(p.y + 0.5));
    for (Index r = 3;; r += 2) {
        cand.clear();
        for (Index y = cy - r; y <= cy + r; ++y)
            for (Index x = cx - r; x <= cx + r; ++x) {
                if (x < 0 || y < 0 || x >= width || y >= height) continue;
                const double dx = double(x) - p.x, dy = double(y) - p.y;
                cand.push_back({dx * dx + dy * dy, y, x});
            }
        if (cand.size() >= 7 || cand.size() == std::size_t(width * height)) break;
    }
    std::sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    std::array<std::pair<Index, Index>, 7> out{};
    for (std::size_t i = 0; i < 7; ++i) {
        const auto& c = cand[std::min(i, cand.size() - 1)];
        out[i] = {c.x, c.y};
    }
    return out;
}

} // namespace

FibreSignals extract_signals(const Image& hr, const FibreLayout& layout, ExtractionMode mode) {
    check_frame(hr, layout);
    const Index n = Index(layout.fibre_count());
    FibreSignals fs(n);
    const Index width = layout.width();
    auto usable = [&](Index x, Index y) { return layout.fov()(y, x) && hr.in_fov(x, y); };

    if (mode == ExtractionMode::voronoi_average) {
        for (Index i = 0; i < n; ++i) {
            double sum = 0.0;
            std::size_t count = 0;
            for (Index lin : layout.cells()[std::size_t(i)]) {
                const Index x = lin % width, y = lin / width;
                if (!usable(x, y)) continue;
                sum += hr(x, y);
                ++count;
            }
            if (count == 0) throw EmptyCellError(std::size_t(i));
            fs(i) = sum / double(count);
        }
        return fs;
    }

    for (Index i = 0; i < n; ++i) {
        const auto neighbours = seven_nearest(layout.fibres()[std::size_t(i)], layout.width(), layout.height());
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& [x, y] : neighbours) {
            if (!usable(x, y)) continue;
            sum += hr(x, y);
            ++count;
        }
        if (count == 0) throw EmptyCellError(std::size_t(i));
        fs(i) = sum / double(count);
    }
    return fs;
}

FibreSignals add_noise(const FibreSignals& fs, const NoiseModel& model) {
    model.validate();
    if (fs.size() == 0) throw InvalidArgument("add_noise: empty fibre signal vector");
    const double range = fs.maxCoeff() - fs.minCoeff();
    const double sigma_add = model.sigma_add_rel * range;
    Rng rng(derive_seed(model.seed, "fibre-noise"));
    FibreSignals out(fs.size());
    for (Index i = 0; i < fs.size(); ++i) {
        // Both draws happen even for zero sigmas so the stream layout is fixed.
        const double m = model.sigma_mult * standard_normal(rng);
        const double a = sigma_add * standard_normal(rng);
        out(i) = model.sigma_mult == 0.0 && sigma_add == 0.0 ? fs(i) : (1.0 + m) * fs(i) + a;
    }
    return out;
}

Image reconstruct(const FibreSignals& signals, const FibreLayout& layout) {
    if (signals.size() != Index(layout.fibre_count()))
        throw InvalidArgument("reconstruct: " + std::to_string(signals.size()) + " signals for " +
                              std::to_string(layout.fibre_count()) + " fibres");
    Image out(layout.width(), layout.height(), 0.0);
    const auto& tris = layout.triangles();
    for (Index y = 0; y < layout.height(); ++y)
        for (Index x = 0; x < layout.width(); ++x) {
            if (!layout.fov()(y, x)) continue;
            const auto t = layout.containing_triangle()(y, x);
            if (t < 0) {
                out(x, y) = signals(layout.owner()(y, x));
                continue;
            }
            const auto& tr = tris[std::size_t(t)];
            const Eigen::Array3d w = layout.weights(y * layout.width() + x);
            out(x, y) = w(0) * signals(tr[0]) + w(1) * signals(tr[1]) + w(2) * signals(tr[2]);
        }
    out.set_fov(layout.fov());
    return out;
}

SimulationResult simulate_lr(const Image& hr, const FibreLayout& layout, const NoiseModel& model,
                             ExtractionMode mode) {
    const FibreSignals clean = extract_signals(hr, layout, mode);
    const FibreSignals noisy = add_noise(clean, model);
    SimulationResult result{reconstruct(noisy, layout), {}};
    result.metadata = {layout.hash(), model.seed, model.sigma_mult, model.sigma_add_rel, mode};
    return result;
}

} // namespace pcle
