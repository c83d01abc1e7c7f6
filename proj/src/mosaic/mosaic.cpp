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

#include "pcle/mosaic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pcle/fft.hpp"
#include "pcle/image_io.hpp"

namespace pcle {

void FrameSequence::validate() const {
    if (frames.size() < 2)
        throw InvalidArgument("sequence '" + id + "' needs at least 2 frames, got " + std::to_string(frames.size()));
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (!frames[i].same_shape(frames[0]))
            throw InvalidArgument("sequence '" + id + "': frame " + std::to_string(i) + " differs in size from frame 0");
}

void MosaicParams::validate() const {
    if (!(min_overlap >= 0.0 && min_overlap <= 1.0)) throw InvalidArgument("min_overlap must lie in [0, 1]");
    if (!(max_frame_residual >= 0.0)) throw InvalidArgument("max_frame_residual must be non-negative");
}

namespace {

constexpr double kRegularization = 10.0;
constexpr int kMaxIterations = 30;
constexpr double kTolerance = 1e-8;
constexpr double kMaxRefinement = 2.0;
constexpr double kSnap = 1e-6;

Grid<double> mean_filled(const Image& img, const char* role) {
    double sum = 0.0, lo = INFINITY, hi = -INFINITY;
    Index n = 0;
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x)
            if (img.in_fov(x, y)) {
                sum += img(x, y);
                lo = std::min(lo, img(x, y));
                hi = std::max(hi, img(x, y));
                ++n;
            }
    if (n == 0) throw InvalidArgument(std::string("estimate_translation: ") + role + " image has no FoV pixels");
    if (!(hi > lo)) throw DegenerateInput(std::string("estimate_translation: ") + role + " image is constant");
    const double mean = sum / double(n);
    Grid<double> out(img.height(), img.width());
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x) out(y, x) = img.in_fov(x, y) ? img(x, y) - mean : 0.0;
    return out;
}

// Stationary point of a least-squares quadratic over a 3x3 neighbourhood, clamped to [-1, 1].
Eigen::Vector2d quadratic_peak(const Eigen::Matrix3d& f) {
    Eigen::Matrix<double, 9, 6> A;
    Eigen::Matrix<double, 9, 1> b;
    int row = 0;
    for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i, ++row) {
            A.row(row) << 1.0, i, j, i * i, j * j, i * j;
            b(row) = f(j + 1, i + 1);
        }
    const Eigen::Matrix<double, 6, 1> c = A.colPivHouseholderQr().solve(b);
    Eigen::Matrix2d H;
    H << 2 * c(3), c(5), c(5), 2 * c(4);
    Eigen::Vector2d peak = Eigen::Vector2d::Zero();
    if (H(0, 0) < 0 && H.determinant() > 0) {
        peak = H.lu().solve(Eigen::Vector2d(-c(1), -c(2)));
    } else {
        // Separable fallback along each axis.
        const double dxx = f(1, 0) - 2 * f(1, 1) + f(1, 2);
        const double dyy = f(0, 1) - 2 * f(1, 1) + f(2, 1);
        if (dxx < 0) peak.x() = 0.5 * (f(1, 0) - f(1, 2)) / dxx;
        if (dyy < 0) peak.y() = 0.5 * (f(0, 1) - f(2, 1)) / dyy;
    }
    if (!peak.allFinite()) peak.setZero();
    return peak.cwiseMax(-1.0).cwiseMin(1.0);
}

// Bilinear sample of `img` at (x, y) using only in-FoV neighbours with positive weight.
bool sample_valid(const Image& img, double x, double y, double& value) {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const double fx = x - fx0, fy = y - fy0;
    const Index x0 = Index(fx0), y0 = Index(fy0);
    double acc = 0.0;
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
            const double w = (i ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
            if (w <= 0.0) continue;
            const Index xi = x0 + i, yi = y0 + j;
            if (xi < 0 || yi < 0 || xi >= img.width() || yi >= img.height() || !img.in_fov(xi, yi)) return false;
            acc += w * img(xi, yi);
        }
    value = acc;
    return true;
}

// Gradient-weighted bilinear sample: value and central-difference gradient at (x, y).
bool sample_with_gradient(const Image& img, double x, double y, double& v, double& gx, double& gy) {
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const double fx = x - fx0, fy = y - fy0;
    const Index x0 = Index(fx0), y0 = Index(fy0);
    v = gx = gy = 0.0;
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i) {
            const double w = (i ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
            if (w <= 0.0) continue;
            const Index xi = x0 + i, yi = y0 + j;
            if (xi < 1 || yi < 1 || xi + 1 >= img.width() || yi + 1 >= img.height()) return false;
            if (!img.in_fov(xi, yi) || !img.in_fov(xi - 1, yi) || !img.in_fov(xi + 1, yi) || !img.in_fov(xi, yi - 1) ||
                !img.in_fov(xi, yi + 1))
                return false;
            v += w * img(xi, yi);
            gx += w * 0.5 * (img(xi + 1, yi) - img(xi - 1, yi));
            gy += w * 0.5 * (img(xi, yi + 1) - img(xi, yi - 1));
        }
    return true;
}

// Gauss-Newton on sum_p (moving(p) - fixed(p - d) - c)^2 over the overlap, with c an intensity offset.
RigidTransform refine_translation(const Image& fixed, const Image& moving, RigidTransform d) {
    const RigidTransform start = d;
    double c = 0.0;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        Index n = 0;
        for (Index y = 0; y < moving.height(); ++y)
            for (Index x = 0; x < moving.width(); ++x) {
                if (!moving.in_fov(x, y)) continue;
                double f, fgx, fgy;
                if (!sample_with_gradient(fixed, double(x) - d.dx, double(y) - d.dy, f, fgx, fgy)) continue;
                const double r = moving(x, y) - f - c;
                // dr/d(dx) = +fgx, dr/d(dy) = +fgy, dr/dc = -1.
                const Eigen::Vector3d J(fgx, fgy, -1.0);
                H.noalias() += J * J.transpose();
                g.noalias() += J * r;
                ++n;
            }
        if (n < 16) return start;
        const Eigen::Vector3d step = -H.ldlt().solve(g);
        if (!step.allFinite()) return start;
        d.dx += step(0);
        d.dy += step(1);
        c += step(2);
        if (std::hypot(d.dx - start.dx, d.dy - start.dy) > kMaxRefinement) return start;
        if (std::hypot(step(0), step(1)) < kTolerance) break;
    }
    return d;
}

} // namespace

RigidTransform estimate_translation(const Image& fixed, const Image& moving) {
    if (!fixed.same_shape(moving)) throw InvalidArgument("estimate_translation: image sizes differ");
    const Index w = fixed.width(), h = fixed.height();
    const ComplexGrid F = fft2(mean_filled(fixed, "fixed"));
    const ComplexGrid M = fft2(mean_filled(moving, "moving"));

    // Regularized normalization: bins well above the mean magnitude are whitened,
    // weak (noise-dominated) bins keep their small cross-correlation weight.
    ComplexGrid cross = M * F.conjugate();
    const Grid<double> mag = cross.abs();
    const double lambda = kRegularization * mag.mean();
    if (!(lambda > 0.0)) throw DegenerateInput("estimate_translation: empty cross-power spectrum");
    cross = cross / (mag + lambda).cast<std::complex<double>>();
    const Grid<double> corr = ifft2(cross).real();

    Index py = 0, px = 0;
    corr.maxCoeff(&py, &px);
    Eigen::Matrix3d nb;
    for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) nb(j + 1, i + 1) = corr((py + j + h) % h, (px + i + w) % w);
    const Eigen::Vector2d sub = quadratic_peak(nb);

    const double ix = px > w / 2 ? double(px - w) : double(px);
    const double iy = py > h / 2 ? double(py - h) : double(py);
    const RigidTransform coarse{ix + sub.x(), iy + sub.y()};
    RigidTransform d = refine_translation(fixed, moving, coarse);
    // Remove round-off left on exact integer solutions.
    for (double* v : {&d.dx, &d.dy})
        if (std::abs(*v - std::round(*v)) < kSnap) *v = std::round(*v);
    return d;
}

OverlapResidual overlap_residual(const Image& fixed, const Image& moving, const RigidTransform& d) {
    double ss = 0.0;
    std::size_t n = 0;
    for (Index y = 0; y < moving.height(); ++y)
        for (Index x = 0; x < moving.width(); ++x) {
            if (!moving.in_fov(x, y)) continue;
            double f;
            if (!sample_valid(fixed, double(x) - d.dx, double(y) - d.dy, f)) continue;
            const double diff = moving(x, y) - f;
            ss += diff * diff;
            ++n;
        }
    return {n ? std::sqrt(ss / double(n)) : INFINITY, n};
}

double RegistrationReport::median_residual() const {
    std::vector<double> r;
    for (std::size_t i = 1; i < frames.size(); ++i) r.push_back(frames[i].residual);
    if (r.empty()) return 0.0;
    std::sort(r.begin(), r.end());
    const std::size_t m = r.size() / 2;
    return r.size() % 2 ? r[m] : 0.5 * (r[m - 1] + r[m]);
}

std::size_t RegistrationReport::accepted_count() const {
    return std::size_t(std::count_if(frames.begin(), frames.end(), [](const auto& f) { return f.accepted; }));
}

MosaicResult build_mosaic(const FrameSequence& seq, const MosaicParams& params) {
    seq.validate();
    params.validate();
    RegistrationReport report;
    report.sequence_id = seq.id;
    report.frames.push_back({});

    std::size_t last = 0;
    RigidTransform t_last{};
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
        FrameRegistration reg;
        reg.reference = std::int64_t(last);
        try {
            const RigidTransform d = estimate_translation(seq.frames[last], seq.frames[i]);
            const OverlapResidual res = overlap_residual(seq.frames[last], seq.frames[i], d);
            reg.transform = {t_last.dx - d.dx, t_last.dy - d.dy};
            reg.residual = res.rms;
            reg.accepted = std::isfinite(res.rms) &&
                           double(res.overlap) >= params.min_overlap * double(seq.frames[i].valid_count()) &&
                           res.rms <= params.max_frame_residual;
        } catch (const DegenerateInput&) {
            reg.transform = t_last;
            reg.residual = INFINITY;
            reg.accepted = false;
        }
        if (reg.accepted) {
            last = i;
            t_last = reg.transform;
        }
        report.frames.push_back(reg);
    }
    MosaicCanvas canvas = fuse_frames(seq, report);
    return {std::move(canvas), std::move(report)};
}

MosaicCanvas fuse_frames(const FrameSequence& seq, const RegistrationReport& report) {
    if (report.frames.size() != seq.frames.size())
        throw InvalidArgument("fuse_frames: report has " + std::to_string(report.frames.size()) + " frames, sequence has " +
                              std::to_string(seq.frames.size()));
    double min_x = INFINITY, min_y = INFINITY, max_x = -INFINITY, max_y = -INFINITY;
    for (const auto& f : report.frames) {
        if (!f.accepted) continue;
        if (!std::isfinite(f.transform.dx) || !std::isfinite(f.transform.dy))
            throw InvalidArgument("fuse_frames: non-finite transform");
        min_x = std::min(min_x, f.transform.dx);
        min_y = std::min(min_y, f.transform.dy);
        max_x = std::max(max_x, f.transform.dx);
        max_y = std::max(max_y, f.transform.dy);
    }
    if (!std::isfinite(min_x)) throw InvalidArgument("fuse_frames: no accepted frames");

    const Index w = seq.frames[0].width(), h = seq.frames[0].height();
    MosaicCanvas canvas;
    canvas.origin_x = Index(std::floor(min_x));
    canvas.origin_y = Index(std::floor(min_y));
    const Index cw = Index(std::ceil(max_x)) - canvas.origin_x + w;
    const Index ch = Index(std::ceil(max_y)) - canvas.origin_y + h;
    canvas.sum = Grid<double>::Zero(ch, cw);
    canvas.weight = Grid<double>::Zero(ch, cw);

    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        if (!report.frames[i].accepted) continue;
        const Image& frame = seq.frames[i];
        const auto& t = report.frames[i].transform;
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) {
                if (!frame.in_fov(x, y)) continue;
                const double cx = double(x) + t.dx - double(canvas.origin_x);
                const double cy = double(y) + t.dy - double(canvas.origin_y);
                const double fx0 = std::floor(cx), fy0 = std::floor(cy);
                const double fx = cx - fx0, fy = cy - fy0;
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        const double wt = (k ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
                        if (wt <= 0.0) continue;
                        const Index u = Index(fx0) + k, v = Index(fy0) + j;
                        canvas.sum(v, u) += wt * frame(x, y);
                        canvas.weight(v, u) += wt;
                    }
            }
    }
    return canvas;
}

Image MosaicCanvas::fused() const {
    const Mask defined = weight > 0.0;
    Image out(Grid<double>(defined.select(sum / weight.max(1e-300), 0.0)));
    out.set_fov(defined);
    return out;
}

BackprojectedSequence backproject(const MosaicCanvas& canvas, const FrameSequence& seq,
                                  const RegistrationReport& report) {
    if (report.frames.size() != seq.frames.size())
        throw InvalidArgument("backproject: report and sequence lengths differ");
    BackprojectedSequence out;
    out.id = seq.id;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        if (!report.frames[i].accepted) continue;
        const Image& frame = seq.frames[i];
        const auto& t = report.frames[i].transform;
        Image hr(frame.width(), frame.height(), 0.0);
        for (Index y = 0; y < frame.height(); ++y)
            for (Index x = 0; x < frame.width(); ++x) {
                if (!frame.in_fov(x, y)) continue;
                const double cx = double(x) + t.dx - double(canvas.origin_x);
                const double cy = double(y) + t.dy - double(canvas.origin_y);
                const double fx0 = std::floor(cx), fy0 = std::floor(cy);
                const double fx = cx - fx0, fy = cy - fy0;
                double acc = 0.0, wsum = 0.0;
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) {
                        const double wt = (k ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
                        const Index u = Index(fx0) + k, v = Index(fy0) + j;
                        if (wt <= 0.0 || u < 0 || v < 0 || u >= canvas.width() || v >= canvas.height()) continue;
                        const double cwt = canvas.weight(v, u);
                        if (cwt <= 0.0) continue;
                        acc += wt * canvas.sum(v, u) / cwt;
                        wsum += wt;
                    }
                hr(x, y) = wsum > 0.0 ? acc / wsum : frame(x, y);
            }
        if (frame.has_fov()) hr.set_fov(*frame.fov());
        out.frame_index.push_back(i);
        out.frames.push_back(std::move(hr));
    }
    return out;
}

SequenceFilter filter_sequences(const std::vector<RegistrationReport>& reports, double residual_threshold) {
    SequenceFilter out;
    for (const auto& r : reports) {
        const double m = r.median_residual();
        const bool ok = m <= residual_threshold;
        (ok ? out.accepted : out.rejected).push_back(r.sequence_id);
        out.diagnostics.push_back({r.sequence_id, m, ok});
    }
    return out;
}

FrameSequence load_sequence(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& mask) {
    FrameSequence seq;
    seq.id = dir.filename().string();
    if (seq.id.empty()) seq.id = dir.parent_path().filename().string();
    std::optional<Mask> fov;
    if (mask) fov = load_mask(*mask);
    for (const auto& path : list_image_files(dir)) {
        Image img = load_image(path);
        if (fov) img.set_fov(*fov);
        seq.frames.push_back(std::move(img));
    }
    seq.validate();
    return seq;
}

void write_registration_report(const RegistrationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write registration report " + path.string());
    out << "frame,dx,dy,residual,accepted\n";
    char line[160];
    for (std::size_t i = 0; i < report.frames.size(); ++i) {
        const auto& f = report.frames[i];
        std::snprintf(line, sizeof line, "%zu,%.9f,%.9f,%.9g,%d\n", i, f.transform.dx, f.transform.dy, f.residual,
                      f.accepted ? 1 : 0);
        out << line;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace pcle
