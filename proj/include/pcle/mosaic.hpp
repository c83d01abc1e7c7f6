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

#ifndef PCLE_MOSAIC_HPP
#define PCLE_MOSAIC_HPP

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pcle/image.hpp"

namespace pcle {

/// Ordered frames of one acquisition, all sharing dimensions and FoV.
struct FrameSequence {
    std::string id;
    std::vector<Image> frames;

    /// Throws InvalidArgument unless there are >= 2 frames of equal size.
    void validate() const;
};

/// Translation taking frame coordinates to mosaic coordinates.
struct RigidTransform {
    double dx = 0.0;
    double dy = 0.0;
};

/**
 * Phase-correlation estimate of d such that moving(p) ~ fixed(p - d).
 *
 * Out-of-FoV pixels are filled with the in-FoV mean before the transform. The
 * integer peak of the inverse normalized cross-power spectrum is refined by a
 * least-squares quadratic over its 3x3 neighbourhood, then by Gauss-Newton on
 * the overlap SSD (translation plus an intensity offset). Throws
 * DegenerateInput when either image is constant over its FoV.
 */
RigidTransform estimate_translation(const Image& fixed, const Image& moving);

/// Fused accumulation canvas. Canvas pixel (u, v) sits at mosaic coordinate (u + origin_x, v + origin_y).
struct MosaicCanvas {
    Grid<double> sum;
    Grid<double> weight;
    Index origin_x = 0;
    Index origin_y = 0;

    Index width() const noexcept { return sum.cols(); }
    Index height() const noexcept { return sum.rows(); }

    /// sum / weight where weight > 0; zero elsewhere, with the FoV set to weight > 0.
    Image fused() const;
};

struct FrameRegistration {
    RigidTransform transform;
    /// RMS difference against the reference frame over the aligned overlap.
    double residual = 0.0;
    bool accepted = true;
    /// Index of the frame this one was registered to; -1 for the anchor.
    std::int64_t reference = -1;
};

struct RegistrationReport {
    std::string sequence_id;
    std::vector<FrameRegistration> frames;

    /// Median residual over registered (non-anchor) frames; 0 for a lone anchor.
    double median_residual() const;
    std::size_t accepted_count() const;
};

struct MosaicParams {
    /// Frames overlapping their reference on fewer than this fraction of FoV pixels are rejected.
    double min_overlap = 0.25;
    /// Frames whose registration residual exceeds this are rejected.
    double max_frame_residual = std::numeric_limits<double>::infinity();

    void validate() const;
};

struct MosaicResult {
    MosaicCanvas canvas;
    RegistrationReport report;
};

/// Chained registration (each frame against the last accepted one) followed by fusion.
MosaicResult build_mosaic(const FrameSequence& seq, const MosaicParams& params = {});

/// Bilinear splat of the accepted frames at the given transforms, in frame order.
MosaicCanvas fuse_frames(const FrameSequence& seq, const RegistrationReport& report);

/// Per-frame estimates sampled back from the canvas; rejected frames are omitted.
struct BackprojectedSequence {
    std::string id;
    std::vector<std::size_t> frame_index;
    std::vector<Image> frames;
};

BackprojectedSequence backproject(const MosaicCanvas& canvas, const FrameSequence& seq,
                                  const RegistrationReport& report);

/// RMS of moving(p) - fixed(p - d) over pixels where both are defined; also returns the overlap count.
struct OverlapResidual {
    double rms = 0.0;
    std::size_t overlap = 0;
};

OverlapResidual overlap_residual(const Image& fixed, const Image& moving, const RigidTransform& d);

struct SequenceDiagnostics {
    std::string sequence_id;
    double median_residual = 0.0;
    bool accepted = true;
};

struct SequenceFilter {
    std::vector<std::string> accepted;
    std::vector<std::string> rejected;
    std::vector<SequenceDiagnostics> diagnostics;
};

/// Rejects sequences whose median frame residual exceeds the threshold.
SequenceFilter filter_sequences(const std::vector<RegistrationReport>& reports, double residual_threshold);

/// Loads numerically ordered frames from a directory, attaching an optional FoV mask.
FrameSequence load_sequence(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& mask = {});

/// CSV `frame,dx,dy,residual,accepted`.
void write_registration_report(const RegistrationReport& report, const std::filesystem::path& path);

} // namespace pcle

#endif // PCLE_MOSAIC_HPP
