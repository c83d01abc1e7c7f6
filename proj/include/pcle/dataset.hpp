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

#ifndef PCLE_DATASET_HPP
#define PCLE_DATASET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcle/fibresim.hpp"

namespace pcle {

struct SequenceRecord {
    std::string sequence_id;
    std::string tissue_label;
    std::string probe_id;
    /// Frame directory, relative to the HR root when building pairs.
    std::filesystem::path frame_dir;
};

/**
 * Reads CSV `sequence_id,tissue_label,probe_id,frame_dir`. A non-empty
 * vocabulary restricts the labels. Duplicate ids and empty fields throw
 * InvalidArgument.
 */
std::vector<SequenceRecord> load_sequence_records(const std::filesystem::path& csv,
                                                  const std::vector<std::string>& vocabulary = {});
void write_sequence_records(const std::vector<SequenceRecord>& records, const std::filesystem::path& csv);

enum class Split { train, validation, test };

std::string to_string(Split s);
Split parse_split(const std::string& name);

struct SplitFractions {
    std::array<double, 3> values{0.70, 0.15, 0.15};

    /// Non-negative and summing to 1 within 1e-9.
    void validate() const;
};

SplitFractions parse_fractions(const std::string& text);

struct SplitAssignment {
    std::string sequence_id;
    std::string tissue_label;
    Split split = Split::train;
};

struct SplitManifest {
    SplitFractions fractions;
    std::uint64_t seed = 0;
    /// Input record order.
    std::vector<SplitAssignment> assignments;

    /// Sequences per split for one label, or for all labels when empty.
    std::array<std::size_t, 3> counts(const std::string& label = {}) const;
    std::optional<Split> split_of(const std::string& sequence_id) const;
};

/// Largest-remainder split sizes for n items; remainder ties go to the earlier split.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitFractions& fractions);

/**
 * Per tissue label, shuffles the label's sequences with a stream derived from
 * (seed, label) and cuts them by split_sizes. Throws InvalidArgument when a
 * label has fewer than `min_per_label` sequences or ids repeat.
 */
SplitManifest stratified_split(const std::vector<SequenceRecord>& records, const SplitFractions& fractions,
                               std::uint64_t seed, std::size_t min_per_label = 3);

/// CSV `sequence_id,tissue_label,split` with a `# {json}` provenance line.
void write_split_manifest(const SplitManifest& manifest, const std::filesystem::path& csv);
SplitManifest load_split_manifest(const std::filesystem::path& csv);

enum class Origin { org, syn };

std::string to_string(Origin o);
Origin parse_origin(const std::string& name);

struct PairRow {
    Split split = Split::train;
    std::string sequence_id;
    std::size_t frame_index = 0;
    Origin origin = Origin::org;
    /// Relative to PairManifest::root.
    std::filesystem::path lr_path;
    std::filesystem::path hr_path;
};

struct SkippedFrame {
    std::string sequence_id;
    std::size_t frame_index = 0;
    std::string reason;
};

struct PairManifest {
    std::filesystem::path root;
    Origin origin = Origin::org;
    nlohmann::json provenance;
    std::vector<PairRow> rows;
    std::vector<SkippedFrame> skipped;
};

struct PairOptions {
    Origin origin = Origin::syn;
    /// org: LR frames live under lr_root with the same relative layout as the HR frames.
    std::filesystem::path lr_root;
    /// syn: fixed layout, used for frames of matching size. Otherwise one layout
    /// per frame size is generated from layout_params.
    std::shared_ptr<const FibreLayout> layout;
    LayoutParams layout_params;
    /// syn: FoV for generated layouts; all pixels when absent.
    std::optional<Mask> fov;
    NoiseModel noise;
    ExtractionMode mode = ExtractionMode::voronoi_average;
    /// Base seed; frame f of sequence s draws its noise from derive_seed(seed, "s/f").
    std::uint64_t seed = 0;
    int threads = 0;

    void validate() const;
};

/**
 * Emits one row per HR frame of every split sequence, in manifest order. For
 * origin syn the LR frames are simulated and written as 16-bit PNG under
 * `out_root/lr_syn/<sequence_id>/`. A frame whose simulation fails is
 * recorded in `skipped` instead. Paths are stored relative to out_root.
 */
PairManifest build_pairs(const SplitManifest& split, const std::vector<SequenceRecord>& records,
                         const std::filesystem::path& hr_root, const std::filesystem::path& out_root,
                         const PairOptions& options);

/// CSV `split,sequence_id,frame_index,origin,lr_path,hr_path` with a provenance line.
void write_pair_manifest(const PairManifest& manifest, const std::filesystem::path& csv);
PairManifest load_pair_manifest(const std::filesystem::path& csv);

} // namespace pcle

#endif // PCLE_DATASET_HPP
