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

#ifndef PCLE_IMAGE_IO_HPP
#define PCLE_IMAGE_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "pcle/image.hpp"

namespace pcle {

enum class BitDepthPolicy {
    format_maximum, ///< divide by 2^bits - 1 of the storage depth
    header_maxval,  ///< PGM only: divide by the maxval declared in the header
};

/// Reads an 8- or 16-bit single-channel PNG or binary PGM (P5) into [0, 1].
Image load_image(const std::filesystem::path& path,
                 BitDepthPolicy policy = BitDepthPolicy::format_maximum);

/// Nonzero pixels are inside.
Mask load_mask(const std::filesystem::path& path);

struct SaveStats {
    std::size_t clamped = 0;
};

/// Writes PNG or PGM depending on the extension; values are clamped to [0, 1].
SaveStats save_image(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

void save_mask(const Mask& mask, const std::filesystem::path& path);

/// Image files (.png, .pgm) of a directory sorted by the number embedded in their
/// name, falling back to lexicographic order.
std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir);

/// Writes each patch as `<dir>/<patch_id>.png` and a manifest
/// `patch_id,source,origin_x,origin_y` to `<dir>/manifest.csv`.
void write_patch_set(const std::filesystem::path& dir, const std::string& source,
                     const std::vector<Patch>& patches, int bit_depth = 16);

} // namespace pcle

#endif // PCLE_IMAGE_IO_HPP
