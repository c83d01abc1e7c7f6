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

#ifndef PCLE_CSV_HPP
#define PCLE_CSV_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pcle {

/**
 * Plain comma-separated table as used by the manifests: an optional first line
 * `# {json}` carrying provenance, a header row, then data rows. Fields are not
 * quoted, so values must not contain commas or newlines.
 */
struct CsvTable {
    nlohmann::json provenance; ///< null when the file has no `#` line
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    /// Column position; throws IoError naming the file's missing column.
    std::size_t column(std::string_view name) const;
};

/// Throws IoError on unreadable files and rows whose width differs from the header.
CsvTable read_csv(const std::filesystem::path& path);

/// Writes atomically (temporary file, then rename). Throws InvalidArgument on unsafe fields.
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Throws InvalidArgument when `value` cannot be stored as an unquoted field.
void check_csv_field(std::string_view value);

} // namespace pcle

#endif // PCLE_CSV_HPP
