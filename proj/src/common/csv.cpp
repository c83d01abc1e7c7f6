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

#include "pcle/csv.hpp"

#include <fstream>
#include <sstream>

#include "pcle/error.hpp"

namespace pcle {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

} // namespace

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw IoError("missing CSV column '" + std::string(name) + "'");
}

void check_csv_field(std::string_view value) {
    if (value.find_first_of(",\r\n") != std::string_view::npos)
        throw InvalidArgument("CSV field contains a comma or newline: '" + std::string(value) + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    auto next = [&] {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    };
    if (!next()) throw IoError(path.string() + ": empty CSV file");
    if (line.rfind("# ", 0) == 0) {
        try {
            table.provenance = nlohmann::json::parse(line.substr(2));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ": malformed provenance header: " + e.what());
        }
        if (!next()) throw IoError(path.string() + ": missing CSV header row");
    }
    table.columns = split_fields(line);
    while (next()) {
        auto fields = split_fields(line);
        if (fields.size() != table.columns.size())
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(table.columns.size()) + " fields, got " + std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ostringstream body;
    if (!table.provenance.is_null()) body << "# " << table.provenance.dump() << '\n';
    auto emit = [&](const std::vector<std::string>& fields) {
        if (fields.size() != table.columns.size()) throw InvalidArgument("CSV row width differs from header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            check_csv_field(fields[i]);
            body << (i ? "," : "") << fields[i];
        }
        body << '\n';
    };
    emit(table.columns);
    for (const auto& r : table.rows) emit(r);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << body.str();
        if (!out.flush()) throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace pcle
