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

#include "pcle/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace pcle {

namespace fs = std::filesystem;

namespace {

struct RawImage {
    Index width = 0;
    Index height = 0;
    int bit_depth = 8;
    unsigned maxval = 255;
    std::vector<std::uint16_t> samples;
};

std::string lower_ext(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawImage read_png(const fs::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError(path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }
    // Everything libpng may longjmp across is declared before setjmp.
    RawImage raw;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": corrupt PNG");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": multi-channel or palette PNG is not supported");
    }
    if (depth != 8 && depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + ": unsupported bit depth " + std::to_string(depth));
    }
    if (depth == 16) png_set_swap(png); // little-endian samples in memory

    raw.width = Index(png_get_image_width(png, info));
    raw.height = Index(png_get_image_height(png, info));
    raw.bit_depth = depth;
    raw.maxval = depth == 8 ? 255u : 65535u;
    const std::size_t bytes_per_sample = depth / 8;
    buffer.resize(std::size_t(raw.width * raw.height) * bytes_per_sample);
    rows.resize(std::size_t(raw.height));
    for (Index y = 0; y < raw.height; ++y)
        rows[std::size_t(y)] = buffer.data() + std::size_t(y * raw.width) * bytes_per_sample;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    raw.samples.resize(std::size_t(raw.width * raw.height));
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
        if (depth == 8)
            raw.samples[i] = buffer[i];
        else
            raw.samples[i] = std::uint16_t(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    }
    return raw;
}

void write_png(const fs::path& path, const RawImage& raw) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_byte> row(std::size_t(raw.width) * std::size_t(raw.bit_depth / 8));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, png_uint_32(raw.width), png_uint_32(raw.height), raw.bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t bps = std::size_t(raw.bit_depth / 8);
    for (Index y = 0; y < raw.height; ++y) {
        for (Index x = 0; x < raw.width; ++x) {
            const std::uint16_t s = raw.samples[std::size_t(y * raw.width + x)];
            if (bps == 1) {
                row[std::size_t(x)] = png_byte(s);
            } else { // PNG is big-endian
                row[2 * std::size_t(x)] = png_byte(s >> 8);
                row[2 * std::size_t(x) + 1] = png_byte(s & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Next whitespace-delimited token of a PNM header, skipping '#' comments.
std::string pnm_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) break;
            continue;
        }
        token.push_back(char(c));
    }
    return token;
}

RawImage read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string magic = pnm_token(in);
    if (magic == "P6" || magic == "P3") throw IoError(path.string() + ": multi-channel PNM is not supported");
    if (magic != "P5") throw IoError(path.string() + ": not a binary PGM (P5) file");
    RawImage raw;
    try {
        raw.width = std::stol(pnm_token(in));
        raw.height = std::stol(pnm_token(in));
        raw.maxval = unsigned(std::stoul(pnm_token(in)));
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    if (raw.width <= 0 || raw.height <= 0 || raw.maxval == 0 || raw.maxval > 65535)
        throw IoError(path.string() + ": unsupported PGM dimensions or maxval");
    raw.bit_depth = raw.maxval < 256 ? 8 : 16;
    const std::size_t n = std::size_t(raw.width * raw.height);
    const std::size_t bps = std::size_t(raw.bit_depth / 8);
    std::vector<unsigned char> bytes(n * bps);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (std::size_t(in.gcount()) != bytes.size()) throw IoError(path.string() + ": truncated PGM data");
    raw.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        raw.samples[i] = bps == 1 ? bytes[i] : std::uint16_t((bytes[2 * i] << 8) | bytes[2 * i + 1]);
    return raw;
}

void write_pgm(const fs::path& path, const RawImage& raw) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << raw.width << ' ' << raw.height << '\n' << raw.maxval << '\n';
    for (std::uint16_t s : raw.samples) {
        if (raw.bit_depth == 8) {
            out.put(char(s));
        } else {
            out.put(char(s >> 8));
            out.put(char(s & 0xff));
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

RawImage read_raw(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("no such file: " + path.string());
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm") return read_pgm(path);
    throw IoError(path.string() + ": unsupported image format (expected .png or .pgm)");
}

void write_raw(const fs::path& path, const RawImage& raw) {
    const std::string ext = lower_ext(path);
    if (ext == ".png")
        write_png(path, raw);
    else if (ext == ".pgm")
        write_pgm(path, raw);
    else
        throw IoError(path.string() + ": unsupported image format (expected .png or .pgm)");
}

} // namespace

Image load_image(const fs::path& path, BitDepthPolicy policy) {
    const RawImage raw = read_raw(path);
    double scale = raw.bit_depth == 8 ? 255.0 : 65535.0;
    if (policy == BitDepthPolicy::header_maxval) scale = double(raw.maxval);
    Image img(raw.width, raw.height);
    for (Index y = 0; y < raw.height; ++y)
        for (Index x = 0; x < raw.width; ++x)
            img(x, y) = double(raw.samples[std::size_t(y * raw.width + x)]) / scale;
    return img;
}

Mask load_mask(const fs::path& path) {
    const RawImage raw = read_raw(path);
    Mask mask(raw.height, raw.width);
    for (Index y = 0; y < raw.height; ++y)
        for (Index x = 0; x < raw.width; ++x) mask(y, x) = raw.samples[std::size_t(y * raw.width + x)] != 0;
    return mask;
}

SaveStats save_image(const Image& img, const fs::path& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("save_image: bit depth must be 8 or 16");
    RawImage raw;
    raw.width = img.width();
    raw.height = img.height();
    raw.bit_depth = bit_depth;
    raw.maxval = bit_depth == 8 ? 255u : 65535u;
    raw.samples.resize(std::size_t(img.size()));
    SaveStats stats;
    for (Index y = 0; y < img.height(); ++y)
        for (Index x = 0; x < img.width(); ++x) {
            double v = img(x, y);
            if (!(v >= 0.0 && v <= 1.0)) {
                ++stats.clamped;
                v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
            }
            raw.samples[std::size_t(y * raw.width + x)] = std::uint16_t(std::lround(v * raw.maxval));
        }
    write_raw(path, raw);
    return stats;
}

void save_mask(const Mask& mask, const fs::path& path) {
    RawImage raw;
    raw.width = mask.cols();
    raw.height = mask.rows();
    raw.samples.resize(std::size_t(mask.size()));
    for (Index y = 0; y < raw.height; ++y)
        for (Index x = 0; x < raw.width; ++x) raw.samples[std::size_t(y * raw.width + x)] = mask(y, x) ? 255 : 0;
    write_raw(path, raw);
}

std::vector<fs::path> list_image_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    struct Entry {
        fs::path path;
        bool has_number;
        unsigned long long number;
    };
    std::vector<Entry> entries;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower_ext(e.path());
        if (ext != ".png" && ext != ".pgm") continue;
        const std::string stem = e.path().stem().string();
        // Last run of digits in the stem orders frames: frame_2 < frame_10.
        auto end = stem.find_last_of("0123456789");
        Entry entry{e.path(), false, 0};
        if (end != std::string::npos) {
            auto begin = end;
            while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
            const std::string digits = stem.substr(begin, end - begin + 1);
            if (digits.size() < 19) {
                entry.has_number = true;
                entry.number = std::stoull(digits);
            }
        }
        entries.push_back(std::move(entry));
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.has_number != b.has_number) return a.has_number;
        if (a.has_number && a.number != b.number) return a.number < b.number;
        return a.path.filename() < b.path.filename();
    });
    std::vector<fs::path> out;
    out.reserve(entries.size());
    for (auto& e : entries) out.push_back(std::move(e.path));
    return out;
}

void write_patch_set(const fs::path& dir, const std::string& source, const std::vector<Patch>& patches,
                     int bit_depth) {
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
    manifest << "patch_id,source,origin_x,origin_y\n";
    for (std::size_t i = 0; i < patches.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "patch_%06zu", i);
        save_image(Image(patches[i].data), dir / (std::string(id) + ".png"), bit_depth);
        manifest << id << ',' << source << ',' << patches[i].origin_x << ',' << patches[i].origin_y << '\n';
    }
}

} // namespace pcle
