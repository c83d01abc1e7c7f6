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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <png.h>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "pcle/image.hpp"
#include "pcle/image_io.hpp"
#include "support/test_support.hpp"

using namespace pcle;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "pcle_test_imagecore";
    fs::create_directories(dir);
    return dir / name;
}

void write_pgm8(const fs::path& path, int w, int h, const std::vector<unsigned char>& px, int maxval = 255) {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# comment line\n" << w << ' ' << h << '\n' << maxval << '\n';
    out.write(reinterpret_cast<const char*>(px.data()), std::streamsize(px.size()));
}

void write_png_raw(const fs::path& path, int w, int h, int color_type, int depth) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, f);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
    std::vector<png_byte> row(std::size_t(w * channels * std::max(depth, 8) / 8 + 8), 0);
    for (int y = 0; y < h; ++y) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

} // namespace

TEST_CASE("load_image maps the format maximum to 1") {
    const auto path = scratch("white.pgm");
    write_pgm8(path, 4, 3, std::vector<unsigned char>(12, 255));
    const Image img = load_image(path);
    CHECK(img.width() == 4);
    CHECK(img.height() == 3);
    CHECK((img.data() == 1.0).all());
}

TEST_CASE("load_image of an all-zero 16-bit PNG is constant 0") {
    const auto path = scratch("zero16.png");
    write_png_raw(path, 5, 5, PNG_COLOR_TYPE_GRAY, 16);
    const Image img = load_image(path);
    CHECK((img.data() == 0.0).all());
}

TEST_CASE("load_image divides 8-bit values by 255") {
    const auto path = scratch("mid.pgm");
    write_pgm8(path, 1, 1, {128});
    CHECK(load_image(path)(0, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(load_image(path)(0, 0) == doctest::Approx(0.50196).epsilon(1e-5));
}

TEST_CASE("load_image header_maxval policy honours the PGM maxval") {
    const auto path = scratch("maxval.pgm");
    write_pgm8(path, 1, 1, {50}, 100);
    CHECK(load_image(path, BitDepthPolicy::header_maxval)(0, 0) == doctest::Approx(0.5));
    CHECK(load_image(path, BitDepthPolicy::format_maximum)(0, 0) == doctest::Approx(50.0 / 255.0));
}

TEST_CASE("load_image rejects unreadable, multi-channel and unsupported inputs") {
    CHECK_THROWS_AS(load_image(scratch("does_not_exist.png")), IoError);

    const auto rgb = scratch("rgb.png");
    write_png_raw(rgb, 3, 3, PNG_COLOR_TYPE_RGB, 8);
    CHECK_THROWS_AS(load_image(rgb), IoError);

    const auto onebit = scratch("onebit.png");
    write_png_raw(onebit, 8, 2, PNG_COLOR_TYPE_GRAY, 1);
    CHECK_THROWS_AS(load_image(onebit), IoError);

    const auto ppm = scratch("colour.pgm");
    {
        std::ofstream out(ppm, std::ios::binary);
        out << "P6\n1 1\n255\n" << char(1) << char(2) << char(3);
    }
    CHECK_THROWS_AS(load_image(ppm), IoError);

    const auto garbage = scratch("garbage.png");
    {
        std::ofstream out(garbage, std::ios::binary);
        out << "not a png at all";
    }
    CHECK_THROWS_AS(load_image(garbage), IoError);
}

TEST_CASE("save_image round trip is within one quantisation step") {
    const Image half(7, 9, 0.5);
    const auto p16 = scratch("half16.png");
    save_image(half, p16, 16);
    CHECK(test::max_abs_diff(load_image(p16), half) <= 1.0 / 65535.0);

    // Exhaustive pixel comparison on random images, both formats and depths.
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Image img = test::random_image(32, 32, seed);
        for (const char* ext : {".png", ".pgm"}) {
            const auto p8 = scratch(std::string("rand8") + ext);
            save_image(img, p8, 8);
            CHECK(test::max_abs_diff(load_image(p8), img) <= 1.0 / 255.0);
            const auto p16b = scratch(std::string("rand16") + ext);
            save_image(img, p16b, 16);
            CHECK(test::max_abs_diff(load_image(p16b), img) <= 1.0 / 65535.0);
        }
    }
}

TEST_CASE("save_image clamps out-of-range values and counts them") {
    Image img(3, 2, 0.25);
    img(0, 0) = 1.2;
    img(2, 1) = -0.1;
    const auto path = scratch("clamp.png");
    const SaveStats stats = save_image(img, path, 8);
    CHECK(stats.clamped == 2);
    const Image back = load_image(path);
    CHECK(back(0, 0) == 1.0);
    CHECK(back(2, 1) == 0.0);
    CHECK_THROWS_AS(save_image(img, scratch("bad.png"), 12), InvalidArgument);
    CHECK_THROWS_AS(save_image(img, "/nonexistent_dir_pcle/x.png", 8), IoError);
}

TEST_CASE("circular_fov geometry") {
    const Mask m = circular_fov(100, 100, 0);
    CHECK(m(50, 50));
    CHECK_FALSE(m(0, 0));

    const Mask tiny = circular_fov(100, 100, 49);
    CHECK(tiny.count() == 4); // the four pixels around the centre (49.5, 49.5)
    for (Index y = 0; y < 100; ++y)
        for (Index x = 0; x < 100; ++x)
            if (tiny(y, x)) CHECK(std::hypot(x - 49.5, y - 49.5) <= 1.0);

    // Brute-force count over all 4096 centres.
    const Mask m64 = circular_fov(64, 64, 4);
    Index expected = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            if ((x - 31.5) * (x - 31.5) + (y - 31.5) * (y - 31.5) <= 28.0 * 28.0) ++expected;
    CHECK(m64.count() == expected);

    CHECK_THROWS_AS(circular_fov(10, 10, 5), InvalidArgument);
}

TEST_CASE("compute_lr_stats") {
    CHECK_THROWS_AS(compute_lr_stats({Image(4, 4, 0.3)}), DegenerateInput);
    CHECK_THROWS_AS(compute_lr_stats({}), InvalidArgument);

    const auto s = compute_lr_stats({Image(4, 4, 0.0), Image(4, 4, 1.0)});
    CHECK(s.mean_lr == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.std_lr == doctest::Approx(0.5).epsilon(1e-15));

    std::vector<Image> imgs;
    std::vector<double> flat;
    for (std::uint64_t k = 0; k < 3; ++k) {
        imgs.push_back(test::random_image(16, 16, 100 + k));
        for (Index i = 0; i < imgs.back().size(); ++i) flat.push_back(imgs.back().data()(i));
    }
    double mean = 0.0;
    for (double v : flat) mean += v;
    mean /= double(flat.size());
    double var = 0.0;
    for (double v : flat) var += (v - mean) * (v - mean);
    const auto r = compute_lr_stats(imgs);
    CHECK(std::abs(r.mean_lr - mean) < 1e-12);
    CHECK(std::abs(r.std_lr - std::sqrt(var / double(flat.size()))) < 1e-12);
}

TEST_CASE("statistics ignore out-of-FoV pixels") {
    Image img = test::random_image(40, 40, 9);
    img.set_fov(circular_fov(40, 40, 2));
    Image scrambled = img;
    for (Index y = 0; y < 40; ++y)
        for (Index x = 0; x < 40; ++x)
            if (!img.in_fov(x, y)) scrambled(x, y) = 1e6 * double(x + 1);
    const auto a = compute_lr_stats({img});
    const auto b = compute_lr_stats({scrambled});
    CHECK(a.mean_lr == b.mean_lr);
    CHECK(a.std_lr == b.std_lr);
    const auto ra = rescale_unit(img).image;
    const auto rb = rescale_unit(scrambled).image;
    CHECK(test::max_abs_diff(ra, rb) == 0.0);
    CHECK(extract_patches(img, 8, true).size() == extract_patches(scrambled, 8, true).size());
}

TEST_CASE("normalize is an exact z-score with an exact inverse") {
    const NormalizationStats stats{0.3, 0.2};
    CHECK((normalize(Image(3, 3, 0.3), stats).data().abs() < 1e-15).all());
    CHECK((normalize(Image(3, 3, 0.5), stats).data() - 1.0).abs().maxCoeff() < 1e-12);

    Image img = test::random_image(20, 20, 3);
    img.set_fov(circular_fov(20, 20, 1));
    const Image z = normalize(img, stats);
    CHECK(z.has_fov());
    const Image back = denormalize(z, stats);
    for (Index y = 0; y < 20; ++y)
        for (Index x = 0; x < 20; ++x)
            if (img.in_fov(x, y)) CHECK(std::abs(back(x, y) - img(x, y)) < 1e-12);
}

TEST_CASE("rescale_unit") {
    Grid<double> g(1, 2);
    g << 2.0, 4.0;
    const auto r = rescale_unit(Image(g));
    CHECK_FALSE(r.degenerate);
    CHECK(r.image(0, 0) == 0.0);
    CHECK(r.image(1, 0) == 1.0);

    Grid<double> unit(1, 3);
    unit << 0.0, 0.25, 1.0;
    CHECK(test::max_abs_diff(rescale_unit(Image(unit)).image, Image(unit)) == 0.0);

    const Image img = test::random_image(17, 13, 5);
    const Image out = rescale_unit(img).image;
    CHECK(out.data().minCoeff() == 0.0);
    CHECK(out.data().maxCoeff() == 1.0);
    // Sort-order comparison: the permutation sorting the input also sorts the output.
    std::vector<Index> order(std::size_t(img.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return img.data()(a) < img.data()(b); });
    for (std::size_t i = 1; i < order.size(); ++i) CHECK(out.data()(order[i - 1]) <= out.data()(order[i]));
    CHECK(test::max_abs_diff(rescale_unit(out).image, out) < 1e-12);

    const auto flat = rescale_unit(Image(4, 4, 0.7));
    CHECK(flat.degenerate);
    CHECK((flat.image.data() == 0.0).all());
}

TEST_CASE("extract_patches tiling") {
    const auto p128 = extract_patches(Image(128, 128, 0.1), 64, true);
    REQUIRE(p128.size() == 4);
    std::set<std::pair<Index, Index>> origins;
    for (const auto& p : p128) origins.insert({p.origin_x, p.origin_y});
    CHECK(origins == std::set<std::pair<Index, Index>>{{0, 0}, {64, 0}, {0, 64}, {64, 64}});

    CHECK(extract_patches(Image(100, 100), 64, true).size() == 1);
    CHECK_THROWS_AS(extract_patches(Image(50, 80), 64, true), InvalidArgument);

    Image disc(256, 256, 0.5);
    disc.set_fov(circular_fov(256, 256, 0));
    const auto kept = extract_patches(disc, 64, true);
    std::set<std::pair<Index, Index>> expected;
    for (Index oy = 0; oy + 64 <= 256; oy += 64)
        for (Index ox = 0; ox + 64 <= 256; ox += 64) {
            bool all = true;
            for (Index y = oy; y < oy + 64; ++y)
                for (Index x = ox; x < ox + 64; ++x) all = all && (*disc.fov())(y, x);
            if (all) expected.insert({ox, oy});
        }
    std::set<std::pair<Index, Index>> got;
    for (const auto& p : kept) got.insert({p.origin_x, p.origin_y});
    CHECK(got == expected);
    CHECK(got.size() == 4);

    // Partial tiles: the >= 50% rule keeps more of the disc's grid.
    const auto half = extract_patches(disc, 64, false);
    CHECK(half.size() > kept.size());
    CHECK(extract_patches(disc, 64, false, 1.0).size() == kept.size());
}

TEST_CASE("extract_patches output is disjoint and in bounds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Index w = 20 + Index(uniform_below(rng, 100));
        const Index h = 20 + Index(uniform_below(rng, 100));
        const Index size = 1 + Index(uniform_below(rng, std::uint64_t(std::min(w, h))));
        Image img = test::random_image(w, h, seed);
        img.set_fov(circular_fov(w, h, 0));
        const auto patches = extract_patches(img, size, false);
        Grid<int> cover = Grid<int>::Zero(h, w);
        for (const auto& p : patches) {
            CHECK(p.origin_x % size == 0);
            CHECK(p.origin_y % size == 0);
            CHECK(p.origin_x + size <= w);
            CHECK(p.origin_y + size <= h);
            cover.block(p.origin_y, p.origin_x, size, size) += 1;
            CHECK((p.data - img.data().block(p.origin_y, p.origin_x, size, size)).abs().maxCoeff() == 0.0);
        }
        CHECK(cover.maxCoeff() <= 1);
    }
}

TEST_CASE("write_patch_set writes images and a manifest") {
    const auto dir = scratch("patches");
    fs::remove_all(dir);
    const auto patches = extract_patches(test::random_image(128, 64, 1), 64, true);
    write_patch_set(dir, "frame_007.png", patches, 16);
    std::ifstream in(dir / "manifest.csv");
    std::string header, row1, row2;
    std::getline(in, header);
    std::getline(in, row1);
    std::getline(in, row2);
    CHECK(header == "patch_id,source,origin_x,origin_y");
    CHECK(row1 == "patch_000000,frame_007.png,0,0");
    CHECK(row2 == "patch_000001,frame_007.png,64,0");
    CHECK(fs::exists(dir / "patch_000001.png"));
}

TEST_CASE("list_image_files orders frames numerically") {
    const auto dir = scratch("frames");
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const char* name : {"frame_10.png", "frame_2.png", "frame_1.png", "notes.txt"})
        std::ofstream(dir / name) << "x";
    const auto files = list_image_files(dir);
    REQUIRE(files.size() == 3);
    CHECK(files[0].filename() == "frame_1.png");
    CHECK(files[1].filename() == "frame_2.png");
    CHECK(files[2].filename() == "frame_10.png");
}

TEST_CASE("masks load with nonzero = inside") {
    const auto path = scratch("mask.pgm");
    write_pgm8(path, 3, 1, {0, 7, 255});
    const Mask m = load_mask(path);
    CHECK_FALSE(m(0, 0));
    CHECK(m(0, 1));
    CHECK(m(0, 2));
    Image img(3, 1);
    CHECK_NOTHROW(img.set_fov(m));
    CHECK_THROWS_AS(Image(4, 1).set_fov(m), InvalidArgument);
}
