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

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "oracles/geometry_oracle.hpp"
#include "pcle/fibresim.hpp"
#include "support/test_support.hpp"

using namespace pcle;
namespace fs = std::filesystem;

namespace {

Mask full_mask(Index w, Index h) { return Mask::Constant(h, w, true); }

std::vector<Point2> random_points(std::size_t n, double w, double h, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Point2> pts;
    while (pts.size() < n) pts.push_back({uniform01(rng) * (w - 1.0), uniform01(rng) * (h - 1.0)});
    return pts;
}

std::vector<double> as_vector(const FibreSignals& s) { return {s.data(), s.data() + s.size()}; }

} // namespace

TEST_CASE("predicates are exact on near-degenerate input") {
    const Point2 a{0.5, 0.5}, b{12.0, 12.0}, c{24.0, 24.0};
    CHECK(orient2d(a, b, c) == 0);
    // Classic failure case for naive floating point: tiny perturbations off a line.
    const Point2 p{0.5 + 0x1.0p-52, 0.5};
    CHECK(orient2d(p, b, c) == -orient2d(b, p, c));
    CHECK(orient2d({0, 0}, {1, 0}, {0, 1}) == 1);
    CHECK(orient2d({0, 0}, {0, 1}, {1, 0}) == -1);
    CHECK(incircle({0, 0}, {1, 0}, {1, 1}, {0, 1}) == 0);
    CHECK(incircle({0, 0}, {1, 0}, {1, 1}, {0.5, 0.5}) == 1);
    CHECK(incircle({0, 0}, {1, 0}, {1, 1}, {3, 3}) == -1);
}

TEST_CASE("triangulation of small configurations") {
    const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const auto t = delaunay_triangulate(square);
    CHECK(t.triangles.size() == 2);
    CHECK(t.hull.size() == 4);
    double area = 0;
    for (const auto& tr : t.triangles) {
        const double a = double(oracle::cross(square[std::size_t(tr[0])], square[std::size_t(tr[1])], square[std::size_t(tr[2])]));
        CHECK(a > 0);
        area += a / 2;
    }
    CHECK(area == doctest::Approx(1.0));

    const std::vector<Point2> tri{{0, 0}, {4, 1}, {1, 3}};
    CHECK(delaunay_triangulate(tri).triangles.size() == 1);

    CHECK_THROWS_AS(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}}), InvalidArgument);
    CHECK_THROWS_AS(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}), InvalidArgument);
    CHECK_THROWS_AS(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 0}, {0, 1}, {1, 0}}), InvalidArgument);
}

TEST_CASE("triangulation is Delaunay and covers the hull (random and degenerate sets)") {
    std::vector<std::vector<Point2>> sets;
    for (std::uint64_t seed = 0; seed < 12; ++seed) sets.push_back(random_points(20 + 40 * seed, 100, 80, seed));
    // Leading collinear run, vertical columns, and a cocircular integer grid.
    std::vector<Point2> line_then_cloud{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {0, 5}};
    for (auto p : random_points(30, 20, 20, 99)) line_then_cloud.push_back({p.x + 1.0, p.y});
    sets.push_back(line_then_cloud);
    std::vector<Point2> grid;
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 11; ++x) grid.push_back({double(x), double(y)});
    sets.push_back(grid);

    for (const auto& pts : sets) {
        const auto t = delaunay_triangulate(pts);
        const auto hull = oracle::convex_hull(pts);
        double area = 0.0;
        bool ccw = true, empty = true;
        std::set<std::array<int, 2>> edges;
        for (const auto& tr : t.triangles) {
            const double a = double(oracle::cross(pts[std::size_t(tr[0])], pts[std::size_t(tr[1])], pts[std::size_t(tr[2])]));
            ccw = ccw && a > 0;
            area += a / 2;
            empty = empty && !oracle::violates_empty_circle(pts, tr);
            for (int k = 0; k < 3; ++k) edges.insert({tr[k], tr[(k + 1) % 3]});
        }
        CHECK(ccw);
        CHECK(empty);
        CHECK(area == doctest::Approx(oracle::polygon_area(hull)).epsilon(1e-9));
        // Each directed edge appears once (manifold, no overlaps).
        CHECK(edges.size() == 3 * t.triangles.size());
        // Every point is used.
        std::set<int> used;
        for (const auto& tr : t.triangles) used.insert(tr.begin(), tr.end());
        CHECK(used.size() == pts.size());
    }
}

TEST_CASE("triangulation is deterministic on cocircular ties") {
    std::vector<Point2> grid;
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) grid.push_back({double(x), double(y)});
    const auto a = delaunay_triangulate(grid);
    const auto b = delaunay_triangulate(grid);
    CHECK(a.triangles == b.triangles);
    CHECK(a.triangles.size() == 2 * 25);
}

TEST_CASE("generate_layout with zero jitter is an exact hexagonal lattice") {
    const Index w = 120, h = 100;
    const FibreLayout layout = generate_layout(w, h, full_mask(w, h), {6.0, 0.0, 1});
    const auto& f = layout.fibres();
    std::size_t interior = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i].x < 8 || f[i].y < 8 || f[i].x > w - 9 || f[i].y > h - 9) continue;
        double best = INFINITY;
        for (std::size_t j = 0; j < f.size(); ++j)
            if (j != i) best = std::min(best, std::hypot(f[i].x - f[j].x, f[i].y - f[j].y));
        CHECK(best == doctest::Approx(6.0).epsilon(1e-12));
        ++interior;
    }
    CHECK(interior > 100);
}

TEST_CASE("generate_layout validates parameters and respects the FoV") {
    const Mask fov = circular_fov(80, 80, 2);
    CHECK_THROWS_AS(generate_layout(80, 80, fov, {1.5, 0.1, 0}), InvalidArgument);
    CHECK_THROWS_AS(generate_layout(80, 80, fov, {4.0, 0.6, 0}), InvalidArgument);
    CHECK_THROWS_AS(generate_layout(8, 8, circular_fov(8, 8, 3), {6.0, 0.0, 0}), InvalidArgument);

    const FibreLayout layout = generate_layout(80, 80, fov, {4.0, 0.3, 11});
    for (const auto& p : layout.fibres()) CHECK(fov(Index(std::floor(p.y + 0.5)), Index(std::floor(p.x + 0.5))));
    for (const auto& cell : layout.cells()) CHECK_FALSE(cell.empty());

    const FibreLayout again = generate_layout(80, 80, fov, {4.0, 0.3, 11});
    CHECK(again.hash() == layout.hash());
    const FibreLayout other = generate_layout(80, 80, fov, {4.0, 0.3, 12});
    CHECK(other.hash() != layout.hash());
}

TEST_CASE("Voronoi cells equal brute-force nearest-fibre assignment") {
    const Index w = 200, h = 200;
    const Mask fov = circular_fov(w, h, 0);
    const FibreLayout layout = generate_layout(w, h, fov, {5.0, 0.3, 7});
    const auto hull = oracle::convex_hull(layout.fibres());
    std::size_t checked = 0, mismatches = 0;
    std::vector<std::size_t> cell_sizes(layout.fibre_count(), 0);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (!fov(y, x)) {
                CHECK(layout.owner()(y, x) == -1);
                continue;
            }
            ++cell_sizes[std::size_t(layout.owner()(y, x))];
            if (oracle::hull_margin(hull, {double(x), double(y)}) < 0) continue;
            ++checked;
            if (layout.owner()(y, x) != oracle::nearest_point(layout.fibres(), double(x), double(y))) ++mismatches;
        }
    CHECK(checked > 25000);
    CHECK(mismatches == 0);
    // Cells are exactly the owner map, so they partition the in-FoV pixels.
    std::size_t total = 0;
    for (std::size_t i = 0; i < layout.fibre_count(); ++i) {
        CHECK(layout.cells()[i].size() == cell_sizes[i]);
        total += layout.cells()[i].size();
    }
    CHECK(total == std::size_t(fov.count()));
}

TEST_CASE("in-hull pixels and the containing triangle agree with an independent hull test") {
    const Index w = 96, h = 96;
    const FibreLayout layout(w, h, full_mask(w, h), random_points(30, double(w), double(h), 4));
    const auto hull = oracle::convex_hull(layout.fibres());
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const double m = oracle::hull_margin(hull, {double(x), double(y)});
            if (std::abs(m) < 1e-9) continue;
            CHECK(layout.in_hull(x, y) == (m > 0));
        }
}

TEST_CASE("extract_signals of a constant image is constant in both modes") {
    const Index w = 64, h = 64;
    const FibreLayout layout = generate_layout(w, h, circular_fov(w, h, 1), {4.0, 0.25, 3});
    const Image hr(w, h, 0.37);
    for (auto mode : {ExtractionMode::voronoi_average, ExtractionMode::seven_pixel_average}) {
        const FibreSignals fs = extract_signals(hr, layout, mode);
        CHECK(fs.size() == Index(layout.fibre_count()));
        CHECK((fs - 0.37).abs().maxCoeff() < 1e-15);
    }
    CHECK_THROWS_AS(extract_signals(Image(10, 10), layout), InvalidArgument);
}

TEST_CASE("extract_signals voronoi mode on a ramp matches the per-cell mean x") {
    const Index w = 90, h = 70;
    const FibreLayout layout = generate_layout(w, h, full_mask(w, h), {5.0, 0.4, 21});
    Image ramp(w, h);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) ramp(x, y) = double(x) / double(w);
    const FibreSignals fs = extract_signals(ramp, layout);
    // Independent per-cell oracle built from brute-force nearest search.
    std::vector<double> sum(layout.fibre_count(), 0.0);
    std::vector<double> cnt(layout.fibre_count(), 0.0);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const int f = oracle::nearest_point(layout.fibres(), double(x), double(y));
            sum[std::size_t(f)] += double(x);
            cnt[std::size_t(f)] += 1;
        }
    for (std::size_t i = 0; i < layout.fibre_count(); ++i)
        CHECK(std::abs(fs(Index(i)) - sum[i] / cnt[i] / double(w)) < 1e-12);
}

TEST_CASE("extract_signals seven-pixel mode equals the brute-force 7-nearest mean") {
    const Index w = 60, h = 60;
    const FibreLayout layout = generate_layout(w, h, full_mask(w, h), {5.0, 0.0, 0});
    const Image hr = test::random_image(w, h, 8);
    const FibreSignals fs = extract_signals(hr, layout, ExtractionMode::seven_pixel_average);
    for (std::size_t i = 0; i < layout.fibre_count(); ++i) {
        const Point2 p = layout.fibres()[i];
        std::vector<std::tuple<double, Index, Index>> all;
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x)
                all.emplace_back((x - p.x) * (x - p.x) + (y - p.y) * (y - p.y), y, x);
        std::sort(all.begin(), all.end());
        double s = 0;
        for (int k = 0; k < 7; ++k) s += hr(std::get<2>(all[std::size_t(k)]), std::get<1>(all[std::size_t(k)]));
        CHECK(std::abs(fs(Index(i)) - s / 7.0) < 1e-12);
    }
}

TEST_CASE("extract_signals reports the fibre with an empty cell") {
    // Fibre 3 sits in a masked-out hole of the HR image's own FoV.
    const Index w = 20, h = 20;
    const FibreLayout layout(w, h, full_mask(w, h), {{2, 2}, {17, 2}, {2, 17}, {10, 10}, {17, 17}});
    Image hr(w, h, 0.5);
    Mask m = full_mask(w, h);
    for (Index lin : layout.cells()[3]) m(lin / w, lin % w) = false;
    hr.set_fov(m);
    try {
        extract_signals(hr, layout);
        FAIL("expected EmptyCellError");
    } catch (const EmptyCellError& e) {
        CHECK(e.fibre() == 3);
    }
}

TEST_CASE("extract_signals is linear in the image") {
    const Index w = 64, h = 48;
    const FibreLayout layout = generate_layout(w, h, full_mask(w, h), {4.0, 0.3, 5});
    const Image i1 = test::random_image(w, h, 1), i2 = test::random_image(w, h, 2);
    const double a = 0.7, b = -1.3;
    const Image mix(a * i1.data() + b * i2.data());
    for (auto mode : {ExtractionMode::voronoi_average, ExtractionMode::seven_pixel_average}) {
        const FibreSignals lhs = extract_signals(mix, layout, mode);
        const FibreSignals rhs = a * extract_signals(i1, layout, mode) + b * extract_signals(i2, layout, mode);
        CHECK((lhs - rhs).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("add_noise with zero sigmas is bit-identical and seeds reproduce") {
    FibreSignals fs = FibreSignals::LinSpaced(1000, -0.0, 1.0);
    fs(0) = -0.0;
    const FibreSignals out = add_noise(fs, {0.0, 0.0, 17});
    CHECK(std::memcmp(out.data(), fs.data(), sizeof(double) * std::size_t(fs.size())) == 0);

    const FibreSignals a = add_noise(fs, {0.05, 0.01, 3});
    const FibreSignals b = add_noise(fs, {0.05, 0.01, 3});
    const FibreSignals c = add_noise(fs, {0.05, 0.01, 4});
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(fs.size())) == 0);
    CHECK((a - c).abs().maxCoeff() > 0.0);
    CHECK_THROWS_AS(add_noise(FibreSignals(), {}), InvalidArgument);
    CHECK_THROWS_AS(add_noise(fs, {-0.1, 0.0, 0}), InvalidArgument);
}

TEST_CASE("add_noise on constant signals has purely multiplicative variance") {
    const Index n = 100000;
    const double c = 0.6;
    const FibreSignals fs = FibreSignals::Constant(n, c);
    const FibreSignals nfs = add_noise(fs, {0.05, 0.01, 123});
    const double mean = nfs.mean();
    const double var = (nfs - mean).square().sum() / double(n);
    const double model = (0.05 * c) * (0.05 * c);
    CHECK(std::abs(var - model) / model < 0.05);
}

TEST_CASE("add_noise mean error is consistent with zero") {
    const Index n = 100000;
    Rng rng(77);
    FibreSignals fs(n);
    for (Index i = 0; i < n; ++i) fs(i) = uniform01(rng);
    const FibreSignals nfs = add_noise(fs, {0.05, 0.01, 77});
    const double range = fs.maxCoeff() - fs.minCoeff();
    // Var(nfs - fs) = sigma_m^2 E[fs^2] + (sigma_a * range)^2
    const double sigma_total = std::sqrt(0.05 * 0.05 * fs.square().mean() + std::pow(0.01 * range, 2));
    CHECK(std::abs((nfs - fs).mean()) <= 3.0 * sigma_total / std::sqrt(double(n)));
}

TEST_CASE("reconstruct reproduces constant and affine fields") {
    const Index w = 100, h = 90;
    const Mask fov = circular_fov(w, h, 1);
    const FibreLayout layout = generate_layout(w, h, fov, {5.0, 0.35, 9});
    const Image flat = reconstruct(FibreSignals::Constant(Index(layout.fibre_count()), 0.42), layout);
    CHECK(flat.has_fov());
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            if (fov(y, x)) CHECK(std::abs(flat(x, y) - 0.42) < 1e-12);

    auto field = [&](double x, double y) { return 0.3 * x / double(w) + 0.5 * y / double(h) + 0.1; };
    FibreSignals fs(Index(layout.fibre_count()));
    for (std::size_t i = 0; i < layout.fibre_count(); ++i) fs(Index(i)) = field(layout.fibres()[i].x, layout.fibres()[i].y);
    const Image rec = reconstruct(fs, layout);
    double worst = 0.0;
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            if (layout.in_hull(x, y)) worst = std::max(worst, std::abs(rec(x, y) - field(double(x), double(y))));
    CHECK(worst <= 1e-9);
    CHECK_THROWS_AS(reconstruct(FibreSignals::Zero(3), layout), InvalidArgument);
}

TEST_CASE("reconstruct matches a brute-force barycentric oracle and stays within signal bounds") {
    const Index w = 80, h = 80;
    const FibreLayout layout(w, h, full_mask(w, h), random_points(30, double(w), double(h), 30));
    Rng rng(30);
    FibreSignals fs(30);
    for (Index i = 0; i < 30; ++i) fs(i) = uniform01(rng);
    const Image rec = reconstruct(fs, layout);
    const std::vector<double> values = as_vector(fs);
    std::size_t compared = 0;
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (!layout.in_hull(x, y)) {
                CHECK(rec(x, y) == fs(oracle::nearest_point(layout.fibres(), double(x), double(y))));
                continue;
            }
            const auto expected = oracle::interpolate_brute(layout.fibres(), layout.triangles(), values,
                                                            {double(x), double(y)}, 1e-12);
            REQUIRE(expected.has_value());
            CHECK(std::abs(rec(x, y) - *expected) < 1e-9);
            CHECK(rec(x, y) >= fs.minCoeff() - 1e-12);
            CHECK(rec(x, y) <= fs.maxCoeff() + 1e-12);
            ++compared;
        }
    CHECK(compared > 1000);
}

TEST_CASE("layout CSV round trip and validation") {
    const fs::path dir = fs::temp_directory_path() / "pcle_test_fibresim";
    fs::create_directories(dir);
    const Index w = 70, h = 70;
    const Mask fov = circular_fov(w, h, 0);
    const FibreLayout layout = generate_layout(w, h, fov, {4.0, 0.3, 2});
    save_layout(layout, dir / "layout.csv");
    const FibreLayout back = load_layout(dir / "layout.csv", w, h, fov);
    CHECK(back.triangles() == layout.triangles());
    CHECK(back.cells() == layout.cells());
    CHECK(back.hash() == layout.hash());

    {
        std::ofstream out(dir / "three.csv");
        out << "fibre_id,x,y\n0,1.5,1.5\n1,10,2\n2,4,9\n";
    }
    CHECK(load_layout(dir / "three.csv", 12, 12, full_mask(12, 12)).triangles().size() == 1);
    {
        std::ofstream out(dir / "dup.csv");
        out << "fibre_id,x,y\n0,1,1\n1,5,1\n2,1,1\n3,3,4\n";
    }
    CHECK_THROWS_AS(load_layout(dir / "dup.csv", 12, 12, full_mask(12, 12)), InvalidArgument);
    {
        std::ofstream out(dir / "outside.csv");
        out << "fibre_id,x,y\n0,1,1\n1,50,1\n2,3,4\n";
    }
    CHECK_THROWS_AS(load_layout(dir / "outside.csv", 12, 12, full_mask(12, 12)), InvalidArgument);
    {
        std::ofstream out(dir / "two.csv");
        out << "fibre_id,x,y\n0,1,1\n1,5,1\n";
    }
    CHECK_THROWS_AS(load_layout(dir / "two.csv", 12, 12, full_mask(12, 12)), InvalidArgument);
    {
        std::ofstream out(dir / "header.csv");
        out << "id,x,y\n0,1,1\n";
    }
    CHECK_THROWS_AS(load_layout(dir / "header.csv", 12, 12, full_mask(12, 12)), IoError);
}

TEST_CASE("simulate_lr composes the pipeline and records metadata") {
    const Index w = 64, h = 64;
    const FibreLayout layout = generate_layout(w, h, circular_fov(w, h, 0), {4.0, 0.2, 1});
    const auto flat = simulate_lr(Image(w, h, 0.5), layout, {0.0, 0.0, 9});
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            if (layout.fov()(y, x)) CHECK(std::abs(flat.lr(x, y) - 0.5) < 1e-12);
    CHECK(flat.metadata.layout_hash == layout.hash());
    CHECK(flat.metadata.seed == 9);
    CHECK(flat.metadata.mode == ExtractionMode::voronoi_average);

    const Image hr = test::smooth_texture(w, h, 4);
    const auto a = simulate_lr(hr, layout, {0.05, 0.01, 5});
    const auto b = simulate_lr(hr, layout, {0.05, 0.01, 5});
    CHECK(test::max_abs_diff(a.lr, b.lr) == 0.0);
}

TEST_CASE("extraction mode names") {
    CHECK(parse_extraction_mode("voronoi_average") == ExtractionMode::voronoi_average);
    CHECK(parse_extraction_mode("seven_pixel_average") == ExtractionMode::seven_pixel_average);
    CHECK(to_string(ExtractionMode::seven_pixel_average) == "seven_pixel_average");
    CHECK_THROWS_AS(parse_extraction_mode("bicubic"), InvalidArgument);
}
