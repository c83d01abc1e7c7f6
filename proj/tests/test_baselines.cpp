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

#include "pcle/baselines.hpp"
#include "pcle/fft.hpp"
#include "pcle/iqa.hpp"
#include "support/test_support.hpp"

using namespace pcle;
using pcle::test::max_abs_diff;
using pcle::test::random_image;

namespace {

// Direct separable Gaussian blur; kernel taps computed here, not by the library.
std::vector<double> taps(double sigma, Index r) {
    std::vector<double> k(std::size_t(2 * r + 1));
    double s = 0.0;
    for (Index i = -r; i <= r; ++i) s += k[std::size_t(i + r)] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    for (auto& v : k) v /= s;
    return k;
}

template <typename Wrap>
Image direct_blur(const Image& img, double sigma, Wrap wrap) {
    const Index r = Index(std::ceil(4.0 * sigma));
    const auto k = taps(sigma, r);
    const Index w = img.width(), h = img.height();
    Image out(w, h);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            long double a = 0;
            for (Index j = -r; j <= r; ++j)
                for (Index i = -r; i <= r; ++i)
                    a += k[std::size_t(j + r)] * k[std::size_t(i + r)] * img(wrap(x + i, w), wrap(y + j, h));
            out(x, y) = double(a);
        }
    return out;
}

Index periodic(Index i, Index n) { return ((i % n) + n) % n; }
Index mirror(Index i, Index n) {
    const Index p = 2 * n;
    const Index m = ((i % p) + p) % p;
    return m < n ? m : p - 1 - m;
}

double high_band_energy(const Image& img) {
    const ComplexGrid f = fft2(img.data());
    double e = 0.0;
    for (Index v = 0; v < f.rows(); ++v)
        for (Index u = 0; u < f.cols(); ++u) {
            const double fu = double(std::min(u, f.cols() - u)) / double(f.cols());
            const double fv = double(std::min(v, f.rows() - v)) / double(f.rows());
            if (fu * fu + fv * fv > 0.25 * 0.25) e += std::norm(f(v, u));
        }
    return e;
}

} // namespace

TEST_CASE("gaussian kernel is symmetric, unit-sum and sized by support") {
    const auto k = gaussian_kernel_1d(2.0, 4.0);
    CHECK(k.size() == 17);
    CHECK(std::abs(k.sum() - 1.0) < 1e-15);
    for (Index i = 0; i < k.size(); ++i) CHECK(k(i) == k(k.size() - 1 - i));
    const auto ref = taps(2.0, 8);
    for (Index i = 0; i < k.size(); ++i) CHECK(std::abs(k(i) - ref[std::size_t(i)]) < 1e-16);
}

TEST_CASE("wiener with a delta psf and nsr 0 is the identity") {
    for (auto b : {Boundary::symmetric, Boundary::periodic}) {
        const Image img = random_image(37, 29, 11);
        WienerParams p;
        p.psf_sigma = 1e-3;
        p.nsr = 0.0;
        p.boundary = b;
        CHECK(max_abs_diff(wiener_deconvolve(img, p), img) < 1e-9);
    }
}

TEST_CASE("wiener with nsr 0 inverts a periodic blur") {
    const Image img = random_image(48, 40, 3);
    const Image blurred = direct_blur(img, 1.0, periodic);
    WienerParams p;
    p.psf_sigma = 1.0;
    p.nsr = 0.0;
    p.boundary = Boundary::periodic;
    CHECK(max_abs_diff(wiener_deconvolve(blurred, p), img) < 1e-6);
}

TEST_CASE("wiener output shrinks to zero for huge nsr") {
    const Image img = random_image(32, 32, 5);
    WienerParams p;
    p.nsr = 1e8;
    CHECK(wiener_deconvolve(img, p).data().abs().maxCoeff() < 1e-7);
}

TEST_CASE("wiener high-band energy is non-increasing in nsr") {
    const Image img = direct_blur(random_image(64, 64, 9), 2.0, periodic);
    WienerParams p;
    p.boundary = Boundary::periodic;
    double prev = std::numeric_limits<double>::infinity();
    for (double nsr : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
        p.nsr = nsr;
        const double e = high_band_energy(wiener_deconvolve(img, p));
        CHECK(e <= prev * (1 + 1e-12));
        prev = e;
    }
}

TEST_CASE("wiener keeps dimensions and FoV and ignores out-of-FoV values") {
    Image img = random_image(45, 38, 21);
    img.set_fov(circular_fov(45, 38, 2.0));
    const Image out = wiener_deconvolve(img);
    CHECK(out.width() == 45);
    CHECK(out.height() == 38);
    REQUIRE(out.has_fov());
    CHECK((*out.fov() == *img.fov()).all());
    Image other = img;
    for (Index y = 0; y < 38; ++y)
        for (Index x = 0; x < 45; ++x)
            if (!img.in_fov(x, y)) {
                CHECK(out(x, y) == 0.0);
                other(x, y) = 7.0;
            }
    CHECK(max_abs_diff(wiener_deconvolve(other), out) == 0.0);
}

TEST_CASE("wiener restores blurred noisy corpus images") {
    const auto corpus = test::load_corpus(10);
    REQUIRE(corpus.size() == 10);
    Rng rng(2024);
    double gain = 0.0;
    for (const auto& hr : corpus) {
        Image degraded = direct_blur(hr, 2.0, mirror);
        for (Index y = 0; y < degraded.height(); ++y)
            for (Index x = 0; x < degraded.width(); ++x) degraded(x, y) += 0.005 * standard_normal(rng);
        gain += ssim(wiener_deconvolve(degraded), hr) - ssim(degraded, hr);
    }
    gain /= 10.0;
    MESSAGE("mean SSIM gain " << gain);
    CHECK(gain >= 0.02);
}

TEST_CASE("wiener parameter validation") {
    const Image img = random_image(8, 8, 1);
    WienerParams p;
    p.psf_sigma = 0.0;
    CHECK_THROWS_AS(wiener_deconvolve(img, p), InvalidArgument);
    p = {};
    p.nsr = -1.0;
    CHECK_THROWS_AS(wiener_deconvolve(img, p), InvalidArgument);
    CHECK_THROWS_AS(wiener_deconvolve(Image{}), InvalidArgument);
    CHECK(parse_boundary("periodic") == Boundary::periodic);
    CHECK(to_string(parse_boundary("symmetric")) == "symmetric");
    CHECK_THROWS_AS(parse_boundary("zero"), InvalidArgument);
}

TEST_CASE("sharpen with amount 0 is the identity") {
    const Image img = random_image(30, 20, 4);
    SharpenParams p;
    p.amount = 0.0;
    CHECK(max_abs_diff(unsharp_sharpen(img, p), img) == 0.0);
}

TEST_CASE("sharpen leaves constant images unchanged") {
    for (double c : {0.0, 0.3, 1.0}) {
        Image img(25, 17);
        img.data().setConstant(c);
        img.set_fov(circular_fov(25, 17, 1.0));
        for (double amount : {0.5, 1.0, 3.0}) {
            SharpenParams p;
            p.amount = amount;
            p.radius = 2.5;
            const Image out = unsharp_sharpen(img, p);
            for (Index y = 0; y < 17; ++y)
                for (Index x = 0; x < 25; ++x) CHECK(out(x, y) == (img.in_fov(x, y) ? c : 0.0));
        }
    }
}

TEST_CASE("sharpen is linear without clamping") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const Image img = random_image(20 + trial, 16 + trial, 100 + std::uint64_t(trial));
        SharpenParams p;
        p.clamp = false;
        p.amount = 0.2 + 2.0 * uniform01(rng);
        p.radius = 0.5 + 2.0 * uniform01(rng);
        const double a = 1.0 - uniform01(rng); // (0, 1]
        Image scaled = img;
        scaled.data() *= a;
        Image expect = unsharp_sharpen(img, p);
        expect.data() *= a;
        CHECK(max_abs_diff(unsharp_sharpen(scaled, p), expect) < 1e-12);
    }
}

TEST_CASE("sharpen matches in + amount * (in - blur) away from the border") {
    const Image img = random_image(40, 40, 8);
    SharpenParams p;
    p.clamp = false;
    p.amount = 1.7;
    p.radius = 1.2;
    const Index r = Index(std::ceil(3.0 * p.radius));
    const auto k = taps(p.radius, r);
    const Image out = unsharp_sharpen(img, p);
    for (Index y = r; y < 40 - r; ++y)
        for (Index x = r; x < 40 - r; ++x) {
            double blur = 0.0;
            for (Index j = -r; j <= r; ++j)
                for (Index i = -r; i <= r; ++i) blur += k[std::size_t(j + r)] * k[std::size_t(i + r)] * img(x + i, y + j);
            CHECK(std::abs(out(x, y) - (img(x, y) + p.amount * (img(x, y) - blur))) < 1e-12);
        }
}

TEST_CASE("sharpen keeps FoV, clamps, and ignores out-of-FoV values") {
    Image img = random_image(33, 27, 12);
    img.set_fov(circular_fov(33, 27, 1.5));
    SharpenParams p;
    p.amount = 4.0;
    const Image out = unsharp_sharpen(img, p);
    REQUIRE(out.has_fov());
    CHECK((*out.fov() == *img.fov()).all());
    CHECK(out.data().minCoeff() >= 0.0);
    CHECK(out.data().maxCoeff() <= 1.0);
    Image other = img;
    for (Index y = 0; y < 27; ++y)
        for (Index x = 0; x < 33; ++x)
            if (!img.in_fov(x, y)) other(x, y) = -5.0;
    CHECK(max_abs_diff(unsharp_sharpen(other, p), out) == 0.0);
}

TEST_CASE("sharpen raises GCF on the corpus") {
    const auto corpus = test::load_corpus(10);
    int up = 0;
    for (const auto& img : corpus) up += delta_gcf(unsharp_sharpen(img), img) > 0.0;
    CHECK(up >= 9);
}
