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

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>

#include "pcle/geometry.hpp"

namespace pcle {

namespace {

using Exact = boost::multiprecision::cpp_rational;

constexpr double kEpsilon = 0x1.0p-53;
constexpr double kOrientBound = (3.0 + 16.0 * kEpsilon) * kEpsilon;
constexpr double kInCircleBound = (10.0 + 96.0 * kEpsilon) * kEpsilon;

template <typename T>
int sign_of(const T& v) {
    return v > 0 ? 1 : (v < 0 ? -1 : 0);
}

int orient_exact(const Point2& a, const Point2& b, const Point2& c) {
    const Exact acx = Exact(a.x) - Exact(c.x), bcx = Exact(b.x) - Exact(c.x);
    const Exact acy = Exact(a.y) - Exact(c.y), bcy = Exact(b.y) - Exact(c.y);
    return sign_of(Exact(acx * bcy - acy * bcx));
}

int incircle_exact(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
    const Exact adx = Exact(a.x) - Exact(d.x), ady = Exact(a.y) - Exact(d.y);
    const Exact bdx = Exact(b.x) - Exact(d.x), bdy = Exact(b.y) - Exact(d.y);
    const Exact cdx = Exact(c.x) - Exact(d.x), cdy = Exact(c.y) - Exact(d.y);
    const Exact alift = adx * adx + ady * ady;
    const Exact blift = bdx * bdx + bdy * bdy;
    const Exact clift = cdx * cdx + cdy * cdy;
    const Exact det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
                      clift * (adx * bdy - bdx * ady);
    return sign_of(det);
}

} // namespace

int orient2d(const Point2& a, const Point2& b, const Point2& c) {
    const double detleft = (a.x - c.x) * (b.y - c.y);
    const double detright = (a.y - c.y) * (b.x - c.x);
    const double det = detleft - detright;
    const double bound = kOrientBound * (std::abs(detleft) + std::abs(detright));
    if (det > bound || -det > bound) return sign_of(det);
    return orient_exact(a, b, c);
}

int incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;

    const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    const double cdxady = cdx * ady, adxcdy = adx * cdy;
    const double adxbdy = adx * bdy, bdxady = bdx * ady;
    const double alift = adx * adx + ady * ady;
    const double blift = bdx * bdx + bdy * bdy;
    const double clift = cdx * cdx + cdy * cdy;

    const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady);
    const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                             (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                             (std::abs(adxbdy) + std::abs(bdxady)) * clift;
    const double bound = kInCircleBound * permanent;
    if (det > bound || -det > bound) return sign_of(det);
    return incircle_exact(a, b, c, d);
}

} // namespace pcle
