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

#ifndef PCLE_GEOMETRY_HPP
#define PCLE_GEOMETRY_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pcle {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Sign of twice the signed area of (a, b, c): +1 counter-clockwise, -1 clockwise, 0 collinear.
/// Exact for all finite inputs (floating-point filter with an exact rational fallback).
int orient2d(const Point2& a, const Point2& b, const Point2& c);

/// +1 if d lies strictly inside the circumcircle of the counter-clockwise triangle
/// (a, b, c), -1 if strictly outside, 0 if cocircular. Exact.
int incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d);

using Triangle = std::array<std::int32_t, 3>;

struct Triangulation {
    std::vector<Triangle> triangles; ///< counter-clockwise vertex triples
    std::vector<std::int32_t> hull;  ///< convex hull, counter-clockwise (collinear vertices kept)
};

/**
 * Delaunay triangulation of a planar point set.
 *
 * Points are inserted in lexicographic (x, then y) order; each new point lies
 * outside the current hull, is joined to every hull edge it sees, and the edges
 * opposite it are legalised by flips. A flip happens only when the opposite
 * vertex is strictly inside the circumcircle, so cocircular ties resolve
 * deterministically by insertion order.
 *
 * Throws InvalidArgument on fewer than 3 points, duplicate points, or an
 * all-collinear set.
 */
Triangulation delaunay_triangulate(std::span<const Point2> points);

} // namespace pcle

#endif // PCLE_GEOMETRY_HPP
