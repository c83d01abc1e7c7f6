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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcle/error.hpp"
#include "pcle/geometry.hpp"

namespace pcle {

namespace {

constexpr std::int32_t kNone = -1;

inline std::int32_t next_edge(std::int32_t e) { return e % 3 == 2 ? e - 2 : e + 1; }
inline std::int32_t prev_edge(std::int32_t e) { return e % 3 == 0 ? e + 2 : e - 1; }

/// Half-edge mesh: half-edge e runs from vertex_[e] to vertex_[next_edge(e)].
class Mesh {
public:
    explicit Mesh(std::span<const Point2> points)
        : points_(points),
          hull_next_(points.size(), kNone),
          hull_prev_(points.size(), kNone),
          hull_edge_(points.size(), kNone) {}

    std::int32_t add_triangle(std::int32_t a, std::int32_t b, std::int32_t c, std::int32_t ta,
                              std::int32_t tb, std::int32_t tc) {
        const auto t = std::int32_t(vertex_.size());
        vertex_.insert(vertex_.end(), {a, b, c});
        twin_.insert(twin_.end(), {kNone, kNone, kNone});
        link(t, ta);
        link(t + 1, tb);
        link(t + 2, tc);
        return t;
    }

    void link(std::int32_t a, std::int32_t b) {
        twin_[std::size_t(a)] = b;
        if (b != kNone) twin_[std::size_t(b)] = a;
    }

    /// Rebuilds the hull ring from the boundary half-edges (used once after seeding).
    void rebuild_hull() {
        for (std::size_t e = 0; e < vertex_.size(); ++e) {
            if (twin_[e] != kNone) continue;
            const auto from = vertex_[e];
            const auto to = vertex_[std::size_t(next_edge(std::int32_t(e)))];
            hull_next_[std::size_t(from)] = to;
            hull_prev_[std::size_t(to)] = from;
            hull_edge_[std::size_t(from)] = std::int32_t(e);
        }
    }

    bool visible(std::int32_t from, const Point2& p) const {
        const auto to = hull_next_[std::size_t(from)];
        return orient2d(pt(from), pt(to), p) < 0;
    }

    void insert_outside(std::int32_t p, std::int32_t last) {
        const Point2& pp = pt(p);
        // Find a vertex whose outgoing hull edge is visible, preferring the
        // neighbourhood of the previously inserted (rightmost) point.
        std::int32_t start = kNone;
        if (visible(last, pp))
            start = last;
        else if (visible(hull_prev_[std::size_t(last)], pp))
            start = hull_prev_[std::size_t(last)];
        else {
            std::int32_t v = last;
            do {
                if (visible(v, pp)) {
                    start = v;
                    break;
                }
                v = hull_next_[std::size_t(v)];
            } while (v != last);
        }
        if (start == kNone) throw InvalidArgument("delaunay: point not outside the hull (duplicate input?)");

        // Extend the visible chain in both directions.
        std::int32_t first = start;
        while (hull_prev_[std::size_t(first)] != start && visible(hull_prev_[std::size_t(first)], pp))
            first = hull_prev_[std::size_t(first)];
        std::vector<std::int32_t> chain{first};
        std::int32_t v = first;
        while (visible(v, pp)) {
            v = hull_next_[std::size_t(v)];
            chain.push_back(v);
            if (v == first) break;
        }

        std::vector<std::int32_t> legalize_queue;
        std::int32_t prev_tri = kNone;
        std::int32_t first_tri = kNone;
        for (std::size_t j = 0; j + 1 < chain.size(); ++j) {
            const auto a = chain[j];
            const auto b = chain[j + 1];
            const auto outer = hull_edge_[std::size_t(a)];
            // (b, a, p) is counter-clockwise because p sees edge a->b from its right.
            const auto t = add_triangle(b, a, p, outer, prev_tri == kNone ? kNone : prev_tri + 2, kNone);
            if (first_tri == kNone) first_tri = t;
            prev_tri = t;
            legalize_queue.push_back(t);
        }

        const auto a0 = chain.front();
        const auto am = chain.back();
        for (std::size_t j = 1; j + 1 < chain.size(); ++j) {
            const auto inner = chain[j];
            hull_next_[std::size_t(inner)] = hull_prev_[std::size_t(inner)] = hull_edge_[std::size_t(inner)] = kNone;
        }
        hull_next_[std::size_t(a0)] = p;
        hull_prev_[std::size_t(p)] = a0;
        hull_next_[std::size_t(p)] = am;
        hull_prev_[std::size_t(am)] = p;
        hull_edge_[std::size_t(a0)] = first_tri + 1;
        hull_edge_[std::size_t(p)] = prev_tri + 2;

        for (auto t : legalize_queue) legalize(t);
    }

    void legalize(std::int32_t edge) {
        std::vector<std::int32_t> stack{edge};
        while (!stack.empty()) {
            const auto a = stack.back();
            stack.pop_back();
            const auto b = twin_[std::size_t(a)];
            if (b == kNone) continue;

            const auto al = next_edge(a);
            const auto ar = prev_edge(a);
            const auto br = next_edge(b);
            const auto bl = prev_edge(b);
            const auto p0 = vertex_[std::size_t(ar)];
            const auto pr = vertex_[std::size_t(a)];
            const auto pl = vertex_[std::size_t(al)];
            const auto p1 = vertex_[std::size_t(bl)];
            if (incircle(pt(pr), pt(pl), pt(p0), pt(p1)) <= 0) continue;

            // Flip pr-pl to p0-p1: triangles become (p1, pl, p0) and (p0, pr, p1).
            vertex_[std::size_t(a)] = p1;
            vertex_[std::size_t(b)] = p0;
            const auto hbl = twin_[std::size_t(bl)];
            const auto har = twin_[std::size_t(ar)];
            link(a, hbl);
            link(b, har);
            link(ar, bl);
            if (hbl == kNone) hull_edge_[std::size_t(p1)] = a;
            if (har == kNone) hull_edge_[std::size_t(p0)] = b;

            stack.push_back(br);
            stack.push_back(a);
        }
    }

    Triangulation result(std::int32_t any_hull_vertex) const {
        Triangulation out;
        out.triangles.reserve(vertex_.size() / 3);
        for (std::size_t t = 0; t < vertex_.size(); t += 3)
            out.triangles.push_back({vertex_[t], vertex_[t + 1], vertex_[t + 2]});
        std::int32_t v = any_hull_vertex;
        do {
            out.hull.push_back(v);
            v = hull_next_[std::size_t(v)];
        } while (v != any_hull_vertex);
        return out;
    }

private:
    const Point2& pt(std::int32_t i) const { return points_[std::size_t(i)]; }

    std::span<const Point2> points_;
    std::vector<std::int32_t> vertex_;
    std::vector<std::int32_t> twin_;
    std::vector<std::int32_t> hull_next_;
    std::vector<std::int32_t> hull_prev_;
    std::vector<std::int32_t> hull_edge_;
};

} // namespace

Triangulation delaunay_triangulate(std::span<const Point2> points) {
    const std::size_t n = points.size();
    if (n < 3) throw InvalidArgument("delaunay: need at least 3 points");
    for (const auto& p : points)
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("delaunay: non-finite coordinate");

    std::vector<std::int32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t i, std::int32_t j) {
        const auto& a = points[std::size_t(i)];
        const auto& b = points[std::size_t(j)];
        return a.x < b.x || (a.x == b.x && (a.y < b.y || (a.y == b.y && i < j)));
    });
    for (std::size_t i = 1; i < n; ++i)
        if (points[std::size_t(order[i])] == points[std::size_t(order[i - 1])])
            throw InvalidArgument("delaunay: duplicate point at index " + std::to_string(order[i]));

    // Seed with the leading collinear run fanned to the first point off its line.
    std::size_t k = 2;
    const auto& c0 = points[std::size_t(order[0])];
    const auto& c1 = points[std::size_t(order[1])];
    while (k < n && orient2d(c0, c1, points[std::size_t(order[k])]) == 0) ++k;
    if (k == n) throw InvalidArgument("delaunay: all points are collinear");

    Mesh mesh(points);
    const auto apex = order[k];
    const bool left = orient2d(c0, c1, points[std::size_t(apex)]) > 0;
    std::int32_t prev = kNone;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        const auto u = order[i];
        const auto w = order[i + 1];
        if (left) {
            // (u, w, apex); shared edge with previous fan triangle is u->apex vs apex->u.
            const auto t = mesh.add_triangle(u, w, apex, kNone, kNone, prev == kNone ? kNone : prev + 1);
            prev = t;
        } else {
            // (w, u, apex); edge u->apex pairs with the previous triangle's apex->u.
            const auto t = mesh.add_triangle(w, u, apex, kNone, prev == kNone ? kNone : prev + 2, kNone);
            prev = t;
        }
    }
    mesh.rebuild_hull();

    std::int32_t last = apex;
    for (std::size_t i = k + 1; i < n; ++i) {
        mesh.insert_outside(order[i], last);
        last = order[i];
    }
    return mesh.result(last);
}

} // namespace pcle
