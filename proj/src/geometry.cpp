#include "chanform/geometry.hpp"

#include <algorithm>
#include <limits>

namespace chanform {

double polygon_area(const Polygon& poly) {
    double a = 0.0;
    std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        a += p.cross(q);
    }
    return 0.5 * a;
}

Rect polygon_bbox(const Polygon& poly) {
    Rect r{{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()},
           {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()}};
    for (const Vec2& p : poly) {
        r.lo.x = std::min(r.lo.x, p.x);
        r.lo.y = std::min(r.lo.y, p.y);
        r.hi.x = std::max(r.hi.x, p.x);
        r.hi.y = std::max(r.hi.y, p.y);
    }
    return r;
}

namespace {

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
    double v = (b - a).cross(c - a);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

} // namespace

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    int o1 = orientation(a, b, c);
    int o2 = orientation(a, b, d);
    int o3 = orientation(c, d, a);
    int o4 = orientation(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a, b, c)) return true;
    if (o2 == 0 && on_segment(a, b, d)) return true;
    if (o3 == 0 && on_segment(c, d, a)) return true;
    if (o4 == 0 && on_segment(c, d, b)) return true;
    return false;
}

bool polygon_is_simple(const Polygon& poly) {
    std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a = poly[i];
        Vec2 b = poly[(i + 1) % n];
        if ((b - a).norm() < 1e-12) return false;
        for (std::size_t j = i + 1; j < n; ++j) {
            // Adjacent edges share an endpoint; skip them.
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            Vec2 c = poly[j];
            Vec2 d = poly[(j + 1) % n];
            if (segments_intersect(a, b, c, d)) return false;
        }
    }
    return true;
}

bool point_in_polygon(const Vec2& p, const Polygon& poly) {
    // Crossing number; points exactly on the boundary count as inside.
    bool inside = false;
    std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[j];
        const Vec2& b = poly[i];
        if (orientation(a, b, p) == 0 && on_segment(a, b, p)) return true;
        if ((b.y > p.y) != (a.y > p.y)) {
            double t = (p.y - b.y) / (a.y - b.y);
            double xint = b.x + t * (a.x - b.x);
            if (p.x < xint) inside = !inside;
        }
    }
    return inside;
}

double segment_point_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
    Vec2 ab = b - a;
    double len2 = ab.dot(ab);
    if (len2 < 1e-24) return (p - a).norm();
    double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    Vec2 proj = a + ab * t;
    return (p - proj).norm();
}

bool polygons_overlap(const Polygon& a, const Polygon& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        Vec2 p = a[i];
        Vec2 q = a[(i + 1) % a.size()];
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (segments_intersect(p, q, b[j], b[(j + 1) % b.size()])) return true;
        }
    }
    if (point_in_polygon(a[0], b)) return true;
    if (point_in_polygon(b[0], a)) return true;
    return false;
}

double polygon_polyline_distance(const Polygon& poly,
                                 const std::vector<Vec2>& line) {
    double best = std::numeric_limits<double>::max();
    for (std::size_t s = 0; s + 1 < line.size(); ++s) {
        Vec2 c = line[s];
        Vec2 d = line[s + 1];
        for (std::size_t i = 0; i < poly.size(); ++i) {
            Vec2 a = poly[i];
            Vec2 b = poly[(i + 1) % poly.size()];
            if (segments_intersect(a, b, c, d)) return 0.0;
            best = std::min(best, segment_point_distance(a, b, c));
            best = std::min(best, segment_point_distance(a, b, d));
            best = std::min(best, segment_point_distance(c, d, a));
            best = std::min(best, segment_point_distance(c, d, b));
        }
        if (point_in_polygon(c, poly)) return 0.0;
    }
    return best;
}

Polygon make_rectangle(const Vec2& c, double hx, double hy, double angle) {
    double ca = std::cos(angle);
    double sa = std::sin(angle);
    auto rot = [&](double x, double y) -> Vec2 {
        return {c.x + x * ca - y * sa, c.y + x * sa + y * ca};
    };
    return {rot(-hx, -hy), rot(hx, -hy), rot(hx, hy), rot(-hx, hy)};
}

} // namespace chanform
