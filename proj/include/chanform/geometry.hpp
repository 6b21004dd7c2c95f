#pragma once

#include <cmath>
#include <vector>

namespace chanform {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    Vec2 xy() const { return {x, y}; }
};

struct Rect {
    Vec2 lo;
    Vec2 hi;

    double width() const { return hi.x - lo.x; }
    double height() const { return hi.y - lo.y; }
    bool contains(const Vec2& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
    }
    Rect shrunk(double margin) const {
        return {{lo.x + margin, lo.y + margin}, {hi.x - margin, hi.y - margin}};
    }
};

using Polygon = std::vector<Vec2>;

double polygon_area(const Polygon& poly);           // signed, CCW positive
bool polygon_is_simple(const Polygon& poly);        // no self-intersection
bool point_in_polygon(const Vec2& p, const Polygon& poly);
Rect polygon_bbox(const Polygon& poly);

double segment_point_distance(const Vec2& a, const Vec2& b, const Vec2& p);
bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

// True if the polygons share any area (edge crossing or containment).
bool polygons_overlap(const Polygon& a, const Polygon& b);

// Minimum distance from polygon boundary/interior to a polyline.
double polygon_polyline_distance(const Polygon& poly,
                                 const std::vector<Vec2>& line);

// CCW rectangle with center c, half extents (hx, hy), rotated by angle (rad).
Polygon make_rectangle(const Vec2& c, double hx, double hy, double angle);

} // namespace chanform
