#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gridpulse::geo {

inline constexpr double kEarthRadiusKm = 6371.0;

template <typename Scalar>
struct LatLon {
    Scalar lat_deg{0};
    Scalar lon_deg{0};

    friend bool operator==(const LatLon&, const LatLon&) = default;
};

using GeoPoint = LatLon<double>;

template <typename Scalar>
constexpr Scalar to_radians(Scalar deg) {
    return deg * std::numbers::pi_v<Scalar> / Scalar(180);
}

template <typename Scalar>
constexpr Scalar to_degrees(Scalar rad) {
    return rad * Scalar(180) / std::numbers::pi_v<Scalar>;
}

/// Wraps an angle difference in radians into [-pi, pi].
template <typename Scalar>
Scalar wrap_pi(Scalar a) {
    constexpr Scalar pi = std::numbers::pi_v<Scalar>;
    while (a > pi) a -= 2 * pi;
    while (a < -pi) a += 2 * pi;
    return a;
}

template <typename Scalar>
Scalar haversine_km(const LatLon<Scalar>& a, const LatLon<Scalar>& b,
                    Scalar radius_km = Scalar(kEarthRadiusKm)) {
    using std::asin;
    using std::cos;
    using std::min;
    using std::sin;
    using std::sqrt;
    const Scalar phi1 = to_radians(a.lat_deg);
    const Scalar phi2 = to_radians(b.lat_deg);
    const Scalar dphi = phi2 - phi1;
    const Scalar dlambda = wrap_pi(to_radians(b.lon_deg - a.lon_deg));
    const Scalar s1 = sin(dphi / 2);
    const Scalar s2 = sin(dlambda / 2);
    const Scalar h = s1 * s1 + cos(phi1) * cos(phi2) * s2 * s2;
    return 2 * radius_km * asin(min(Scalar(1), sqrt(h)));
}

/// Great-circle midpoint of two points.
template <typename Scalar>
LatLon<Scalar> midpoint(const LatLon<Scalar>& a, const LatLon<Scalar>& b) {
    using std::atan2;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Scalar phi1 = to_radians(a.lat_deg);
    const Scalar phi2 = to_radians(b.lat_deg);
    const Scalar lambda1 = to_radians(a.lon_deg);
    const Scalar dlambda = wrap_pi(to_radians(b.lon_deg - a.lon_deg));
    const Scalar bx = cos(phi2) * cos(dlambda);
    const Scalar by = cos(phi2) * sin(dlambda);
    const Scalar phi = atan2(sin(phi1) + sin(phi2), sqrt((cos(phi1) + bx) * (cos(phi1) + bx) + by * by));
    const Scalar lambda = lambda1 + atan2(by, cos(phi1) + bx);
    return {to_degrees(phi), to_degrees(wrap_pi(lambda))};
}

/// Closest point of segment [a, b] to `p`, found in an equirectangular
/// projection centred on `p`; the returned distance is the haversine
/// distance from `p` to that point.
template <typename Scalar>
Scalar point_segment_distance_km(const LatLon<Scalar>& p, const LatLon<Scalar>& a,
                                 const LatLon<Scalar>& b,
                                 Scalar radius_km = Scalar(kEarthRadiusKm)) {
    using std::clamp;
    using std::cos;
    const Scalar coslat = cos(to_radians(p.lat_deg));
    auto project = [&](const LatLon<Scalar>& q) {
        const Scalar x = wrap_pi(to_radians(q.lon_deg - p.lon_deg)) * coslat;
        const Scalar y = to_radians(q.lat_deg - p.lat_deg);
        return std::pair{x, y};
    };
    const auto [ax, ay] = project(a);
    const auto [bx, by] = project(b);
    const Scalar dx = bx - ax;
    const Scalar dy = by - ay;
    const Scalar len2 = dx * dx + dy * dy;
    Scalar t = 0;
    if (len2 > Scalar(0)) t = clamp(-(ax * dx + ay * dy) / len2, Scalar(0), Scalar(1));
    if (t == Scalar(0)) return haversine_km(p, a, radius_km);
    if (t == Scalar(1)) return haversine_km(p, b, radius_km);
    const Scalar fx = ax + t * dx;
    const Scalar fy = ay + t * dy;
    const LatLon<Scalar> foot{p.lat_deg + to_degrees(fy),
                              p.lon_deg + (coslat > Scalar(0) ? to_degrees(fx / coslat) : Scalar(0))};
    return haversine_km(p, foot, radius_km);
}

}  // namespace gridpulse::geo
