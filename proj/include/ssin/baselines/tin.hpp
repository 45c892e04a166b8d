#ifndef SSIN_BASELINES_TIN_HPP
#define SSIN_BASELINES_TIN_HPP

#include <array>
#include <optional>
#include <vector>

#include "ssin/baselines/spatial.hpp"

namespace ssin::baselines {

// Delaunay triangulation (Bowyer-Watson) with barycentric-linear
// interpolation. Geographic samples are projected onto an equirectangular
// plane in km around their centroid.
class Tin {
public:
    explicit Tin(const Samples& known);

    // Value inside the convex hull, nothing outside it.
    std::optional<double> operator()(const Point& query) const;
    // Outside the hull either nothing or, when allowed, the nearest sample.
    std::optional<double> interpolate(const Point& query, bool nearest_fallback) const;

    const std::vector<std::array<Index, 3>>& triangles() const { return tris_; }
    const std::vector<Eigen::Vector2d>& plane_points() const { return pts_; }

private:
    Eigen::Vector2d project(const Point& p) const;
    bool inside_hull(const Eigen::Vector2d& p) const;
    double nearest(const Eigen::Vector2d& p) const;

    Samples samples_;
    Eigen::Vector2d origin_ = Eigen::Vector2d::Zero();
    double cos_lat0_ = 1.0;
    std::vector<Eigen::Vector2d> pts_;
    std::vector<std::array<Index, 3>> tris_;
    std::vector<Eigen::Vector2d> hull_;  // counter-clockwise
};

std::optional<double> tin_interpolate(const Samples& known, const Point& query);

}  // namespace ssin::baselines

#endif  // SSIN_BASELINES_TIN_HPP
