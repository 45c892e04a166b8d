#ifndef SSIN_BASELINES_SPATIAL_HPP
#define SSIN_BASELINES_SPATIAL_HPP

#include <Eigen/Core>

#include "ssin/geom.hpp"

namespace ssin::baselines {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Point = Eigen::Vector2d;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// planar: Euclidean on (x, y). haversine: rows are (lat, lon) degrees and
// distances are great-circle km.
enum class Metric { planar, haversine };

template <typename A, typename B>
double point_distance(Metric metric, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (metric == Metric::planar) return (a - b).norm();
    return geom::haversine_km(a(0), a(1), b(0), b(1));
}

// Known samples: one location per row of `xy`, aligned with `v`.
struct Samples {
    Points xy;
    Vector v;
    Metric metric = Metric::haversine;

    Index size() const { return v.size(); }
    Point at(Index i) const { return xy.row(i).transpose(); }
};

Samples from_stations(const std::vector<geom::Station>& stations, const Vector& values);
Points to_points(const std::vector<geom::Station>& stations);

// Locations closer than this are treated as the same point.
inline constexpr double kCoincidentKm = 1e-9;

// Collapses coincident locations to one sample holding their mean value.
Samples deduplicate(const Samples& s, double tolerance = kCoincidentKm);

}  // namespace ssin::baselines

#endif  // SSIN_BASELINES_SPATIAL_HPP
