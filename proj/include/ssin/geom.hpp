#ifndef SSIN_GEOM_HPP
#define SSIN_GEOM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace ssin::geom {

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kStdFloor = 1e-8;

struct Station {
    std::string id;
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]
};

bool valid_coordinates(double lat, double lon);

// Immutable roster. Ids are unique and coordinates are validated on construction.
class StationSet {
public:
    StationSet() = default;
    explicit StationSet(std::vector<Station> stations);

    std::size_t size() const { return stations_.size(); }
    bool empty() const { return stations_.empty(); }
    const Station& operator[](std::size_t i) const { return stations_[i]; }
    const std::vector<Station>& stations() const { return stations_; }
    auto begin() const { return stations_.begin(); }
    auto end() const { return stations_.end(); }

    // Index of `id`, or size() when absent.
    std::size_t find(const std::string& id) const;

    StationSet subset(const std::vector<std::size_t>& indices) const;

private:
    std::vector<Station> stations_;
    std::unordered_map<std::string, std::size_t> index_;
};

StationSet read_roster_csv(const std::string& path);
void write_roster_csv(const std::string& path, const StationSet& stations);

template <typename Scalar>
Scalar deg2rad(Scalar deg) {
    return deg * static_cast<Scalar>(M_PI / 180.0);
}

// Great-circle distance on the sphere of radius kEarthRadiusKm.
template <typename Scalar>
Scalar haversine_km(Scalar lat1, Scalar lon1, Scalar lat2, Scalar lon2) {
    using std::asin;
    using std::cos;
    using std::min;
    using std::sin;
    using std::sqrt;
    const Scalar dphi = deg2rad(lat2 - lat1);
    const Scalar dlam = deg2rad(lon2 - lon1);
    const Scalar s1 = sin(dphi / 2);
    const Scalar s2 = sin(dlam / 2);
    const Scalar a = s1 * s1 + cos(deg2rad(lat1)) * cos(deg2rad(lat2)) * s2 * s2;
    return 2 * static_cast<Scalar>(kEarthRadiusKm) * asin(min(Scalar(1), sqrt(a)));
}

// Clockwise bearing from north, in [0, 360). East/north offsets are taken on
// the tangent plane at the pair midpoint latitude, which makes the bearing
// exactly reciprocal: azimuth(b, a) == azimuth(a, b) + 180 (mod 360).
template <typename Scalar>
Scalar bearing_deg(Scalar lat1, Scalar lon1, Scalar lat2, Scalar lon2) {
    using std::atan2;
    using std::cos;
    Scalar dlon = lon2 - lon1;
    if (dlon > 180) dlon -= 360;
    if (dlon < -180) dlon += 360;
    const Scalar east = deg2rad(dlon) * cos(deg2rad((lat1 + lat2) / 2));
    const Scalar north = deg2rad(lat2 - lat1);
    if (east == Scalar(0) && north == Scalar(0)) return Scalar(0);
    Scalar az = atan2(east, north) * static_cast<Scalar>(180.0 / M_PI);
    if (az < 0) az += 360;
    if (az >= 360) az -= 360;
    return az;
}

double distance_km(const Station& a, const Station& b);
double azimuth_deg(const Station& a, const Station& b);

// Pluggable metric for the distance component of the relative position
// (e.g. road travel distance instead of the great circle).
class DistanceProvider {
public:
    virtual ~DistanceProvider() = default;
    virtual double distance_km(const Station& a, const Station& b) const = 0;
};

class HaversineDistance final : public DistanceProvider {
public:
    double distance_km(const Station& a, const Station& b) const override {
        return geom::distance_km(a, b);
    }
};

const DistanceProvider& default_distance();

struct RelPos {
    double distance_km = 0.0;
    double azimuth_deg = 0.0;
};

struct Moments {
    double mean = 0.0;
    double std = 0.0;  // population
};

struct RelPosStats {
    Moments distance;
    Moments azimuth;
};

RelPos relative_position(const Station& from, const Station& to, const DistanceProvider& metric);

inline double standardize(double v, const Moments& m) {
    return (v - m.mean) / std::max(m.std, kStdFloor);
}

inline Eigen::Vector2d standardize(const RelPos& r, const RelPosStats& s) {
    return {standardize(r.distance_km, s.distance), standardize(r.azimuth_deg, s.azimuth)};
}

// n x n relative positions of a roster, with global standardization moments
// taken over the off-diagonal entries.
class RelPosTable {
public:
    RelPosTable(std::size_t n, std::vector<RelPos> entries, RelPosStats stats);

    std::size_t size() const { return n_; }
    const RelPos& at(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
    const RelPosStats& stats() const { return stats_; }
    const std::vector<RelPos>& entries() const { return entries_; }

private:
    std::size_t n_;
    std::vector<RelPos> entries_;
    RelPosStats stats_;
};

RelPosTable build_relpos_table(const StationSet& stations,
                               const DistanceProvider& metric = default_distance());

// Row i*n + j holds the standardized (distance, azimuth) of pair (i, j).
Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> standardize_relpos(const RelPosTable& table);

// Mean and population std of lat/lon over a roster; used for absolute
// position inputs.
struct CoordStats {
    Moments lat;
    Moments lon;
};

CoordStats coordinate_stats(const StationSet& stations);

template <typename Derived>
Moments population_moments(const Eigen::DenseBase<Derived>& v) {
    Moments m;
    const auto n = static_cast<double>(v.size());
    if (v.size() == 0) return m;
    m.mean = v.derived().sum() / n;
    m.std = std::sqrt((v.derived().array() - m.mean).square().sum() / n);
    return m;
}

}  // namespace ssin::geom

#endif  // SSIN_GEOM_HPP
