#include "ssin/geom.hpp"

#include <fstream>
#include <iomanip>

#include "ssin/csv.hpp"
#include "ssin/error.hpp"

namespace ssin::geom {

bool valid_coordinates(double lat, double lon) {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
           lon >= -180.0 && lon <= 180.0;
}

StationSet::StationSet(std::vector<Station> stations) : stations_(std::move(stations)) {
    index_.reserve(stations_.size());
    for (std::size_t i = 0; i < stations_.size(); ++i) {
        const auto& s = stations_[i];
        if (s.id.empty()) throw ConfigError("station " + std::to_string(i) + " has an empty id");
        if (!valid_coordinates(s.lat, s.lon)) {
            throw ConfigError("station '" + s.id + "' has coordinates out of range");
        }
        if (!index_.emplace(s.id, i).second) throw ConfigError("duplicate station id '" + s.id + "'");
    }
}

std::size_t StationSet::find(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? stations_.size() : it->second;
}

StationSet StationSet::subset(const std::vector<std::size_t>& indices) const {
    std::vector<Station> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(stations_.at(i));
    return StationSet(std::move(out));
}

StationSet read_roster_csv(const std::string& path) {
    const auto t = csv::read(path);
    csv::expect_header(t, {"id", "lat", "lon"}, path);
    std::vector<Station> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto where = path + ":" + std::to_string(t.line_numbers[r]);
        const auto& row = t.rows[r];
        out.push_back({row[0], csv::parse_double(row[1], where), csv::parse_double(row[2], where)});
    }
    try {
        return StationSet(std::move(out));
    } catch (const ConfigError& e) {
        throw IngestError(path + ": " + e.what());
    }
}

void write_roster_csv(const std::string& path, const StationSet& stations) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "id,lat,lon\n" << std::setprecision(17);
    for (const auto& s : stations) out << s.id << ',' << s.lat << ',' << s.lon << '\n';
}

double distance_km(const Station& a, const Station& b) {
    return haversine_km(a.lat, a.lon, b.lat, b.lon);
}

double azimuth_deg(const Station& a, const Station& b) {
    return bearing_deg(a.lat, a.lon, b.lat, b.lon);
}

const DistanceProvider& default_distance() {
    static const HaversineDistance metric;
    return metric;
}

RelPos relative_position(const Station& from, const Station& to, const DistanceProvider& metric) {
    if (from.lat == to.lat && from.lon == to.lon) return {0.0, 0.0};
    return {metric.distance_km(from, to), azimuth_deg(from, to)};
}

RelPosTable::RelPosTable(std::size_t n, std::vector<RelPos> entries, RelPosStats stats)
    : n_(n), entries_(std::move(entries)), stats_(stats) {
    if (entries_.size() != n_ * n_) throw ContractViolation("RelPosTable: entry count != n*n");
}

RelPosTable build_relpos_table(const StationSet& stations, const DistanceProvider& metric) {
    const auto n = stations.size();
    if (n < 2) throw ConfigError("relative-position table needs at least 2 stations");
    std::vector<RelPos> entries(n * n);
    Eigen::VectorXd dist(static_cast<Eigen::Index>(n * (n - 1)));
    Eigen::VectorXd azim(dist.size());
    Eigen::Index k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto r = relative_position(stations[i], stations[j], metric);
            entries[i * n + j] = r;
            dist[k] = r.distance_km;
            azim[k] = r.azimuth_deg;
            ++k;
        }
    }
    return RelPosTable(n, std::move(entries), {population_moments(dist), population_moments(azim)});
}

Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> standardize_relpos(const RelPosTable& table) {
    const auto n = table.size();
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> out(n * n, 2);
    for (std::size_t p = 0; p < n * n; ++p) {
        out.row(static_cast<Eigen::Index>(p)) = standardize(table.entries()[p], table.stats()).transpose();
    }
    return out;
}

CoordStats coordinate_stats(const StationSet& stations) {
    Eigen::VectorXd lat(static_cast<Eigen::Index>(stations.size()));
    Eigen::VectorXd lon(lat.size());
    for (std::size_t i = 0; i < stations.size(); ++i) {
        lat[static_cast<Eigen::Index>(i)] = stations[i].lat;
        lon[static_cast<Eigen::Index>(i)] = stations[i].lon;
    }
    return {population_moments(lat), population_moments(lon)};
}

}  // namespace ssin::geom
