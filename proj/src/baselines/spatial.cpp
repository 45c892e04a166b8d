#include "ssin/baselines/spatial.hpp"

#include "ssin/error.hpp"

namespace ssin::baselines {

Points to_points(const std::vector<geom::Station>& stations) {
    Points xy(static_cast<Index>(stations.size()), 2);
    for (std::size_t i = 0; i < stations.size(); ++i) {
        xy.row(static_cast<Index>(i)) << stations[i].lat, stations[i].lon;
    }
    return xy;
}

Samples from_stations(const std::vector<geom::Station>& stations, const Vector& values) {
    SSIN_EXPECTS(static_cast<Index>(stations.size()) == values.size(), "one value per station required");
    return {to_points(stations), values, Metric::haversine};
}

Samples deduplicate(const Samples& s, double tolerance) {
    std::vector<Index> rep;      // representative sample index per group
    std::vector<double> sum;
    std::vector<int> count;
    std::vector<Index> group(static_cast<std::size_t>(s.size()));
    for (Index i = 0; i < s.size(); ++i) {
        Index g = -1;
        for (std::size_t k = 0; k < rep.size(); ++k) {
            if (point_distance(s.metric, s.xy.row(i), s.xy.row(rep[k])) < tolerance) {
                g = static_cast<Index>(k);
                break;
            }
        }
        if (g < 0) {
            g = static_cast<Index>(rep.size());
            rep.push_back(i);
            sum.push_back(0.0);
            count.push_back(0);
        }
        sum[static_cast<std::size_t>(g)] += s.v[i];
        ++count[static_cast<std::size_t>(g)];
    }
    if (rep.size() == static_cast<std::size_t>(s.size())) return s;
    Samples out;
    out.metric = s.metric;
    out.xy.resize(static_cast<Index>(rep.size()), 2);
    out.v.resize(static_cast<Index>(rep.size()));
    for (std::size_t k = 0; k < rep.size(); ++k) {
        out.xy.row(static_cast<Index>(k)) = s.xy.row(rep[k]);
        out.v[static_cast<Index>(k)] = sum[k] / count[k];
    }
    return out;
}

}  // namespace ssin::baselines
